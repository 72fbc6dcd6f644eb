"""Study drivers: discretization convergence, multigrid cycles, cost reports.

These produce plain row dicts so the service, the CLI, and the tests all
share one code path; render_csv turns them into the documented CSV layouts.
"""

import io
import time

import numpy as np

from .basis import eval_matrix, gl_nodes_weights, reference_element
from .mesh import build_cartesian
from .multigrid import attach_smoothers, build_hierarchy, fmg, mg_preconditioner, solve_mg
from .perfmodel import (
    KNL_MODEL,
    postprocess_flops,
    projection_cost,
    roofline_point,
)
from .problem import manufactured_problem
from .trace import TraceSystem, flop_memop_count


class DivergenceError(RuntimeError):
    pass


def l2_errors(system, lam, with_postprocess=True):
    """L2 errors of the reconstructed solution against the problem's exact fields.

    Uses a GL rule three points richer than the trace order, so the error
    integrand is resolved well past the discretization floor.
    """
    mesh, spec, ops = system.mesh, system.spec, system.ops
    if spec.exact_u is None or spec.exact_flux is None:
        raise ValueError("problem has no exact solution to measure against")
    q, u = system.reconstruct_all(lam)
    rule = gl_nodes_weights(ops.p + 2)
    E2 = np.kron(eval_matrix(ops.ref.basis, rule.nodes), eval_matrix(ops.ref.basis, rule.nodes))
    w2 = np.kron(rule.quad_weights, rule.quad_weights)
    jac = mesh.dx * mesh.dy / 4.0
    nb = ops.nb

    ustar = None
    Es2 = None
    if with_postprocess:
        ustar = system.postprocess_all(q, u)
        star_basis = reference_element(ops.p + 1).basis
        Es = eval_matrix(star_basis, rule.nodes)
        Es2 = np.kron(Es, Es)

    err_u = err_q = err_s = 0.0
    half = (rule.nodes + 1.0) / 2.0
    for e in range(mesh.n_elems):
        x0, y0 = mesh.elem_origin(e)
        X, Y = np.meshgrid(x0 + mesh.dx * half, y0 + mesh.dy * half)
        X, Y = X.ravel(), Y.ravel()
        ue = np.asarray(spec.exact_u(X, Y), dtype=float)
        fx, fy = spec.exact_flux(X, Y)
        err_u += jac * w2 @ (E2 @ u[e] - ue) ** 2
        err_q += jac * w2 @ ((E2 @ q[e][:nb] - fx) ** 2 + (E2 @ q[e][nb:] - fy) ** 2)
        if with_postprocess:
            err_s += jac * w2 @ (Es2 @ ustar[e] - ue) ** 2
    out = {"err_u": float(np.sqrt(err_u)), "err_q": float(np.sqrt(err_q))}
    if with_postprocess:
        out["err_ustar"] = float(np.sqrt(err_s))
    return out


def _solve(system, solver, levels=None):
    if solver == "direct":
        return system.solve_direct()
    if solver == "cg":
        x, _ = system.solve_cg()
        return x
    if solver == "mg":
        x, mon = solve_mg(levels)
        return x
    if solver == "pcg":
        x, _ = system.solve_cg(precond=mg_preconditioner(levels))
        return x
    raise ValueError(f"unknown solver {solver!r}")


def convergence_study(orders, sizes, tau=1.0, solver="direct", threads=1, spec=None):
    """Error/rate table of the verification problem over orders and mesh sizes."""
    spec = spec or manufactured_problem(tau)
    rows = []
    for p in orders:
        prev = None
        for n in sizes:
            system = TraceSystem(build_cartesian(n, n), p, spec, threads=threads)
            levels = None
            if solver in ("mg", "pcg"):
                levels = build_hierarchy(system.mesh, p, spec, smoother="baseline", threads=threads)
            lam = _solve(system, solver, levels)
            errs = l2_errors(system, lam)
            row = {"p": p, "n": n, **errs,
                   "rate_u": "", "rate_ustar": "", "rate_q": ""}
            if prev is not None:
                for key, rate in (("err_u", "rate_u"), ("err_ustar", "rate_ustar"),
                                  ("err_q", "rate_q")):
                    if prev[key] > 0 and errs[key] > 0:
                        row[rate] = float(np.log2(prev[key] / errs[key]))
            rows.append(row)
            prev = errs
    return rows


def check_rates(rows, floor=1e-13, slack=0.15, last_pairs=2):
    """Observed-rate shortfalls against the optimal orders (u, q: p+1; u*: p+2).

    Only the finest `last_pairs` refinements per order are judged (coarser
    pairs are pre-asymptotic); pairs whose error sits below the roundoff
    floor are skipped.
    """
    failures = []
    by_p = {}
    for row in rows:
        by_p.setdefault(row["p"], []).append(row)
    for p, group in by_p.items():
        group = sorted(group, key=lambda r: r["n"])
        for row in group[-last_pairs:]:
            for key, rate_key, nominal in (("err_u", "rate_u", p + 1),
                                           ("err_q", "rate_q", p + 1),
                                           ("err_ustar", "rate_ustar", p + 2)):
                rate = row[rate_key]
                if rate == "" or row[key] < floor:
                    continue
                if rate < nominal - slack:
                    failures.append(
                        f"p={p} n={row['n']}: {rate_key}={rate:.3f} "
                        f"below {nominal - slack:.2f}"
                    )
    return failures


def mg_study(orders, n, cycle="v", nu1=2, nu2=2, fsai="baseline", omega=1.0,
             tau=1.0, threads=1, spec=None, tol=1e-12, max_cycles=50):
    """Cycle iteration counts and asymptotic rates; raises on divergence."""
    spec = spec or manufactured_problem(tau)
    mesh = build_cartesian(n, n)
    rows = []
    histories = {}
    for p in orders:
        levels = build_hierarchy(mesh, p, spec, smoother=None, threads=threads)
        attach_smoothers(levels, fsai, omega)
        if cycle == "fmg":
            t0 = time.time()
            x = fmg(levels)
            wall = time.time() - t0
            errs = l2_errors(levels[0].system, x, with_postprocess=False)
            direct = levels[0].system.solve_direct()
            errs_direct = l2_errors(levels[0].system, direct, with_postprocess=False)
            rows.append({
                "cycle": "fmg", "p": p, "n": n, "iterations": 1,
                "final_residual": float(np.linalg.norm(
                    levels[0].rhs - levels[0].matvec(x))),
                "rho": "",
                "err_u_fmg": errs["err_u"], "err_u_direct": errs_direct["err_u"],
                "seconds": wall,
            })
            continue
        t0 = time.time()
        x, mon = solve_mg(levels, cycle=cycle, nu1=nu1, nu2=nu2,
                          tol=tol, max_cycles=max_cycles)
        wall = time.time() - t0
        if mon.diverged():
            raise DivergenceError(f"{cycle}-cycle diverged at p={p}, n={n}")
        fine_complexity = levels[0].smoother.complexity if levels[0].smoother else 1.0
        rows.append({
            "cycle": cycle, "p": p, "n": n,
            "iterations": len(mon.residuals) - 1,
            "final_residual": mon.residuals[-1],
            "rho": mon.asymptotic_rate(),
            "complexity": fine_complexity,
            "seconds": wall,
        })
        histories[p] = mon
    return rows, histories


def matvec_report(orders, sizes, tau=1.0, spec=None):
    """Analytic matvec cost counters for the free and CSR modes."""
    spec = spec or manufactured_problem(tau)
    rows = []
    for p in orders:
        for n in sizes:
            system = TraceSystem(build_cartesian(n, n), p, spec)
            for mode in ("free", "csr"):
                c = flop_memop_count(system, mode)
                rows.append({"mode": mode, "p": p, "mesh": f"{n}x{n}", **c})
    return rows


def ai_table(orders=range(0, 5)):
    """Arithmetic-intensity table of the local-solver cost model."""
    reference = {0: 0.84, 1: 1.41, 2: 2.60, 3: 4.33, 4: 6.56}
    rows = []
    for p in orders:
        c = projection_cost(p, p)
        rows.append({"p": p, "flops": c["flops"], "memops": c["memops"],
                     "ai": c["ai"], "ai_reference": reference.get(p, "")})
    return rows


def roofline_table(machine=None, orders=range(0, 5)):
    machine = machine or KNL_MODEL
    rows = []
    for p in orders:
        c = projection_cost(p, p)
        r = roofline_point(machine, c["flops"], c["memops"])
        rows.append({"p": p, "machine": machine.label, **r})
    return rows


def work_precision_study(orders, n=16, tau=1.0, solver="direct", threads=1, spec=None):
    """FLOPs-vs-error comparison: solve at order p+1 versus postprocess at p.

    Work is the analytic per-element count: the local-solver generation model
    for every route, plus the dense (p+2)^2 Neumann solve for the
    postprocessed one.  Errors are measured, not modeled.
    """
    spec = spec or manufactured_problem(tau)
    needed = sorted(set(orders) | {p + 1 for p in orders})
    errs = {}
    mesh = build_cartesian(n, n)
    for q in needed:
        system = TraceSystem(mesh, q, spec, threads=threads)
        lam = _solve(system, solver)
        errs[q] = l2_errors(system, lam)
    n_elems = mesh.n_elems
    rows = []
    for p in orders:
        solve_flops = n_elems * projection_cost(p + 1, p + 1)["flops"]
        post_flops = n_elems * (projection_cost(p, p)["flops"] + postprocess_flops(p))
        rows.append({
            "p": p,
            "flops_solve_higher": int(solve_flops),
            "err_u_higher": errs[p + 1]["err_u"],
            "flops_postprocessed": int(post_flops),
            "err_ustar": errs[p]["err_ustar"],
            "postprocess_wins": bool(
                post_flops < solve_flops and errs[p]["err_ustar"] < errs[p + 1]["err_u"]
            ),
        })
    return rows


def crossover_order(rows):
    """Smallest order at which the postprocessed route wins on both axes."""
    for row in rows:
        if row["postprocess_wins"]:
            return row["p"]
    return None


def render_csv(rows, columns=None):
    """Rows of dicts -> CSV text with a header line."""
    import csv

    if not rows:
        return ""
    columns = columns or list(rows[0].keys())
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def monitor_csv(monitor):
    """Residual history of one run: iteration, residual, rho."""
    rows = [{"iteration": 0, "residual": monitor.residuals[0], "rho": ""}]
    for i, rho in enumerate(monitor.rho):
        rows.append({"iteration": i + 1, "residual": monitor.residuals[i + 1], "rho": rho})
    return render_csv(rows)
