"""Acceptance suite: one test per numbered criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.  Shared heavy artifacts (the convergence table and the
multigrid hierarchies) are built once per session.
"""

import time

import numpy as np
import pytest

from hdgmg.basis import eval_matrix, gl_nodes_weights, gll_nodes_weights
from hdgmg.mesh import build_cartesian
from hdgmg.multigrid import attach_smoothers, build_hierarchy, fmg, solve_mg
from hdgmg.problem import manufactured_problem
from hdgmg.studies import ai_table, l2_errors, work_precision_study, crossover_order
from hdgmg.trace import TraceSystem

from oracles import solve_monolithic, condensed_solution

SPEC = manufactured_problem()
ROUNDOFF_FLOOR = 1e-13


def report(criterion, ok, detail):
    print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


@pytest.fixture(scope="session")
def convergence_table():
    t0 = time.time()
    table = {}
    for p in (3, 4, 5):
        for n in (8, 16, 32):
            system = TraceSystem(build_cartesian(n, n), p, SPEC)
            table[p, n] = l2_errors(system, system.solve_direct())
    return table, time.time() - t0


@pytest.fixture(scope="session")
def hierarchies():
    t0 = time.time()
    mesh = build_cartesian(16, 16)
    levels = {p: build_hierarchy(mesh, p, SPEC, smoother=None) for p in range(2, 9)}
    return levels, time.time() - t0


def rate(table, p, key, n):
    return np.log2(table[p, n // 2][key] / table[p, n][key])


def test_criterion_1_discretization_rates(convergence_table):
    table, seconds = convergence_table
    failures = []
    for p in (3, 4, 5):
        for n in (16, 32):
            for key, bound in (("err_u", p + 0.85), ("err_q", p + 0.85),
                               ("err_ustar", p + 1.85)):
                if table[p, n][key] < ROUNDOFF_FLOOR:
                    continue  # below the roundoff floor: pair skipped
                r = rate(table, p, key, n)
                if r < bound:
                    failures.append(f"p={p} N={n} {key}: rate {r:.3f} < {bound:.2f}")
    ok = not failures and seconds < 300.0
    detail = (f"rates over N=8->16->32 for p in {{3,4,5}} "
              f"({seconds:.0f}s build+solve)")
    if failures:
        detail += "; " + "; ".join(failures)
    assert report(1, ok, detail)


def test_criterion_2_absolute_errors(convergence_table):
    table, _ = convergence_table
    err_u = table[4, 16]["err_u"]
    err_star = table[4, 16]["err_ustar"]
    ok_u = 5.37e-10 / 3 <= err_u <= 5.37e-10 * 3
    ok_star = 2.75e-12 / 3 <= err_star <= 2.75e-12 * 3
    # same check against the p=3, N=32 reference magnitude
    ok_aux = 2.33e-9 / 3 <= table[3, 32]["err_u"] <= 2.33e-9 * 3
    ok = ok_u and ok_star and ok_aux
    assert report(2, ok, f"p=4 N=16: err_u={err_u:.2e} (ref 5.37e-10), "
                         f"err_u*={err_star:.2e} (ref 2.75e-12), "
                         f"p=3 N=32 err_u={table[3, 32]['err_u']:.2e} (ref 2.33e-09)")


def test_criterion_3_condensation_oracle():
    t0 = time.time()
    mesh = build_cartesian(2, 2)
    worst = 0.0
    for p in (1, 2, 3):
        qm, um, lamm = solve_monolithic(mesh, p, SPEC)
        qc, uc, lamc, _ = condensed_solution(mesh, p, SPEC)
        for ref, got in ((qm, qc), (um, uc), (lamm, lamc)):
            worst = max(worst, np.abs(ref - got).max() / np.abs(ref).max())
    ok = worst < 1e-10
    assert report(3, ok, f"monolithic vs condensed, 2x2, p in {{1,2,3}}: "
                         f"max rel diff {worst:.2e} ({time.time()-t0:.1f}s)")


def test_criterion_4_matvec_oracle():
    t0 = time.time()
    worst = 0.0
    for n in (2, 4, 8):
        for p in (1, 2, 3, 5):
            system = TraceSystem(build_cartesian(n, n), p, SPEC)
            A = system.assemble_csr()
            rng = np.random.default_rng(1000 * n + p)
            for _ in range(100):
                x = rng.standard_normal(system.ndof)
                ref = A @ x
                diff = np.abs(system.matvec_free(x) - ref).max()
                worst = max(worst, diff / max(1.0, np.abs(ref).max()))
    ok = worst < 1e-12
    assert report(4, ok, f"matrix-free vs CSR, 100 vectors x 12 systems: "
                         f"max rel diff {worst:.2e} ({time.time()-t0:.1f}s)")


def test_criterion_5_vcycle_rates(hierarchies):
    levels, build_seconds = hierarchies
    t0 = time.time()
    rates = {}
    for p in range(2, 9):
        attach_smoothers(levels[p], "baseline")
        _, mon = solve_mg(levels[p], cycle="v", nu1=2, nu2=2)
        rates[p] = mon.asymptotic_rate()
    seconds = build_seconds + time.time() - t0
    ok = all(r <= 0.25 for r in rates.values()) and seconds < 600.0
    assert report(5, ok, "baseline FSAI V-cycle rho on 16x16: "
                  + ", ".join(f"p={p}: {r:.3f}" for p, r in rates.items())
                  + f" ({seconds:.0f}s incl. hierarchy builds)")


def test_criterion_6_aggressive_fsai(hierarchies):
    levels, _ = hierarchies
    details = []
    ok = True
    for p in (2, 4, 6):
        attach_smoothers(levels[p], "aggressive")
        x, mon = solve_mg(levels[p], cycle="v", tol=1e-13)
        iters = len(mon.residuals) - 1
        relres = mon.residuals[-1] / mon.residuals[0]
        comp = levels[p][0].smoother.complexity
        ok = ok and iters <= 9 and relres <= 1e-13 and 2.0 <= comp <= 3.0
        details.append(f"p={p}: {iters} cycles, relres {relres:.1e}, "
                       f"complexity {comp:.2f}")
    assert report(6, ok, "aggressive FSAI to 1e-13: " + "; ".join(details))


def test_criterion_7_fmg(hierarchies):
    levels, _ = hierarchies
    details = []
    ok = True
    for p in (2, 3, 4, 5, 6):
        attach_smoothers(levels[p], "aggressive")
        x = fmg(levels[p])
        fine = levels[p][0].system
        e_fmg = l2_errors(fine, x, with_postprocess=False)["err_u"]
        e_dir = l2_errors(fine, fine.solve_direct(), with_postprocess=False)["err_u"]
        ok = ok and e_fmg <= 2.0 * e_dir
        details.append(f"p={p}: {e_fmg/e_dir:.2f}x")
    assert report(7, ok, "single FMG sweep error vs direct solve: "
                  + ", ".join(details))


def test_criterion_8_quadrature_and_basis():
    worst = 0.0
    for p in range(1, 9):
        gll = gll_nodes_weights(p)
        for k in range(2 * p):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            err = abs(gll.quad_weights @ gll.nodes**k - exact)
            worst = max(worst, err / max(1.0, abs(exact)))
        gl = gl_nodes_weights(p)
        for k in range(2 * p + 2):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            err = abs(gl.quad_weights @ gl.nodes**k - exact)
            worst = max(worst, err / max(1.0, abs(exact)))
    ident = max(
        np.abs(eval_matrix(gll_nodes_weights(p), gll_nodes_weights(p).nodes)
               - np.eye(p + 1)).max()
        for p in range(1, 9)
    )
    ok = worst < 1e-12 and ident < 1e-13
    assert report(8, ok, f"quadrature exactness rel err {worst:.2e}, "
                         f"interpolation identity {ident:.2e}")


def test_criterion_9_ai_table():
    rows = ai_table()
    diffs = {r["p"]: abs(r["ai"] - r["ai_reference"]) for r in rows}
    ok = all(d <= 0.02 for d in diffs.values())
    assert report(9, ok, "local-solver AI vs bundled reference column: "
                  + ", ".join(f"p={p}: off by {d:.2f}" for p, d in diffs.items()))


def test_criterion_10_work_precision_crossover():
    t0 = time.time()
    rows = work_precision_study([1, 2, 3, 4], n=16)
    cross = crossover_order(rows)
    ok = cross is not None and cross <= 4
    assert report(10, ok, f"postprocessed order-p beats order-(p+1) from p={cross} "
                          f"({time.time()-t0:.0f}s)")
