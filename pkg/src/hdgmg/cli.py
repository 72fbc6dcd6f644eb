"""Batch CLI: a thin HTTP client for the study service.

Without --server the requests run against the in-process app over an ASGI
transport, so the command works standalone; with --server they go to a
running instance (uvicorn hdgmg.service:app).  Results are written as CSV.
"""

import argparse
import sys
from pathlib import Path

import httpx


def _client(server):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process fallback: drive the app through the regular request path
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from fastapi.testclient import TestClient

        from .service import app

        return TestClient(app)


def _common_flags(sub):
    sub.add_argument("--p", type=int, help="single polynomial order (1..8)")
    sub.add_argument("--p-range", type=int, nargs=2, metavar=("LO", "HI"),
                     help="inclusive order range")
    sub.add_argument("--n", type=int, help="mesh size (N x N elements)")
    sub.add_argument("--n-range", type=int, nargs=2, metavar=("LO", "HI"),
                     help="mesh sizes LO, 2*LO, ... up to HI")
    sub.add_argument("--tau", type=float, default=1.0, help="stabilization (default 1)")
    sub.add_argument("--threads", type=int, default=1, help="assembly worker cap")
    sub.add_argument("--out", type=Path, help="output CSV path (default stdout)")
    sub.add_argument("--server", help="base URL of a running service; default in-process")


def _payload(args, extra=()):
    data = {"tau": args.tau, "threads": args.threads}
    if args.p is not None:
        data["p"] = args.p
    if args.p_range is not None:
        data["p_range"] = args.p_range
    if args.n is not None:
        data["n"] = args.n
    if args.n_range is not None:
        data["n_range"] = args.n_range
    for name in extra:
        data[name] = getattr(args, name)
    return data


def _post(args, path, payload):
    with _client(args.server) as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        sys.stderr.write(f"request failed ({resp.status_code}): {resp.text}\n")
        raise SystemExit(2)
    return resp.json()


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(f"wrote {path}")


def cmd_convergence(args):
    payload = _payload(args, ("solver",))
    payload["assert_rates"] = args.assert_rates
    result = _post(args, "/convergence", payload)
    _write(result["csv"], args.out)
    for line in result["rate_failures"]:
        sys.stderr.write(f"rate shortfall: {line}\n")
    return 0 if result["ok"] else 1


def cmd_mg(args):
    payload = _payload(args, ("cycle", "nu1", "nu2", "fsai", "omega"))
    result = _post(args, "/mg", payload)
    if result["diverged"]:
        sys.stderr.write("multigrid diverged\n")
        return 2
    _write(result["csv"], args.out)
    if args.out is not None:
        for p, text in result["histories"].items():
            _write(text, args.out.with_name(f"{args.out.stem}_history_p{p}.csv"))
    return 0


def cmd_perf(args):
    payload = _payload(args)
    payload["solver"] = args.solver
    if args.machine_model:
        from .perfmodel import load_machine_model

        try:
            model = load_machine_model(args.machine_model)
        except (OSError, ValueError) as exc:
            sys.stderr.write(f"bad machine model: {exc}\n")
            return 2
        payload["machine"] = {"peak_gflops": model.peak_flops / 1e9,
                              "peak_gbs": model.peak_bandwidth / 1e9,
                              "label": str(args.machine_model)}
    result = _post(args, "/perf", payload)
    if args.out is None:
        for key in ("ai_csv", "roofline_csv", "matvec_csv", "work_precision_csv"):
            sys.stdout.write(f"# {key}\n{result[key]}\n")
    else:
        stem = args.out
        _write(result["ai_csv"], stem.with_name(f"{stem.stem}_ai.csv"))
        _write(result["roofline_csv"], stem.with_name(f"{stem.stem}_roofline.csv"))
        _write(result["matvec_csv"], stem.with_name(f"{stem.stem}_matvec.csv"))
        if result["work_precision_csv"]:
            _write(result["work_precision_csv"],
                   stem.with_name(f"{stem.stem}_work_precision.csv"))
    if result["crossover_p"] is not None:
        print(f"postprocessing pays off from p = {result['crossover_p']}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hdgmg",
        description="HDG elliptic solver studies: convergence tables, multigrid "
                    "cycles, and analytic performance reports.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    conv = subs.add_parser("convergence", help="error/rate table on the built-in "
                                               "verification problem")
    _common_flags(conv)
    conv.add_argument("--solver", choices=("direct", "cg", "mg", "pcg"),
                      default="direct")
    conv.add_argument("--assert-rates", action="store_true",
                      help="exit nonzero if observed rates fall short")
    conv.set_defaults(func=cmd_convergence)

    mg = subs.add_parser("mg", help="multigrid cycles: iteration counts and rates")
    _common_flags(mg)
    mg.add_argument("--cycle", choices=("v", "w", "fmg"), default="v")
    mg.add_argument("--nu1", type=int, default=2, help="pre-smoothing steps")
    mg.add_argument("--nu2", type=int, default=2, help="post-smoothing steps")
    mg.add_argument("--fsai", choices=("baseline", "aggressive"), default="baseline")
    mg.add_argument("--omega", type=float, default=1.0, help="smoother damping scale")
    mg.set_defaults(func=cmd_mg)

    perf = subs.add_parser("perf", help="analytic cost tables and work-precision")
    _common_flags(perf)
    perf.add_argument("--solver", choices=("direct", "cg"), default="direct")
    perf.add_argument("--machine-model", type=Path,
                      help="key=value file: peak_gflops=..., peak_gbs=...")
    perf.set_defaults(func=cmd_perf)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
