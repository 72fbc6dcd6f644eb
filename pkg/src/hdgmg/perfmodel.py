"""Analytic performance accounting: cost formulas, roofline, machine models.

All numbers here are arithmetic, never measurements; wall-clock values only
enter when the caller supplies them to roofline_point.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class MachineModel:
    """Roofline ceilings for one machine."""

    peak_flops: float  # FLOP/s
    peak_bandwidth: float  # bytes/s
    label: str = "machine"

    def __post_init__(self):
        if self.peak_flops <= 0 or self.peak_bandwidth <= 0:
            raise ValueError("machine model ceilings must be positive")


# default ceilings: a 64-core manycore part, 2199 GFLOP/s double precision
# and 300 GB/s STREAM-triad bandwidth
KNL_MODEL = MachineModel(2199e9, 300e9, "knl-7210")


def load_machine_model(path):
    """Two-line key=value file: peak_gflops=..., peak_gbs=..."""
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad machine-model line: {line!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = float(val)
    try:
        return MachineModel(values["peak_gflops"] * 1e9, values["peak_gbs"] * 1e9,
                            label=path)
    except KeyError as exc:
        raise ValueError(f"machine model missing key {exc}") from exc


def projection_cost(p, k=None):
    """Cost model for generating one element's condensed local solver.

    With N = 4(p+1)^2 local unknowns and M = 4(k+1) facet values, the model
    charges one dense solve, two matrix-vector products and a SAXPY:
        FLOPs  = 2N^2 - N + (2/3)N^3 + M(2N - 1) + 2M
        MEMOPs = 8(N^2 + NM + M + N)   [bytes]
    """
    if p < 0 or (k is not None and k < 0):
        raise ValueError("orders must be nonnegative")
    k = p if k is None else k
    n = 4 * (p + 1) ** 2
    m = 4 * (k + 1)
    flops = 2 * n * n - n + (2.0 / 3.0) * n**3 + m * (2 * n - 1) + 2 * m
    memops = 8 * (n * n + n * m + m + n)
    return {"flops": flops, "memops": memops, "ai": flops / memops}


def postprocess_flops(p):
    """Work of the order-raising local solve at order p.

    The (p+2)^2-square stiffness (plus the mean constraint) costs a dense
    factorization and solve, on top of assembling its (p+2)^4 entries.
    """
    if p < 1:
        raise ValueError("postprocessing needs p >= 1")
    m = (p + 2) ** 2 + 1
    nq = (p + 2) ** 2
    assemble = 2 * m * m * nq  # quadrature contraction per matrix entry pair
    return (2.0 / 3.0) * m**3 + 2 * m * m + assemble


def roofline_point(machine, flops, memops, measured_seconds=None):
    """Attainable throughput at this intensity; achieved only if timed."""
    ai = flops / memops if memops else float("inf")
    attainable = min(machine.peak_flops, ai * machine.peak_bandwidth)
    out = {"ai": ai, "attainable_gflops": attainable / 1e9}
    if measured_seconds is not None:
        out["achieved_gflops"] = flops / measured_seconds / 1e9
    return out
