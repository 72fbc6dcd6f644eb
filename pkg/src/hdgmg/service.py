"""HTTP service exposing the solver studies.

Each study endpoint takes a JSON config and returns the result rows plus the
rendered CSV text, so thin clients only have to write files.  Runs execute
synchronously in the worker thread pool; at the mesh sizes this solver
targets a study takes seconds to a few minutes.
"""

from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, field_validator, model_validator

from . import __version__
from .perfmodel import KNL_MODEL, MachineModel
from .studies import (
    DivergenceError,
    ai_table,
    check_rates,
    convergence_study,
    crossover_order,
    matvec_report,
    mg_study,
    monitor_csv,
    render_csv,
    roofline_table,
    work_precision_study,
)

app = FastAPI(title="hdgmg", version=__version__)


def _resolve_range(value, value_range, default, name):
    if value is not None and value_range is not None:
        raise ValueError(f"give either {name} or {name}_range, not both")
    if value is not None:
        return [value]
    if value_range is not None:
        lo, hi = value_range
        if name == "n":
            out = []
            while lo <= hi:
                out.append(lo)
                lo *= 2
            return out
        return list(range(lo, hi + 1))
    return default


class StudyConfig(BaseModel):
    """Common run parameters; p and n accept a single value or a range."""

    p: Optional[int] = Field(default=None, ge=1, le=8)
    p_range: Optional[tuple[int, int]] = None
    n: Optional[int] = Field(default=None, ge=1)
    n_range: Optional[tuple[int, int]] = None
    tau: float = Field(default=1.0, gt=0)
    threads: int = Field(default=1, ge=1)

    @field_validator("p_range", "n_range")
    @classmethod
    def _ordered(cls, v):
        if v is not None and v[0] > v[1]:
            raise ValueError("range must be (low, high)")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.p_range is not None and not (1 <= self.p_range[0] <= self.p_range[1] <= 8):
            raise ValueError("p_range must lie within [1, 8]")
        if self.p is not None and self.p_range is not None:
            raise ValueError("give either p or p_range, not both")
        if self.n is not None and self.n_range is not None:
            raise ValueError("give either n or n_range, not both")
        return self

    def orders(self, default):
        return _resolve_range(self.p, self.p_range, default, "p")

    def sizes(self, default):
        return _resolve_range(self.n, self.n_range, default, "n")


class ConvergenceRequest(StudyConfig):
    solver: Literal["direct", "cg", "mg", "pcg"] = "direct"
    assert_rates: bool = False


class ConvergenceResponse(BaseModel):
    rows: list[dict]
    csv: str
    rate_failures: list[str]
    ok: bool


class MgRequest(StudyConfig):
    cycle: Literal["v", "w", "fmg"] = "v"
    nu1: int = Field(default=2, ge=0)
    nu2: int = Field(default=2, ge=0)
    fsai: Literal["baseline", "aggressive"] = "baseline"
    omega: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _power_of_two(self):
        for n in self.sizes([16]):
            if n & (n - 1):
                raise ValueError(f"mesh size {n} is not a power of two")
        return self


class MgResponse(BaseModel):
    rows: list[dict]
    csv: str
    histories: dict[int, str]
    diverged: bool


class MachineSpec(BaseModel):
    peak_gflops: float = Field(gt=0)
    peak_gbs: float = Field(gt=0)
    label: str = "machine"


class PerfRequest(StudyConfig):
    machine: Optional[MachineSpec] = None
    work_precision: bool = True
    solver: Literal["direct", "cg"] = "direct"


class PerfResponse(BaseModel):
    ai_csv: str
    roofline_csv: str
    matvec_csv: str
    work_precision_csv: str
    crossover_p: Optional[int]


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/convergence", response_model=ConvergenceResponse)
def run_convergence(req: ConvergenceRequest):
    rows = convergence_study(req.orders([3, 4, 5]), req.sizes([2, 4, 8, 16, 32]),
                             tau=req.tau, solver=req.solver, threads=req.threads)
    failures = check_rates(rows)
    ok = not (req.assert_rates and failures)
    return ConvergenceResponse(rows=rows, csv=render_csv(rows),
                               rate_failures=failures, ok=ok)


@app.post("/mg", response_model=MgResponse)
def run_mg(req: MgRequest):
    sizes = req.sizes([16])
    if len(sizes) != 1:
        raise HTTPException(status_code=422, detail="mg runs take a single mesh size")
    try:
        rows, histories = mg_study(req.orders([2, 3, 4]), sizes[0], cycle=req.cycle,
                                   nu1=req.nu1, nu2=req.nu2, fsai=req.fsai,
                                   omega=req.omega, tau=req.tau, threads=req.threads)
    except DivergenceError:
        return MgResponse(rows=[], csv="", histories={}, diverged=True)
    return MgResponse(
        rows=rows, csv=render_csv(rows),
        histories={p: monitor_csv(m) for p, m in histories.items()},
        diverged=False,
    )


@app.post("/perf", response_model=PerfResponse)
def run_perf(req: PerfRequest):
    machine = KNL_MODEL
    if req.machine is not None:
        machine = MachineModel(req.machine.peak_gflops * 1e9,
                               req.machine.peak_gbs * 1e9, req.machine.label)
    ai_rows = ai_table()
    roof_rows = roofline_table(machine)
    matvec_rows = matvec_report(req.orders([1, 2, 3]), req.sizes([4, 8]), tau=req.tau)
    wp_csv = ""
    cross = None
    if req.work_precision:
        wp_rows = work_precision_study(req.orders([1, 2, 3, 4, 5]),
                                       n=req.sizes([16])[0], tau=req.tau,
                                       solver=req.solver, threads=req.threads)
        wp_csv = render_csv(wp_rows)
        cross = crossover_order(wp_rows)
    return PerfResponse(
        ai_csv=render_csv(ai_rows),
        roofline_csv=render_csv(roof_rows),
        matvec_csv=render_csv(matvec_rows),
        work_precision_csv=wp_csv,
        crossover_p=cross,
    )
