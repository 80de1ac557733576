"""End-to-end pipelines for the three worked examples and the horizon sweep."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable, Optional

import numpy as np

from .certify import CertificationProblem, VerifyOptions, run_method
from .datadict import DataDictionary, check_pe, generate_dictionary
from .disc import DiscParams, disc_closed_loop_model, step_reference, unbalanced_disc_closed_loop
from .model import InitialCondition, LpvIoModel, load_model, simulate
from .scheduling import SchedulingSet, pe_samples

EXAMPLES = ("ex1", "ex2", "ex3")

# Reference values and the tolerances they are checked with.
EX1_GAMMA = 1.362
EX1_SP_RANGE = (1.6, 2.1)
EX2_CHA8, EX2_CHAR8 = 1.754, 1.667
EX3_TABLE = {"SP": 1.548, "SDM": 1.319, "MBA": 1.263}

SETTINGS = {
    "ex1": {"N": 42, "L": 10, "ell": 3, "seed": 0, "p_max": 0.1},
    "ex2": {"N": 33, "L": list(range(3, 9)), "ell": 2, "seed": 0, "n_samples": 1000},
    "ex3": {"N": 300, "L": 12, "ell": 4, "seed": 0, "n_samples": 100},
}


def example_model(name: str) -> LpvIoModel:
    """Bundled model of an example (``ex1``, ``ex2``) or the disc loop (``ex3``)."""
    if name == "ex3":
        return disc_closed_loop_model()
    if name not in ("ex1", "ex2"):
        raise ValueError(f"unknown example {name!r}")
    return load_model(resources.files("lpvdiss") / "data" / f"{name}.json")


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    target: object = None
    informational: bool = False

    def line(self) -> str:
        tag = "info" if self.informational else ("PASS" if self.passed else "FAIL")
        return f"[{tag}] {self.name}: value={_fmt(self.value)} target={_fmt(self.target)}"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


@dataclass
class Report:
    example: str
    seed: int
    checks: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    stage_errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.stage_errors and all(c.passed for c in self.checks if not c.informational)

    def add(self, name, passed, value=None, target=None, informational=False) -> Check:
        c = Check(name, bool(passed), value, target, informational)
        self.checks.append(c)
        return c

    def to_dict(self) -> dict:
        return {
            "example": self.example, "seed": self.seed, "passed": self.passed,
            "checks": [c.__dict__ for c in self.checks], "rows": self.rows,
            "values": self.values, "stage_errors": self.stage_errors,
        }


# -- sweep ------------------------------------------------------------------

def sweep(data: DataDictionary, scheduling: SchedulingSet, Ls: Iterable[int], ell: int,
          methods: Iterable[str], model: Optional[LpvIoModel] = None,
          options: Optional[VerifyOptions] = None, n_samples: int = 100, seed: int = 0,
          workers: int = 1, p_max: Optional[float] = None, nominal=None) -> list[dict]:
    """Minimal gamma per (L, method); failures are recorded in the row and the sweep goes on.

    Rows come back ordered by ``(L, position in methods)`` whatever the worker count.
    """
    cells = [(L, m) for L in Ls for m in methods]

    def run(cell):
        L, method = cell
        row = {"L": L, "method": method, "gamma": None, "verdict": "inconclusive",
               "wall_time": 0.0, "n_lmis": 0, "n_variables": 0, "error": ""}
        t0 = time.perf_counter()
        try:
            pr = CertificationProblem(data, L, ell, None, scheduling,
                                      n_r=model.n_r if model is not None else None)
            kw = {"model": model, "n_samples": n_samples, "rng": seed + L,
                  "p_max": p_max, "nominal": nominal}
            out = run_method(method, pr, options, **kw)
            row.update(gamma=out.gamma, verdict=out.verdict, wall_time=out.wall_time or
                       time.perf_counter() - t0, n_lmis=out.n_lmis, n_variables=out.n_variables)
        except Exception as exc:  # recorded per cell
            row.update(error=f"{type(exc).__name__}: {exc}", wall_time=time.perf_counter() - t0)
        return row

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


def _gamma(rows, L, method) -> float:
    for r in rows:
        if r["L"] == L and r["method"] == method and r["gamma"] is not None:
            return float(r["gamma"])
    return math.nan


# -- examples -----------------------------------------------------------------

def _pe_check(report: Report, data: DataDictionary, model: LpvIoModel, L: int, seed: int):
    samples = pe_samples(model.scheduling, L, 25, vertex_cap=1024, rng=seed)
    pe = check_pe(data, L, model.n_x, samples)
    report.add(f"PE at (L={L}, n_x={model.n_x})", pe.passed, pe.min_dim, pe.required)
    return pe


def reproduce_ex1(seed: Optional[int] = None, options: Optional[VerifyOptions] = None,
                  log: Callable[[str], None] = lambda s: None) -> Report:
    cfg = SETTINGS["ex1"]
    seed = cfg["seed"] if seed is None else seed
    rep = Report("ex1", seed)
    model = example_model("ex1")
    data = generate_dictionary(model, cfg["N"], seed=seed)
    _pe_check(rep, data, model, cfg["L"], seed)
    pr = CertificationProblem(data, cfg["L"], cfg["ell"], None, model.scheduling, n_r=model.n_r)
    out = {}
    for method, kw in (("MBA", {"model": model}), ("CHA", {}), ("SP", {"p_max": cfg["p_max"]})):
        log(f"ex1: running {method}")
        o = run_method(method, pr, options, **kw)
        out[method] = o
        rep.rows.append({"method": method, "gamma": o.gamma, "verdict": o.verdict,
                         "wall_time": o.wall_time, "n_lmis": o.n_lmis, "n_variables": o.n_variables})
    g = {k: (o.gamma if o.gamma is not None else math.nan) for k, o in out.items()}
    rep.values.update({f"gamma_{k}": v for k, v in g.items()})
    rep.add("|gamma_CHA - 1.362| <= 0.02", abs(g["CHA"] - EX1_GAMMA) <= 0.02, g["CHA"], EX1_GAMMA)
    rep.add("|gamma_MBA - 1.362| <= 0.02", abs(g["MBA"] - EX1_GAMMA) <= 0.02, g["MBA"], EX1_GAMMA)
    rep.add("|gamma_CHA - gamma_MBA| <= 1e-3", abs(g["CHA"] - g["MBA"]) <= 1e-3, abs(g["CHA"] - g["MBA"]), 1e-3)
    rep.add("gamma_SP >= gamma_CHA - 1e-4", g["SP"] >= g["CHA"] - 1e-4, g["SP"], g["CHA"])
    rep.add("gamma_SP in [1.6, 2.1]", EX1_SP_RANGE[0] <= g["SP"] <= EX1_SP_RANGE[1], g["SP"], list(EX1_SP_RANGE))
    return rep


def reproduce_ex2(seed: Optional[int] = None, options: Optional[VerifyOptions] = None,
                  Ls: Optional[Iterable[int]] = None, n_samples: Optional[int] = None,
                  log: Callable[[str], None] = lambda s: None) -> Report:
    cfg = SETTINGS["ex2"]
    seed = cfg["seed"] if seed is None else seed
    Ls = list(cfg["L"] if Ls is None else Ls)
    n_samples = cfg["n_samples"] if n_samples is None else n_samples
    rep = Report("ex2", seed)
    model = example_model("ex2")
    data = generate_dictionary(model, cfg["N"], seed=seed)
    _pe_check(rep, data, model, max(Ls), seed)
    methods = ["CHA", "SP", "CHAr", "SDM", "MBA"]
    log(f"ex2: sweeping L = {Ls}")
    rep.rows = sweep(data, model.scheduling, Ls, cfg["ell"], methods, model, options, n_samples, seed)
    cha = [_gamma(rep.rows, L, "CHA") for L in Ls]
    rep.values["gamma_CHA"] = cha
    mono = all(b >= a - 1e-4 for a, b in zip(cha, cha[1:]))
    rep.add("gamma_CHA(L) non-decreasing", mono, cha)
    for L in Ls:
        c, cr, sd = (_gamma(rep.rows, L, m) for m in ("CHA", "CHAr", "SDM"))
        rep.add(f"L={L}: gamma_CHAr <= gamma_CHA + 1e-4", cr <= c + 1e-4, cr, c)
        rep.add(f"L={L}: gamma_SDM <= gamma_CHAr + 1e-3", sd <= cr + 1e-3, sd, cr)
    Lmax = max(Ls)
    if Lmax == 8:
        c8, cr8 = _gamma(rep.rows, 8, "CHA"), _gamma(rep.rows, 8, "CHAr")
        rep.add("|gamma_CHA(8) - 1.754| <= 0.1", abs(c8 - EX2_CHA8) <= 0.1, c8, EX2_CHA8)
        rep.add("|gamma_CHAr(8) - 1.667| <= 0.1", abs(cr8 - EX2_CHAR8) <= 0.1, cr8, EX2_CHAR8)
        t = {r["method"]: r["wall_time"] for r in rep.rows if r["L"] == 8}
        ratio = t["CHAr"] / max(t["SP"], 1e-12)
        rep.add("t_CHAr(8) / t_SP(8) > 10", ratio > 10, ratio, 10)
    return rep


def ex3_dictionary(seed: int = 0, N: int = 300, params: Optional[DiscParams] = None, gains=None):
    r = step_reference(N, seed)
    return unbalanced_disc_closed_loop(r, params, gains)


def reproduce_ex3(seed: Optional[int] = None, options: Optional[VerifyOptions] = None,
                  params: Optional[DiscParams] = None, gains=None,
                  log: Callable[[str], None] = lambda s: None) -> Report:
    cfg = SETTINGS["ex3"]
    seed = cfg["seed"] if seed is None else seed
    rep = Report("ex3", seed)
    model = disc_closed_loop_model(params, gains)
    data, theta = ex3_dictionary(seed, cfg["N"], params, gains)
    y = simulate(model, data.u, data.p, InitialCondition.zero(model, np.ones((model.n_r, 1))))
    err = float(np.max(np.abs(y - data.y)))
    rep.values["embedding_error"] = err
    rep.add("LPV embedding reproduces e to 1e-9", err < 1e-9, err, 1e-9)
    _pe_check(rep, data, model, cfg["L"], seed)
    pr = CertificationProblem(data, cfg["L"], cfg["ell"], None, model.scheduling, n_r=model.n_r)
    g = {}
    for method, kw in (("MBA", {"model": model}), ("SDM", {"n_samples": cfg["n_samples"], "rng": seed}),
                       ("SP", {})):
        log(f"ex3: running {method}")
        o = run_method(method, pr, options, **kw)
        g[method] = o.gamma if o.gamma is not None else math.nan
        rep.rows.append({"method": method, "gamma": o.gamma, "verdict": o.verdict,
                         "wall_time": o.wall_time, "n_lmis": o.n_lmis, "n_variables": o.n_variables})
    rep.values.update({f"gamma_{k}": v for k, v in g.items()})
    rep.add("gamma_MBA <= gamma_SDM + 1e-3", g["MBA"] <= g["SDM"] + 1e-3, g["MBA"], g["SDM"])
    rep.add("gamma_SDM <= gamma_SP + 1e-3", g["SDM"] <= g["SP"] + 1e-3, g["SDM"], g["SP"])
    for k, v in EX3_TABLE.items():
        rep.add(f"gamma_{k} (placeholder physics)", True, g[k], v, informational=True)
    return rep


def reproduce(example: str, seed: Optional[int] = None, options: Optional[VerifyOptions] = None,
              log: Callable[[str], None] = lambda s: None) -> Report:
    fn = {"ex1": reproduce_ex1, "ex2": reproduce_ex2, "ex3": reproduce_ex3}.get(example)
    if fn is None:
        raise ValueError(f"unknown example {example!r}; choose from {EXAMPLES}")
    try:
        return fn(seed, options, log=log)
    except Exception as exc:  # stage failure fails the report
        rep = Report(example, SETTINGS[example]["seed"] if seed is None else seed)
        rep.stage_errors.append(f"{type(exc).__name__}: {exc}")
        return rep
