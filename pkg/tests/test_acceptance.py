"""Acceptance suite: one test and one printed PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``. Example I takes about
half a minute and the Example II sweep about a minute.
"""

import math

import numpy as np
import pytest

from conftest import random_siso
from lpvdiss.certify import (
    CertificationProblem,
    build_F,
    build_Pi,
    fixed_p_gain,
    fixed_p_gain_exact,
    run_method,
    sched_operator,
    verify_cha,
    verify_fixed_p,
    verify_sdm,
)
from lpvdiss.datadict import DataDictionary, dd_residual, generate_dictionary, io_from_g
from lpvdiss.disc import disc_closed_loop_model
from lpvdiss.model import (
    InitialCondition,
    io_operator,
    l2_supply,
    realize_ss_siso,
    simulate,
    simulate_ss,
    supply_from_spec,
)
from lpvdiss.reproduce import ex3_dictionary, example_model, sweep
from lpvdiss.scheduling import BoxPolytope, sample_trajectories


def _report(capsys, name, checks):
    """Print one line for the criterion and return whether every check passed."""
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{label}={value}{'' if passed else ' (fail)'}" for label, passed, value in checks)
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


def _g(v):
    return "nan" if v is None or not math.isfinite(v) else f"{v:.6f}"


# -- 1 ------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_1_example_one(capsys):
    model = example_model("ex1")
    data = generate_dictionary(model, 42, seed=0)
    pr = CertificationProblem(data, 10, 3, None, model.scheduling, n_r=model.n_r)
    cha = run_method("CHA", pr).gamma
    mba = run_method("MBA", pr, model=model).gamma
    sp = run_method("SP", pr, p_max=0.1).gamma
    checks = [
        ("CHA", abs(cha - 1.362) <= 0.02, _g(cha)),
        ("MBA", abs(mba - 1.362) <= 0.02, _g(mba)),
        ("|CHA-MBA|", abs(cha - mba) <= 1e-3, f"{abs(cha - mba):.2e}"),
        ("SP>=CHA", sp >= cha - 1e-4, _g(sp)),
        ("SP in [1.6,2.1]", 1.6 <= sp <= 2.1, _g(sp)),
    ]
    assert _report(capsys, "criterion 1 (Example I, N=42, L=10, ell=3)", checks)


# -- 2 ------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_2_example_two_sweep(capsys):
    model = example_model("ex2")
    data = generate_dictionary(model, 33, seed=0)
    Ls = list(range(3, 9))
    rows = sweep(data, model.scheduling, Ls, 2, ["CHA", "CHAr", "SDM", "SP"], model, n_samples=1000, seed=0)
    g = {(r["L"], r["method"]): (r["gamma"] if r["gamma"] is not None else math.nan) for r in rows}
    t = {(r["L"], r["method"]): r["wall_time"] for r in rows}
    cha = [g[L, "CHA"] for L in Ls]
    checks = [("CHA(L) non-decreasing", all(b >= a - 1e-4 for a, b in zip(cha, cha[1:])),
               "[" + ", ".join(_g(v) for v in cha) + "]")]
    for L in Ls:
        checks.append((f"CHAr({L})<=CHA", g[L, "CHAr"] <= g[L, "CHA"] + 1e-4, _g(g[L, "CHAr"])))
        checks.append((f"SDM({L})<=CHAr", g[L, "SDM"] <= g[L, "CHAr"] + 1e-3, _g(g[L, "SDM"])))
    checks.append(("|CHA(8)-1.754|", abs(g[8, "CHA"] - 1.754) <= 0.1, _g(g[8, "CHA"])))
    checks.append(("|CHAr(8)-1.667|", abs(g[8, "CHAr"] - 1.667) <= 0.1, _g(g[8, "CHAr"])))
    ratio = t[8, "CHAr"] / max(t[8, "SP"], 1e-12)
    checks.append(("t_CHAr/t_SP", ratio > 10, f"{ratio:.1f}"))
    assert _report(capsys, "criterion 2 (Example II sweep L=3..8, N_s=1000)", checks)


# -- 3 ------------------------------------------------------------------------

def test_criterion_3a_representation_residual(capsys):
    model = example_model("ex1")
    data = generate_dictionary(model, 42, seed=0)
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(100):
        init = InitialCondition(rng.standard_normal((model.n_a, 1)), rng.uniform(-0.1, 0.1, (model.n_r, 1)),
                                rng.standard_normal((model.n_b, 1)))
        u = rng.standard_normal((10, 1))
        p = sample_trajectories(model.scheduling, 10, 1, rng)[0]
        y = simulate(model, u, p, init)
        worst = max(worst, dd_residual(data, 10, u, p, y)[0])
    assert _report(capsys, "criterion 3(a) data representation residual", [("max", worst < 1e-8, f"{worst:.2e}")])


def test_criterion_3b_finsler_agreement(capsys):
    mismatches = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        m = random_siso(rng, n_r=1)
        d = generate_dictionary(m, 20, seed=seed)
        pbar = rng.uniform(-1, 1, (4, 1))
        gam = fixed_p_gain_exact(CertificationProblem(d, 4, 1, None, m.scheduling, n_r=1), pbar)
        fac = 1.2 if rng.uniform() < 0.5 else 0.8
        pr = CertificationProblem(d, 4, 1, l2_supply(gam * fac), m.scheduling, n_r=1)
        kernel = "certified" if verify_fixed_p(pr, pbar)["holds"] else "not-certified"
        scalar = verify_sdm(pr, samples=pbar[None]).verdict
        matrix = verify_cha(pr, vertices=pbar[None]).verdict
        if not kernel == scalar == matrix:
            mismatches.append(seed)
    assert _report(capsys, "criterion 3(b) Finsler three-way agreement, 50 instances",
                   [("mismatches", not mismatches, str(mismatches))])


def test_criterion_3c_quadratic_form(capsys):
    model = example_model("ex1")
    data = generate_dictionary(model, 42, seed=0)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        L = int(rng.integers(2, 13))
        supply = supply_from_spec({"Q": rng.standard_normal(), "S": rng.standard_normal(),
                                   "R": rng.standard_normal()}, 1, 1)
        _, Pi_H = build_Pi(data, L, supply)
        g = rng.standard_normal(data.N - L + 1)
        u, y = io_from_g(data, L, g)
        w = np.hstack([u, y])
        direct = float(np.einsum("ki,ij,kj->", w, supply.matrix, w))
        worst = max(worst, abs(g @ Pi_H @ g - direct) / max(1.0, abs(direct)))
    assert _report(capsys, "criterion 3(c) quadratic-form identity", [("rel err", worst <= 1e-10, f"{worst:.2e}")])


def test_criterion_3d_decomposition(capsys):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(30):
        L, n_p = int(rng.integers(2, 9)), int(rng.integers(1, 4))
        N = 3 * L + 5
        data = DataDictionary(rng.standard_normal((N, 2)), rng.uniform(-1, 1, (N, n_p)),
                              rng.standard_normal((N, 1)))
        pr = CertificationProblem(data, L, 1)
        F3, F4, F5 = pr.sproc
        for _ in range(100):
            pbar = rng.uniform(-1, 1, (L, n_p))
            direct = build_F(pr, pbar)
            worst = max(worst, np.abs(direct - pr.F_affine(pbar)).max(),
                        np.abs(direct - (F3 - F4 @ sched_operator(pr, pbar) @ F5)).max())
    assert _report(capsys, "criterion 3(d) F decomposition three-way", [("max", worst <= 1e-12, f"{worst:.2e}")])


def test_criterion_3e_realization(capsys):
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        m = random_siso(rng)
        u = rng.standard_normal((25, 1))
        p = rng.uniform(-1, 1, (25, 1))
        y = simulate(m, u, p)
        y_ss = simulate_ss(realize_ss_siso(m), u, p)[1]
        worst = max(worst, np.abs(y - y_ss).max() / max(1.0, np.abs(y).max()))
    assert _report(capsys, "criterion 3(e) state-space realization equivalence",
                   [("rel err", worst <= 1e-9, f"{worst:.2e}")])


def test_criterion_3f_io_operator(capsys):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        m = random_siso(rng)
        ss = realize_ss_siso(m)
        L = int(rng.integers(1, 13))
        u = rng.standard_normal((L, 1))
        p = rng.uniform(-1, 1, (L, 1))
        worst = max(worst, np.abs(io_operator(ss, p) @ u[:, 0] - simulate(m, u, p)[:, 0]).max())
    assert _report(capsys, "criterion 3(f) io operator vs zero-state simulation",
                   [("max", worst <= 1e-10, f"{worst:.2e}")])


def test_criterion_3g_lti_reduction(capsys):
    model = example_model("ex1")
    c = 0.05
    data = generate_dictionary(model, 42, seed=0)
    pr = CertificationProblem(data, 8, 3, None, BoxPolytope([c], [c]), n_r=model.n_r)
    cha = verify_cha(pr).gamma
    bis = fixed_p_gain(pr, np.full((8, 1), c))
    assert _report(capsys, "criterion 3(g) constant scheduling: CHA vs fixed-trajectory bisection",
                   [("CHA", abs(cha - bis) <= 1e-3, _g(cha)), ("bisection", True, _g(bis))])


def test_criterion_3h_soundness(capsys):
    model = example_model("ex2")
    data = generate_dictionary(model, 33, seed=0)
    L, ell = 5, 2
    pr = CertificationProblem(data, L, ell, None, model.scheduling, n_r=model.n_r)
    ss = realize_ss_siso(model)
    checks = []
    for method in ("CHA", "CHAr"):
        out = run_method(method, pr)
        rng = np.random.default_rng(11)
        worst = math.inf
        for p in sample_trajectories(model.scheduling, L, 1000, rng):
            # random input and the worst-case direction of the free window
            v = np.linalg.svd(io_operator(ss, p[ell:]))[2][0]
            for w in (rng.standard_normal(L - ell), v):
                u = np.concatenate([np.zeros(ell), w])
                y = simulate(model, u[:, None], p)[:, 0]
                worst = min(worst, np.cumsum(out.gamma**2 * u[ell:] ** 2 - y[ell:] ** 2).min())
        checks.append((f"{method} gamma={_g(out.gamma)} worst partial sum",
                       out.certified and worst >= -1e-6, f"{worst:.2e}"))
    assert _report(capsys, "criterion 3(h) certified bounds hold on 1000 zero-prefix trajectories", checks)


# -- 4 ------------------------------------------------------------------------

def test_criterion_4_example_three(capsys):
    model = disc_closed_loop_model()
    data, _ = ex3_dictionary(0)
    init = InitialCondition.zero(model, np.ones((model.n_r, 1)))
    err = float(np.abs(simulate(model, data.u, data.p, init) - data.y).max())
    pr = CertificationProblem(data, 12, 4, None, model.scheduling, n_r=model.n_r)
    mba = run_method("MBA", pr, model=model).gamma
    sdm = run_method("SDM", pr, n_samples=100, rng=0).gamma
    sp = run_method("SP", pr).gamma
    checks = [
        ("embedding err", err <= 1e-9, f"{err:.2e}"),
        ("MBA<=SDM", mba <= sdm + 1e-3, f"{_g(mba)} vs {_g(sdm)}"),
        ("SDM<=SP", sdm <= sp + 1e-3, f"{_g(sdm)} vs {_g(sp)}"),
    ]
    assert _report(capsys, "criterion 4 (Example III, L=12, ell=4, 100 samples)", checks)
