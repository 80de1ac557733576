import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_siso
from lpvdiss.certify import (
    CertificationError,
    CertificationProblem,
    VerificationOutcome,
    fixed_p_gain,
    fixed_p_gain_exact,
    load_outcome,
    run_method,
    save_outcome,
    verify_cha,
    verify_cha_rate,
    verify_fixed_p,
    verify_mba,
    verify_sdm,
    verify_sp,
)
from lpvdiss.datadict import DataDictionary, generate_dictionary
from lpvdiss.lmi.linalg import min_eig, nullspace_basis, range_basis
from lpvdiss.model import LpvIoModel, SupplyRate, io_operator, l2_supply, realize_ss_siso, simulate
from lpvdiss.scheduling import BoxPolytope, enumerate_vertices, sample_trajectories


def _static_gain_problem(L=3, ell=1, N=30):
    # y_k = (1 + 0.5 p_k) u_k; worst gain 1.5 at p = 1
    a = np.zeros((1, 2, 1, 1))
    b = np.zeros((2, 2, 1, 1))
    b[0, 0] = 1.0
    b[0, 1] = 0.5
    m = LpvIoModel(a, b, scheduling=BoxPolytope([-1.0], [1.0]))
    d = generate_dictionary(m, N, seed=3)
    return m, CertificationProblem(d, L, ell, None, m.scheduling, n_r=1)


@pytest.fixture(scope="module")
def ex2_small(ex2_model):
    d = generate_dictionary(ex2_model, 40, seed=1)
    return CertificationProblem(d, 4, 2, None, ex2_model.scheduling, n_r=ex2_model.n_r)


# -- fixed scheduling trajectory --------------------------------------------

def test_fixed_p_extremes(ex1_problem):
    pbar = np.zeros((10, 1))
    assert verify_fixed_p(ex1_problem, pbar, s=1e8)["holds"]
    assert not verify_fixed_p(ex1_problem, pbar, s=0.0)["holds"]
    with pytest.raises(CertificationError):
        verify_fixed_p(ex1_problem, pbar)


def test_fixed_p_bisection_matches_closed_form(ex1_problem, ex2_problem):
    rng = np.random.default_rng(5)
    for prob in (ex1_problem, ex2_problem):
        for _ in range(5):
            pbar = sample_trajectories(prob.scheduling, prob.L, 1, rng)[0]
            g1 = fixed_p_gain(prob, pbar)
            g2 = fixed_p_gain_exact(prob, pbar)
            assert abs(g1 - g2) <= 2e-4


def test_fixed_p_below_vertex_bound_on_ex1(ex1_problem):
    # any single trajectory gives a lower bound on the worst-case gain 1.362
    g = fixed_p_gain(ex1_problem, np.zeros((10, 1)))
    assert 0.5 < g <= 1.362 + 0.02


def test_static_gain_all_methods_agree():
    m, prob = _static_gain_problem()
    cha = verify_cha(prob)
    mba = verify_mba(m, 2)
    assert cha.certified and mba.certified
    assert abs(cha.gamma - 1.5) < 1e-3
    assert abs(mba.gamma - 1.5) < 1e-3
    assert abs(fixed_p_gain_exact(prob, np.ones((3, 1))) - 1.5) < 1e-9
    sp = verify_sp(prob)
    assert sp.gamma >= cha.gamma - 1e-4


# -- property (g): frozen scheduling reduces to the LTI case -----------------

def test_constant_scheduling_matches_fixed_trajectory(ex1_model):
    c = 0.05
    frozen = ex1_model.with_scheduling(BoxPolytope([c], [c]))
    d = generate_dictionary(ex1_model, 42, seed=0)
    prob = CertificationProblem(d, 8, 3, None, frozen.scheduling, n_r=ex1_model.n_r)
    cha = verify_cha(prob)
    pbar = np.full((8, 1), c)
    assert cha.certified
    assert abs(cha.gamma - fixed_p_gain(prob, pbar)) <= 1e-3
    assert abs(cha.gamma - fixed_p_gain_exact(prob, pbar)) <= 1e-3


# -- rate bounds -------------------------------------------------------------

def test_vacuous_rate_bound_changes_nothing(ex2_model, ex2_small):
    lo, hi = ex2_model.scheduling.bounding_box()
    w = hi[0] - lo[0]
    loose = BoxPolytope(lo, hi, [-w], [w])
    prob = CertificationProblem(ex2_small.data, 4, 2, None, loose, n_r=ex2_model.n_r)
    a = verify_cha(ex2_small)
    b = verify_cha_rate(prob)
    assert abs(a.gamma - b.gamma) <= 1e-4


def test_frozen_rate_gives_worst_constant_trajectory(ex2_model, ex2_small):
    lo, hi = ex2_model.scheduling.bounding_box()
    frozen = BoxPolytope(lo, hi, [0.0], [0.0])
    prob = CertificationProblem(ex2_small.data, 4, 2, None, frozen, n_r=ex2_model.n_r)
    out = verify_cha_rate(prob)
    exact = max(fixed_p_gain_exact(prob, np.full((4, 1), v)) for v in (lo[0], hi[0]))
    assert out.certified
    assert abs(out.gamma - exact) <= 1e-3
    assert out.gamma <= verify_cha(ex2_small).gamma + 1e-4


def test_rate_method_needs_rate_bound(ex1_problem):
    with pytest.raises(CertificationError):
        verify_cha_rate(ex1_problem)


# -- S-procedure -------------------------------------------------------------

def test_sp_shrinking_ball_approaches_fixed_trajectory(ex2_small):
    nom = 0.1
    exact = fixed_p_gain_exact(ex2_small, np.full((4, 1), nom))
    prev = math.inf
    for r in (1e-2, 1e-3, 1e-4):
        g = verify_sp(ex2_small, p_max=r, nominal=[nom]).gamma
        assert g >= exact - 1e-4
        assert g <= prev + 1e-4
        prev = g
    assert prev - exact < 5e-3


def test_sp_psd_supply_shortcut(ex2_small):
    supply = SupplyRate(np.eye(1), np.zeros((1, 1)), np.zeros((1, 1)))
    prob = CertificationProblem(ex2_small.data, 4, 2, supply, ex2_small.scheduling)
    out = verify_sp(prob)
    assert out.certified and out.gamma is None


def test_sp_uses_two_scalar_multipliers(ex2_small):
    out = verify_sp(ex2_small)
    assert out.n_variables == 3    # s, mu, tau
    assert out.payload["tau"] >= -1e-9


# -- sampled multipliers -----------------------------------------------------

def test_sdm_single_sample_is_fixed_trajectory(ex2_small):
    pbar = np.full((1, 4, 1), ex2_small.scheduling.bounding_box()[1][0])
    exact = fixed_p_gain_exact(ex2_small, pbar[0])
    one = verify_sdm(ex2_small, samples=pbar)
    two = verify_sdm(ex2_small, samples=np.concatenate([pbar, pbar]))
    assert abs(one.gamma - exact) <= 1e-3
    assert abs(two.gamma - one.gamma) <= 1e-4


def test_sdm_is_max_over_samples(ex2_small):
    samples = sample_trajectories(ex2_small.scheduling, 4, 6, 11)
    joint = verify_sdm(ex2_small, samples=samples).gamma
    per = max(fixed_p_gain_exact(ex2_small, p) for p in samples)
    assert abs(joint - per) <= 1e-3


# -- model-based baseline ----------------------------------------------------

def test_mba_equals_largest_singular_value(ex2_model):
    trajs = enumerate_vertices(ex2_model.scheduling, 3)
    out = verify_mba(ex2_model, 3, trajectories=trajs)
    ss = realize_ss_siso(ex2_model)
    ref = max(np.linalg.norm(io_operator(ss, p), 2) for p in trajs)
    assert abs(out.gamma - ref) <= 1e-4 * ref
    assert abs(out.info["svd_gamma"] - ref) < 1e-12


def test_mba_feasibility_mode(ex2_model):
    trajs = enumerate_vertices(ex2_model.scheduling, 3)
    g = verify_mba(ex2_model, 3, trajectories=trajs).gamma
    assert verify_mba(ex2_model, 3, l2_supply(1.05 * g), trajectories=trajs).verdict == "certified"
    assert verify_mba(ex2_model, 3, l2_supply(0.95 * g), trajectories=trajs).verdict == "not-certified"


# -- homogeneity -------------------------------------------------------------

def _scaled_problem(prob, ku=1.0, ky=1.0):
    d = prob.data
    d2 = DataDictionary(ku * d.u, d.p, ky * d.y, dict(d.metadata))
    return CertificationProblem(d2, prob.L, prob.ell, None, prob.scheduling)


def test_zero_system_gain_is_zero(ex2_model):
    a = ex2_model.a.copy()
    m = LpvIoModel(a, np.zeros_like(ex2_model.b), scheduling=ex2_model.scheduling)
    d = generate_dictionary(m, 30, seed=2)
    assert np.all(d.y == 0)
    prob = CertificationProblem(d, 4, 2, None, m.scheduling, n_r=m.n_r)
    for method in ("CHA", "CHAr", "SP", "SDM", "FIXED_P"):
        out = run_method(method, prob, n_samples=20, rng=0)
        assert out.certified, method
        assert out.gamma <= 1e-3, method


def test_output_scaling_doubles_gamma(ex2_small):
    p2 = _scaled_problem(ex2_small, ky=2.0)
    for fn in (verify_cha, lambda p: verify_sdm(p, samples=sample_trajectories(p.scheduling, 4, 5, 0))):
        g1, g2 = fn(ex2_small).gamma, fn(p2).gamma
        assert abs(g2 / g1 - 2.0) <= 1e-3


def test_sp_scaling(ex2_small):
    # joint scaling of u and y leaves the S-procedure value unchanged; scaling
    # y alone reweights the ball term, so only the CHA lower bound is guaranteed
    g = verify_sp(ex2_small).gamma
    assert abs(verify_sp(_scaled_problem(ex2_small, 3.0, 3.0)).gamma - g) <= 1e-3 * g
    g2 = verify_sp(_scaled_problem(ex2_small, ky=2.0)).gamma
    assert g2 >= 2.0 * verify_cha(ex2_small).gamma - 1e-3


# -- affine multipliers ------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_affine_reparametrization_is_exact(seed, rank):
    rng = np.random.default_rng(seed)
    m, r = 6, 8
    K = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, r))
    R = range_basis(K.T)
    Rp = nullspace_basis(R.T)
    N = nullspace_basis(K.T)
    sym = lambda M: M + M.T
    # sym(X K) for X = R A + Rp C N^T is R sym(A K R) R^T
    A = rng.standard_normal((R.shape[1], m))
    C = rng.standard_normal((Rp.shape[1], N.shape[1]))
    X = R @ A + Rp @ C @ N.T
    assert np.allclose(sym(X @ K), R @ sym(A @ K @ R) @ R.T, atol=1e-10)
    # a generic X has a component that makes sym(X K) indefinite
    Xg = rng.standard_normal((r, m))
    assert np.linalg.norm(Rp.T @ Xg @ K) > 1e-6
    assert min_eig(sym(Xg @ K) + 1e6 * R @ R.T) < 0
    # removing it leaves the parametrized form, made PSD by a large R-part
    Xc = Xg - Rp @ Rp.T @ Xg @ (np.eye(m) - N @ N.T)
    assert np.linalg.norm(Rp.T @ Xc @ K) < 1e-10
    assert np.allclose(Xc, R @ (R.T @ Xc) + Rp @ (Rp.T @ Xc @ N) @ N.T, atol=1e-10)


def test_affine_multiplier_certificate_in_full_coordinates(ex2_model, ex2_small):
    prob = ex2_small
    out = verify_cha(prob, "affine")
    const = verify_cha(prob)
    mba = verify_mba(ex2_model, prob.L - prob.ell, scheduling=ex2_model.scheduling.without_rate())
    assert out.certified
    assert mba.gamma - 1e-3 <= out.gamma <= const.gamma + 1e-4
    Xs = out.payload["X"]
    Fh = prob.affine
    Pi = prob.Pi_H_at(out.gamma**2 * (1 + 1e-4))
    scale = np.linalg.norm(Pi, 2)
    sym = lambda M: M + M.T
    for i in range(1, len(Xs)):
        assert min_eig(sym(Xs[i] @ Fh[i])) >= -1e-6 * scale
    for v in enumerate_vertices(prob.scheduling.without_rate(), prob.L).reshape(-1, prob.L):
        Xv = Xs[0] + sum(v[i] * Xs[i + 1] for i in range(len(v)))
        assert min_eig(Pi - sym(Xv @ prob.F(v))) >= -1e-5 * scale


def test_affine_multiplier_restrictions(ex2_model, ex2_small):
    prob = CertificationProblem(ex2_small.data, 4, 2, None, ex2_model.scheduling)
    with pytest.raises(CertificationError):
        verify_cha_rate(prob, "affine")
    with pytest.raises(CertificationError):
        verify_cha(prob, "quadratic")


# -- property (b): Finsler three-way agreement -------------------------------

def test_finsler_three_way_agreement():
    counts = {}
    for seed in range(50):
        rng = np.random.default_rng(seed)
        m = random_siso(rng, n_r=1)
        d = generate_dictionary(m, 20, seed=seed)
        pbar = rng.uniform(-1, 1, (4, 1))
        g = fixed_p_gain_exact(CertificationProblem(d, 4, 1, None, m.scheduling, n_r=1), pbar)
        fac = 1.2 if rng.uniform() < 0.5 else 0.8
        prob = CertificationProblem(d, 4, 1, l2_supply(g * fac), m.scheduling, n_r=1)
        kernel = verify_fixed_p(prob, pbar)["holds"]
        scalar = verify_sdm(prob, samples=pbar[None]).verdict
        matrix = verify_cha(prob, vertices=pbar[None]).verdict
        assert kernel == (fac > 1), seed
        expected = "certified" if kernel else "not-certified"
        assert scalar == expected, (seed, scalar)
        assert matrix == expected, (seed, matrix)
        counts[kernel] = counts.get(kernel, 0) + 1
    assert counts.get(True, 0) > 10 and counts.get(False, 0) > 10


# -- property (h): soundness of certified bounds -----------------------------

def _partial_sums(gamma, u, y):
    return np.cumsum(gamma**2 * u**2 - y**2)


@pytest.mark.parametrize("method", ["CHA", "CHAr"])
def test_certified_gain_holds_on_simulated_trajectories(method, ex2_model, ex2_problem):
    out = run_method(method, ex2_problem)
    assert out.certified
    gamma = out.gamma
    L, ell = ex2_problem.L, ex2_problem.ell
    rng = np.random.default_rng(2024)
    ps = sample_trajectories(ex2_model.scheduling, L, 1000, rng)
    ss = realize_ss_siso(ex2_model)
    worst = math.inf
    for p in ps:
        u = np.zeros(L)
        u[ell:] = rng.standard_normal(L - ell)
        y = simulate(ex2_model, u[:, None], p)[:, 0]
        assert np.all(np.abs(y[:ell]) == 0)
        worst = min(worst, _partial_sums(gamma, u[ell:], y[ell:]).min())
        # adversarial input along the top singular direction of the window
        T = io_operator(ss, p[ell:])
        v = np.linalg.svd(T)[2][0]
        ua = np.concatenate([np.zeros(ell), v])
        ya = simulate(ex2_model, ua[:, None], p)[:, 0]
        worst = min(worst, _partial_sums(gamma, ua[ell:], ya[ell:]).min())
    assert worst >= -1e-6


# -- outcomes and dispatch ---------------------------------------------------

def test_outcome_round_trip(tmp_path, ex2_small):
    out = verify_cha(ex2_small)
    path = save_outcome(out, tmp_path / "o.json", extra={"seed": 1})
    back = load_outcome(path)
    assert back.method == "CHA" and back.verdict == out.verdict
    assert back.gamma == pytest.approx(out.gamma, abs=0)
    assert np.allclose(np.asarray(back.payload["X"]), out.payload["X"])


def test_gamma_only_in_gain_mode():
    with pytest.raises(ValueError):
        VerificationOutcome("CHA", "feasibility", "certified", gamma=1.0)
    with pytest.raises(ValueError):
        VerificationOutcome("XYZ", "gain", "certified")


def test_feasibility_mode_reports_no_gamma(ex2_small):
    g = verify_cha(ex2_small).gamma
    prob = CertificationProblem(ex2_small.data, 4, 2, l2_supply(1.1 * g), ex2_small.scheduling)
    out = verify_cha(prob)
    assert out.certified and out.gamma is None and out.mode == "feasibility"
    # below a gain attained on one trajectory nothing can be certified
    lower = max(fixed_p_gain_exact(ex2_small, p) for p in enumerate_vertices(ex2_small.scheduling, 4))
    prob = CertificationProblem(ex2_small.data, 4, 2, l2_supply(0.98 * lower), ex2_small.scheduling)
    assert verify_cha(prob).verdict in ("not-certified", "inconclusive")


def test_dispatch_errors(ex2_small):
    with pytest.raises(CertificationError):
        run_method("nope", ex2_small)
    with pytest.raises(CertificationError):
        run_method("MBA", ex2_small)


def test_methods_are_deterministic(ex2_small):
    a = verify_sdm(ex2_small, n_samples=10, rng=4)
    b = verify_sdm(ex2_small, n_samples=10, rng=4)
    assert a.gamma == b.gamma
