import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpvdiss.datadict import (
    DataDictionary,
    DictionaryError,
    blockdiag_kron,
    build_dd_stack,
    check_pe,
    dd_residual,
    dictionary_scheduling,
    generate_dictionary,
    hankel,
    hankel_stack,
    io_from_g,
    kron_sequence,
    projection_dimension,
    read_dictionary,
    scheduling_constraint,
    write_dictionary,
)
from lpvdiss.model import InitialCondition, simulate
from lpvdiss.scheduling import pe_samples, sample_trajectories


def test_hankel_scalar():
    np.testing.assert_array_equal(hankel([1, 2, 3], 2), [[1, 2], [2, 3]])
    np.testing.assert_array_equal(hankel([1, 2, 3], 3), [[1], [2], [3]])
    with pytest.raises(DictionaryError):
        hankel([1, 2, 3], 4)


def test_hankel_block_structure():
    seq = np.arange(8.0).reshape(4, 2)
    H = hankel(seq, 2)
    assert H.shape == (4, 3)
    for i in range(2):
        for j in range(3):
            for d in range(2):
                assert H[2 * i + d, j] == seq[i + j, d]


def test_kron_sequence():
    p = np.array([[2.0], [3.0]])
    u = np.array([[1.0], [-1.0]])
    np.testing.assert_array_equal(kron_sequence(p, u), p * u)
    np.testing.assert_array_equal(kron_sequence([[1.0, 0.0]], [[5.0, 7.0]]), [[5.0, 7.0, 0.0, 0.0]])
    rng = np.random.default_rng(0)
    P, U = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    K = kron_sequence(P, U)
    for k in range(4):
        for i in range(2):
            for j in range(2):
                assert K[k, 2 * i + j] == P[k, i] * U[k, j]


def test_blockdiag_kron():
    np.testing.assert_array_equal(blockdiag_kron(np.ones((3, 1)), 2), np.eye(6))
    p = np.array([[0.5, -1.0]])
    np.testing.assert_array_equal(blockdiag_kron(p, 2), np.kron(p.T, np.eye(2)))


def test_blockdiag_kron_hankel_identity():
    # (p_i kron I) u_i equals the window of (p_k kron u_k) when p is the data's own window
    rng = np.random.default_rng(1)
    p, u = rng.standard_normal((10, 2)), rng.standard_normal((10, 3))
    L, j = 4, 3
    Hu = hankel(u, L)
    Hup = hankel(kron_sequence(p, u), L)
    np.testing.assert_allclose(blockdiag_kron(p[j:j + L], 3) @ Hu[:, j], Hup[:, j], atol=1e-15)


def test_self_window_annihilated(ex1_data):
    L, j = 6, 11
    stack = hankel_stack(ex1_data, L)
    F2 = scheduling_constraint(stack, ex1_data.p[j:j + L], 1, 1)
    assert np.max(np.abs(F2[:, j])) < 1e-15
    u, y = io_from_g(ex1_data, L, np.eye(stack.columns)[j])
    np.testing.assert_array_equal(u, ex1_data.u[j:j + L])
    np.testing.assert_array_equal(y, ex1_data.y[j:j + L])


def test_zero_g(ex1_data):
    u, y = io_from_g(ex1_data, 5, np.zeros(38))
    assert not np.any(u) and not np.any(y)


def test_constant_scheduling_removes_constraint(ex1_model):
    rng = np.random.default_rng(2)
    u = rng.standard_normal((30, 1))
    p = np.full((30, 1), 0.07)
    data = DataDictionary(u, p, simulate(ex1_model, u, p))
    _, F2 = build_dd_stack(data, 5, np.full((5, 1), 0.07))
    assert np.max(np.abs(F2)) < 1e-15


def _window_trajectory(model, L, rng):
    """Length-L window of a simulation started from a random past."""
    n = model.n_r
    init = InitialCondition(rng.standard_normal((model.n_a, 1)), rng.uniform(-0.1, 0.1, (n, 1)),
                            rng.standard_normal((model.n_b, 1)))
    u = rng.standard_normal((L, 1))
    p = np.asarray(sample_trajectories(model.scheduling, L, 1, rng)[0])
    return u, p, simulate(model, u, p, init)


def test_representation_residual_ex1(ex1_model, ex1_data):
    # Data-driven representation reproduces fresh trajectories (property a).
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        u, p, y = _window_trajectory(ex1_model, 10, rng)
        res, _ = dd_residual(ex1_data, 10, u, p, y)
        worst = max(worst, res)
    assert worst < 1e-8


def test_representation_residual_ex2(ex2_model, ex2_data):
    rng = np.random.default_rng(4)
    for _ in range(20):
        u, p, y = _window_trajectory(ex2_model, 8, rng)
        assert dd_residual(ex2_data, 8, u, p, y)[0] < 1e-8


def test_pe_example_dictionaries(ex1_model, ex1_data, ex2_model, ex2_data):
    pe1 = check_pe(ex1_data, 10, 3, pe_samples(ex1_model.scheduling, 10, rng=0))
    assert pe1.passed and pe1.required == 13 and pe1.min_dim == 13
    pe2 = check_pe(ex2_data, 8, 2, pe_samples(ex2_model.scheduling, 8, rng=0))
    assert pe2.passed and pe2.required == 10


def test_pe_fails_single_column(ex1_model, ex1_data):
    pe = check_pe(ex1_data, 42, 3, pe_samples(ex1_model.scheduling, 42, n_random=3, rng=0))
    assert not pe.passed and pe.min_dim <= 1
    assert not check_pe(ex1_data, 50, 3, np.zeros((1, 50, 1))).passed


def test_pe_fails_without_input(ex1_model):
    rng = np.random.default_rng(5)
    p = rng.uniform(-0.1, 0.1, (42, 1))
    init = InitialCondition(np.array([[1.0], [0.5], [-0.3]]), np.zeros((3, 1)), np.zeros((3, 1)))
    u = np.zeros((42, 1))
    data = DataDictionary(u, p, simulate(ex1_model, u, p, init))
    assert not check_pe(data, 10, 3, pe_samples(ex1_model.scheduling, 10, n_random=5, rng=0)).passed


def test_projection_dimension_basic():
    E = np.eye(10)
    assert projection_dimension(E[:, :4], E[:, :4]) == 4
    assert projection_dimension(E[:, :4], E[:, 4:7]) == 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 4), a=st.integers(0, 3), b=st.integers(0, 3))
def test_projection_dimension_vs_brute_rank(seed, k, a, b):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
    N = Q[:, :k + a] @ rng.standard_normal((k + a, k + a))
    S = np.hstack([Q[:, :k], Q[:, k + a:k + a + b]]) @ rng.standard_normal((k + b, k + b))
    if N.shape[1] == 0 or S.shape[1] == 0:
        assert projection_dimension(N, S) == 0
        return
    Pn = N @ np.linalg.pinv(N)
    # projections of the non-shared part of S vanish; brute-force rank of the stacked projections
    assert projection_dimension(N, S) == np.linalg.matrix_rank(Pn @ S, tol=1e-8) == k


def test_dictionary_round_trip(tmp_path, ex2_model, ex2_data):
    path = write_dictionary(ex2_data, tmp_path / "d.dat")
    back = read_dictionary(path)
    np.testing.assert_array_equal(back.u, ex2_data.u)
    np.testing.assert_array_equal(back.p, ex2_data.p)
    np.testing.assert_array_equal(back.y, ex2_data.y)
    assert back.n_x == 2 and back.metadata["seed"] == 0
    s = dictionary_scheduling(back)
    assert s.has_rate_bound
    samples = pe_samples(ex2_model.scheduling, 8, rng=0)
    assert check_pe(back, 8, 2, samples).passed == check_pe(ex2_data, 8, 2, samples).passed


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N=st.integers(1, 30))
def test_dictionary_round_trip_random(tmp_path_factory, seed, N):
    rng = np.random.default_rng(seed)
    d = DataDictionary(rng.standard_normal((N, 2)), rng.standard_normal((N, 1)), rng.standard_normal((N, 1)))
    back = read_dictionary(write_dictionary(d, tmp_path_factory.mktemp("rt") / "d.dat"))
    assert np.array_equal(back.u, d.u) and np.array_equal(back.p, d.p) and np.array_equal(back.y, d.y)


def test_bad_dictionary_file(tmp_path):
    path = tmp_path / "bad.dat"
    path.write_text('# N: 2\n# n_u: 1\n# n_p: 1\n# n_y: 1\n1 2 3\n1 2\n')
    with pytest.raises(DictionaryError):
        read_dictionary(path)


def test_generation_is_deterministic(ex1_model):
    a = generate_dictionary(ex1_model, 42, seed=7)
    b = generate_dictionary(ex1_model, 42, seed=7)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.y, b.y)
    assert ex1_model.scheduling.contains_trajectory(a.p)


def test_dictionary_validation():
    with pytest.raises(DictionaryError):
        DataDictionary(np.zeros((3, 1)), np.zeros((2, 1)), np.zeros((3, 1)))
