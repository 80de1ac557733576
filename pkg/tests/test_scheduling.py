import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpvdiss.scheduling import (
    BoxPolytope,
    QuadraticBall,
    SchedulingError,
    VertexCapExceeded,
    VertexPolytope,
    ball_from_box,
    double_description,
    enumerate_vertices,
    pe_samples,
    sample_trajectories,
    scheduling_from_dict,
    scheduling_to_dict,
    trajectory_halfspaces,
    vertex_count,
)


def brute_vertices(A, b, tol=1e-9):
    """Every feasible point where ``dim`` linearly independent constraints are active."""
    n = A.shape[1]
    pts = []
    for rows in itertools.combinations(range(len(b)), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + tol) and not any(np.allclose(x, q, atol=1e-9) for q in pts):
            pts.append(x)
    return np.array(pts)


def as_set(V):
    return {tuple(np.round(v.ravel(), 9)) for v in V}


def test_box_without_rate_l2():
    V = enumerate_vertices(BoxPolytope([-1], [1]), 2)
    assert as_set(V) == {(-1, -1), (-1, 1), (1, -1), (1, 1)}
    assert vertex_count(BoxPolytope([-1], [1]), 5) == 32


def test_single_step_is_base_vertex_list():
    s = BoxPolytope([-1, 0], [1, 2])
    assert as_set(enumerate_vertices(s, 1)) == as_set(s.vertices())


def test_rate_bounded_l2():
    s = BoxPolytope([-0.2], [0.2], [-0.1], [0.1])
    V = as_set(enumerate_vertices(s, 2))
    assert (0.2, 0.1) in V
    assert (0.2, -0.2) not in V
    A, b = trajectory_halfspaces(s, 2)
    assert V == as_set(brute_vertices(A, b))


@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_rate_bounded_matches_brute_force(L):
    s = BoxPolytope([-0.2], [0.2], [-0.1], [0.1])
    A, b = trajectory_halfspaces(s, L)
    assert as_set(enumerate_vertices(s, L)) == as_set(brute_vertices(A, b))


def test_scalar_and_double_description_agree():
    s = BoxPolytope([-0.2], [0.2], [-0.1], [0.1])
    counts = []
    for L in range(1, 9):
        V = enumerate_vertices(s, L, method="scalar")
        if L <= 6:
            assert as_set(V) == as_set(enumerate_vertices(s, L, method="dd"))
        counts.append(len(V))
    assert counts == [2, 6, 14, 34, 76, 180, 410, 962]


def test_vacuous_rate_bound_gives_product():
    s = BoxPolytope([-1], [1], [-5], [5])
    assert as_set(enumerate_vertices(s, 3)) == as_set(enumerate_vertices(s.without_rate(), 3))


def test_zero_rate_freezes_trajectory():
    s = BoxPolytope([-1], [1], [0], [0])
    assert as_set(enumerate_vertices(s, 4)) == {(-1,) * 4, (1,) * 4}


def test_double_description_square():
    A = np.vstack([np.eye(2), -np.eye(2)])
    V = double_description(A, np.ones(4))
    assert as_set(V) == {(1, 1), (1, -1), (-1, 1), (-1, -1)}


def test_cap_enforced():
    with pytest.raises(VertexCapExceeded):
        enumerate_vertices(BoxPolytope([-1], [1]), 13, cap=4096)


def test_vertex_polytope_triangle():
    tri = VertexPolytope([[0, 0], [1, 0], [0, 1]])
    assert as_set(enumerate_vertices(tri, 1)) == as_set(tri.vertices())
    samp = sample_trajectories(tri, 3, 50, rng=0)
    assert tri.contains_trajectory(samp.reshape(-1, 2))


def test_samplers_stay_admissible():
    s = BoxPolytope([-0.2], [0.2], [-0.1], [0.1])
    for t in sample_trajectories(s, 10, 40, rng=1):
        assert s.contains_trajectory(t)
    ball = QuadraticBall([0.5, -0.5], 0.3)
    T = sample_trajectories(ball, 6, 40, rng=2)
    assert np.all(np.linalg.norm(T - [0.5, -0.5], axis=2) <= 0.3 + 1e-12)


def test_ball_from_box_covers_box():
    box = BoxPolytope([-1, 0], [1, 2])
    ball = ball_from_box(box)
    assert np.all(np.linalg.norm(box.vertices() - ball.nominal, axis=1) <= ball.radius + 1e-12)


def test_pe_samples_contains_vertices():
    s = BoxPolytope([-1], [1])
    P = pe_samples(s, 3, n_random=5, rng=0)
    assert P.shape == (13, 3, 1)


def test_dict_round_trip():
    for s in (BoxPolytope([-1], [1], [-0.5], [0.5]), QuadraticBall([0.0], 0.2),
              VertexPolytope([[0, 0], [1, 0], [0, 1]])):
        back = scheduling_from_dict(scheduling_to_dict(s))
        assert type(back) is type(s)
        assert scheduling_to_dict(back) == scheduling_to_dict(s)


def test_invalid_sets():
    with pytest.raises(SchedulingError):
        BoxPolytope([1], [0])
    with pytest.raises(SchedulingError):
        QuadraticBall([0.0], 0.0)
    with pytest.raises(SchedulingError):
        BoxPolytope([0], [1], [0.1], None)


@settings(max_examples=30, deadline=None)
@given(lo=st.floats(-1, 0), width=st.floats(0.1, 1), rate=st.floats(0.02, 0.5), L=st.integers(1, 4))
def test_rate_vertices_are_extreme_points(lo, width, rate, L):
    s = BoxPolytope([lo], [lo + width], [-rate], [rate])
    A, b = trajectory_halfspaces(s, L)
    assert as_set(enumerate_vertices(s, L)) == as_set(brute_vertices(A, b))
