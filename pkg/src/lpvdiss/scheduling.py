"""Scheduling sets, trajectory-polytope vertex enumeration and trajectory samplers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np


class SchedulingError(ValueError):
    """Raised for invalid scheduling descriptions or intractable enumerations."""


class VertexCapExceeded(SchedulingError):
    """The trajectory polytope has more vertices than the configured cap."""


DEFAULT_VERTEX_CAP = 4096


def _vec(x, n: Optional[int] = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if n is not None and arr.size == 1 and n > 1:
        arr = np.full(n, arr[0])
    return arr


@dataclass(frozen=True)
class BoxPolytope:
    """Per-dimension intervals, optionally with per-dimension rate intervals.

    The rate bound restricts consecutive samples: ``rate_lower <= p_k - p_{k-1} <= rate_upper``.
    """

    lower: np.ndarray
    upper: np.ndarray
    rate_lower: Optional[np.ndarray] = None
    rate_upper: Optional[np.ndarray] = None

    def __post_init__(self):
        lo, hi = _vec(self.lower), _vec(self.upper)
        if lo.shape != hi.shape:
            raise SchedulingError("lower and upper bounds differ in length")
        if np.any(lo > hi):
            raise SchedulingError("empty interval in box scheduling set")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if (self.rate_lower is None) != (self.rate_upper is None):
            raise SchedulingError("rate bound needs both lower and upper limits")
        if self.rate_lower is not None:
            rlo, rhi = _vec(self.rate_lower, lo.size), _vec(self.rate_upper, lo.size)
            if rlo.shape != lo.shape or rhi.shape != lo.shape:
                raise SchedulingError("rate bound dimension differs from scheduling dimension")
            if np.any(rlo > rhi):
                raise SchedulingError("empty rate interval")
            object.__setattr__(self, "rate_lower", rlo)
            object.__setattr__(self, "rate_upper", rhi)

    @property
    def n_p(self) -> int:
        return self.lower.size

    @property
    def has_rate_bound(self) -> bool:
        return self.rate_lower is not None

    @property
    def is_box(self) -> bool:
        return True

    def vertices(self) -> np.ndarray:
        """The ``2^n_p`` corners, lexicographic with lower bound first."""
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        eye = np.eye(self.n_p)
        return np.vstack([eye, -eye]), np.concatenate([self.upper, -self.lower])

    def rate_halfspaces(self) -> Optional[tuple[np.ndarray, np.ndarray]]:
        if not self.has_rate_bound:
            return None
        eye = np.eye(self.n_p)
        return np.vstack([eye, -eye]), np.concatenate([self.rate_upper, -self.rate_lower])

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower.copy(), self.upper.copy()

    def without_rate(self) -> "BoxPolytope":
        return BoxPolytope(self.lower, self.upper)

    def with_rate(self, rate_lower, rate_upper) -> "BoxPolytope":
        return BoxPolytope(self.lower, self.upper, rate_lower, rate_upper)

    def contains_points(self, pts, tol: float = 1e-9) -> bool:
        pts = np.atleast_2d(pts)
        return bool(np.all(pts >= self.lower - tol) and np.all(pts <= self.upper + tol))

    def contains_trajectory(self, traj, tol: float = 1e-9) -> bool:
        traj = np.atleast_2d(traj)
        if not self.contains_points(traj, tol):
            return False
        if self.has_rate_bound and len(traj) > 1:
            d = np.diff(traj, axis=0)
            return bool(np.all(d >= self.rate_lower - tol) and np.all(d <= self.rate_upper + tol))
        return True


@dataclass(frozen=True)
class VertexPolytope:
    """Convex hull of explicit vertices, optionally with a rate polytope ``{d : A d <= b}``."""

    vertex_list: np.ndarray
    rate_A: Optional[np.ndarray] = None
    rate_b: Optional[np.ndarray] = None

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertex_list, dtype=float))
        if V.shape[0] == 0:
            raise SchedulingError("vertex list is empty")
        object.__setattr__(self, "vertex_list", V)
        if (self.rate_A is None) != (self.rate_b is None):
            raise SchedulingError("rate polytope needs both A and b")
        if self.rate_A is not None:
            A = np.atleast_2d(np.asarray(self.rate_A, dtype=float))
            b = _vec(self.rate_b)
            if A.shape != (b.size, V.shape[1]):
                raise SchedulingError("rate polytope has inconsistent dimensions")
            object.__setattr__(self, "rate_A", A)
            object.__setattr__(self, "rate_b", b)

    @property
    def n_p(self) -> int:
        return self.vertex_list.shape[1]

    @property
    def has_rate_bound(self) -> bool:
        return self.rate_A is not None

    @property
    def is_box(self) -> bool:
        lo, hi = self.bounding_box()
        corners = BoxPolytope(lo, hi).vertices()
        have = {tuple(np.round(v, 12)) for v in self.vertex_list}
        return all(tuple(np.round(c, 12)) in have for c in corners)

    def vertices(self) -> np.ndarray:
        if self.n_p == 1:
            return np.array([[self.vertex_list.min()], [self.vertex_list.max()]])
        from scipy.spatial import ConvexHull

        hull = ConvexHull(self.vertex_list)
        return self.vertex_list[np.sort(hull.vertices)]

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_p == 1:
            return np.array([[1.0], [-1.0]]), np.array([self.vertex_list.max(), -self.vertex_list.min()])
        from scipy.spatial import ConvexHull

        hull = ConvexHull(self.vertex_list)
        eq = hull.equations
        A, b = eq[:, :-1], -eq[:, -1]
        # merge coplanar facets reported once per simplex
        key = np.round(np.hstack([A, b[:, None]]), 10)
        _, idx = np.unique(key, axis=0, return_index=True)
        return A[np.sort(idx)], b[np.sort(idx)]

    def rate_halfspaces(self) -> Optional[tuple[np.ndarray, np.ndarray]]:
        if not self.has_rate_bound:
            return None
        return self.rate_A, self.rate_b

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertex_list.min(axis=0), self.vertex_list.max(axis=0)

    def without_rate(self) -> "VertexPolytope":
        return VertexPolytope(self.vertex_list)

    def contains_points(self, pts, tol: float = 1e-9) -> bool:
        A, b = self.halfspaces()
        pts = np.atleast_2d(pts)
        return bool(np.all(pts @ A.T <= b + tol))

    def contains_trajectory(self, traj, tol: float = 1e-9) -> bool:
        traj = np.atleast_2d(traj)
        if not self.contains_points(traj, tol):
            return False
        if self.has_rate_bound and len(traj) > 1:
            d = np.diff(traj, axis=0)
            return bool(np.all(d @ self.rate_A.T <= self.rate_b + tol))
        return True


@dataclass(frozen=True)
class QuadraticBall:
    """Trajectories within ``radius`` of a nominal trajectory in every sample.

    ``nominal`` is either a single point (held constant over any horizon) or
    a full trajectory of shape (L, n_p). Only the Euclidean norm is supported.
    """

    nominal: np.ndarray
    radius: float
    norm: Union[int, float] = 2

    def __post_init__(self):
        nom = np.asarray(self.nominal, dtype=float)
        if nom.ndim == 0:
            nom = nom.reshape(1)
        if nom.ndim > 2:
            raise SchedulingError("nominal must be a point or a trajectory")
        object.__setattr__(self, "nominal", nom)
        if not self.radius > 0:
            raise SchedulingError("ball radius must be positive")
        if self.norm != 2:
            raise SchedulingError("only the Euclidean norm (W = 2) is supported")

    @property
    def n_p(self) -> int:
        return self.nominal.shape[-1]

    @property
    def has_rate_bound(self) -> bool:
        return False

    @property
    def is_box(self) -> bool:
        return False

    def nominal_trajectory(self, L: int) -> np.ndarray:
        if self.nominal.ndim == 1:
            return np.tile(self.nominal, (L, 1))
        if self.nominal.shape[0] != L:
            raise SchedulingError(f"nominal trajectory has length {self.nominal.shape[0]}, horizon is {L}")
        return self.nominal.copy()

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        nom = self.nominal if self.nominal.ndim == 1 else self.nominal
        return np.min(np.atleast_2d(nom), 0) - self.radius, np.max(np.atleast_2d(nom), 0) + self.radius

    def contains_trajectory(self, traj, tol: float = 1e-9) -> bool:
        traj = np.atleast_2d(traj)
        nom = self.nominal_trajectory(len(traj))
        return bool(np.all(np.linalg.norm(traj - nom, axis=1) <= self.radius + tol))

    def contains_points(self, pts, tol: float = 1e-9) -> bool:
        if self.nominal.ndim != 1:
            return True
        pts = np.atleast_2d(pts)
        return bool(np.all(np.linalg.norm(pts - self.nominal, axis=1) <= self.radius + tol))


SchedulingSet = Union[BoxPolytope, VertexPolytope, QuadraticBall]


def is_polytopic(s) -> bool:
    return isinstance(s, (BoxPolytope, VertexPolytope))


def ball_from_box(box: BoxPolytope) -> QuadraticBall:
    """Smallest Euclidean ball around the box center that contains the box."""
    center = 0.5 * (box.lower + box.upper)
    return QuadraticBall(center, float(np.linalg.norm(0.5 * (box.upper - box.lower))))


# -- serialization ----------------------------------------------------------

def scheduling_to_dict(s: SchedulingSet) -> dict:
    if isinstance(s, BoxPolytope):
        out = {"type": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
        if s.has_rate_bound:
            out["rate_lower"] = s.rate_lower.tolist()
            out["rate_upper"] = s.rate_upper.tolist()
        return out
    if isinstance(s, VertexPolytope):
        out = {"type": "vertices", "vertices": s.vertex_list.tolist()}
        if s.has_rate_bound:
            out["rate_A"] = s.rate_A.tolist()
            out["rate_b"] = s.rate_b.tolist()
        return out
    if isinstance(s, QuadraticBall):
        return {"type": "ball", "nominal": s.nominal.tolist(), "radius": float(s.radius), "norm": s.norm}
    raise SchedulingError(f"unknown scheduling set {type(s).__name__}")


def scheduling_from_dict(doc: dict) -> SchedulingSet:
    kind = doc.get("type")
    try:
        if kind == "box":
            return BoxPolytope(doc["lower"], doc["upper"], doc.get("rate_lower"), doc.get("rate_upper"))
        if kind == "vertices":
            return VertexPolytope(doc["vertices"], doc.get("rate_A"), doc.get("rate_b"))
        if kind == "ball":
            return QuadraticBall(doc["nominal"], float(doc["radius"]), doc.get("norm", 2))
    except KeyError as exc:
        raise SchedulingError(f"scheduling description lacks field {exc}") from exc
    raise SchedulingError(f"unknown scheduling type {kind!r}")


# -- vertex enumeration -----------------------------------------------------

def trajectory_halfspaces(s: SchedulingSet, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Stacked inequalities ``A x <= b`` of the trajectory polytope, ``x`` time-major."""
    Ap, bp = s.halfspaces()
    n = s.n_p
    rows, rhs = [], []
    for k in range(L):
        blk = np.zeros((Ap.shape[0], L * n))
        blk[:, k * n:(k + 1) * n] = Ap
        rows.append(blk)
        rhs.append(bp)
    rate = s.rate_halfspaces()
    if rate is not None:
        Ad, bd = rate
        for k in range(1, L):
            blk = np.zeros((Ad.shape[0], L * n))
            blk[:, k * n:(k + 1) * n] = Ad
            blk[:, (k - 1) * n:k * n] = -Ad
            rows.append(blk)
            rhs.append(bd)
    return np.vstack(rows), np.concatenate(rhs)


def _dedupe(points: list[np.ndarray], scale: float) -> np.ndarray:
    seen, out = set(), []
    for v in points:
        key = tuple(np.round(v / scale, 8))
        if key not in seen:
            seen.add(key)
            out.append(v)
    return np.array(out)


def _scalar_rate_vertices(lo: float, hi: float, dlo: float, dhi: float, L: int,
                          cap: int, tol: float) -> np.ndarray:
    """Vertices of ``{p in [lo, hi]^L : dlo <= p_k - p_{k-1} <= dhi}``.

    Every vertex splits into runs of consecutive samples linked by active rate
    constraints, each run pinned by one sample sitting on an interval end.
    Runs are generated left to right from their anchor outwards.
    """
    scale = max(hi - lo, dhi - dlo, 1e-300)
    found: list[np.ndarray] = []

    def runs(start: int, prefix: list[float]):
        if start == L:
            found.append(np.array(prefix))
            if len(found) > 64 * cap:
                raise VertexCapExceeded(f"more than {cap} trajectory vertices")
            return
        for m in range(1, L - start + 1):
            for anchor in range(m):
                for val in (lo, hi):
                    for seq in _run_values(m, anchor, val):
                        if prefix:
                            d = seq[0] - prefix[-1]
                            if d < dlo - tol or d > dhi + tol:
                                continue
                        runs(start + m, prefix + seq)

    def _run_values(m, anchor, val):
        # expand from the anchor to both ends, each step using a rate limit
        left_opts = _walk(anchor, val, -1)
        right_opts = _walk(m - 1 - anchor, val, +1)
        for left in left_opts:
            for right in right_opts:
                yield left[::-1] + [val] + right

    def _walk(steps, val, direction):
        paths = [[]]
        for _ in range(steps):
            nxt = []
            for path in paths:
                last = path[-1] if path else val
                for d in (dlo, dhi):
                    v = last + d if direction > 0 else last - d
                    if lo - tol <= v <= hi + tol:
                        nxt.append(path + [min(max(v, lo), hi)])
            paths = nxt
        return paths

    runs(0, [])
    V = _dedupe(found, scale)
    if len(V) > cap:
        raise VertexCapExceeded(f"{len(V)} trajectory vertices exceed the cap {cap}")
    return V.reshape(len(V), L, 1)


def double_description(A: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Vertices of the bounded polyhedron ``{x : A x <= b}`` by double description.

    Works on the homogenized cone ``{(t, x) : b t - A x >= 0, t >= 0}``, inserting
    one constraint at a time and combining adjacent rays across each new
    hyperplane (adjacency by the algebraic rank test).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, d = A.shape
    scale = np.maximum(np.linalg.norm(A, axis=1), np.abs(b))
    scale[scale == 0] = 1.0
    M = np.vstack([np.hstack([b[:, None], -A]) / scale[:, None], np.eye(1, d + 1)])
    D = d + 1
    # initial cone from D independent constraints
    chosen: list[int] = []
    order = [m] + list(range(m))
    for i in order:
        if np.linalg.matrix_rank(M[chosen + [i]], tol=1e-10) == len(chosen) + 1:
            chosen.append(i)
        if len(chosen) == D:
            break
    if len(chosen) < D:
        raise SchedulingError("polyhedron is unbounded or lower-dimensional in its lineality")
    R = np.linalg.inv(M[chosen]).T  # rows are the rays
    R /= np.linalg.norm(R, axis=1, keepdims=True)
    done = list(chosen)
    rest = [i for i in range(M.shape[0]) if i not in set(chosen)]
    for i in rest:
        vals = R @ M[i]
        pos, zer, neg = vals > tol, np.abs(vals) <= tol, vals < -tol
        if not neg.any():
            done.append(i)
            continue
        Md = M[done]
        act = np.abs(R @ Md.T) <= tol  # (rays, processed constraints)
        new = []
        P, Nn = np.flatnonzero(pos), np.flatnonzero(neg)
        for ip in P:
            for jn in Nn:
                common = act[ip] & act[jn]
                if common.sum() < D - 2:
                    continue
                if np.linalg.matrix_rank(Md[common], tol=1e-9) != D - 2:
                    continue
                r = vals[ip] * R[jn] - vals[jn] * R[ip]
                new.append(r / np.linalg.norm(r))
        R = np.vstack([R[pos | zer]] + ([np.array(new)] if new else []))
        done.append(i)
    t = R[:, 0]
    keep = t > tol
    if not keep.any():
        raise SchedulingError("polyhedron is empty")
    V = R[keep, 1:] / t[keep, None]
    V = V[np.all(A @ V.T <= b[:, None] + 1e-7 * np.maximum(1.0, np.abs(b[:, None])), axis=0)]
    return _dedupe(list(V), max(1.0, float(np.abs(V).max()) if V.size else 1.0))


def enumerate_vertices(s: SchedulingSet, L: int, cap: int = DEFAULT_VERTEX_CAP,
                       tol: float = 1e-10, method: str = "auto") -> np.ndarray:
    """Vertices of the admissible trajectory polytope over horizon ``L``.

    Returns an array of shape (n_vertices, L, n_p).

    Args:
        s: polytopic scheduling set, with or without rate bound.
        L: horizon.
        cap: maximum number of vertices; exceeding it raises ``VertexCapExceeded``.
        method: ``"auto"``, ``"product"``, ``"scalar"`` or ``"dd"`` (double description).
    """
    if not is_polytopic(s):
        raise SchedulingError("vertex enumeration needs a polytopic scheduling set")
    if L < 1:
        raise SchedulingError("horizon must be positive")
    if method == "auto":
        if not s.has_rate_bound:
            method = "product"
        elif s.n_p == 1:
            method = "scalar"
        else:
            method = "dd"
    if method == "product":
        base = s.vertices()
        count = len(base) ** L
        if count > cap:
            raise VertexCapExceeded(f"{count} trajectory vertices exceed the cap {cap}")
        idx = np.array(list(itertools.product(range(len(base)), repeat=L)), dtype=int)
        return base[idx]
    if method == "scalar":
        if s.n_p != 1:
            raise SchedulingError("scalar enumeration needs one scheduling dimension")
        (Ad, bd) = s.rate_halfspaces()
        dhi = min(bd[i] / Ad[i, 0] for i in range(len(bd)) if Ad[i, 0] > 0)
        dlo = max(bd[i] / Ad[i, 0] for i in range(len(bd)) if Ad[i, 0] < 0)
        lo, hi = s.bounding_box()
        if dlo > dhi:
            raise SchedulingError("empty rate interval")
        scale = max(float(hi[0] - lo[0]), float(dhi - dlo), 1.0)
        return _scalar_rate_vertices(float(lo[0]), float(hi[0]), float(dlo), float(dhi), L, cap, tol * scale)
    if method == "dd":
        A, b = trajectory_halfspaces(s, L)
        V = double_description(A, b)
        if len(V) > cap:
            raise VertexCapExceeded(f"{len(V)} trajectory vertices exceed the cap {cap}")
        return V.reshape(len(V), L, s.n_p)
    raise SchedulingError(f"unknown enumeration method {method!r}")


def vertex_count(s: SchedulingSet, L: int) -> Optional[int]:
    """Vertex count without enumerating, when it is known in closed form."""
    if is_polytopic(s) and not s.has_rate_bound:
        return len(s.vertices()) ** L
    return None


# -- sampling ---------------------------------------------------------------

def _uniform_in_halfspaces(rng, A, b, lo, hi, max_tries=100000):
    for _ in range(max_tries):
        x = rng.uniform(lo, hi)
        if np.all(A @ x <= b + 1e-12):
            return x
    raise SchedulingError("rejection sampler failed; the feasible region may be empty")


def sample_trajectories(s: SchedulingSet, L: int, n: int, rng=None) -> np.ndarray:
    """Draw ``n`` admissible scheduling trajectories, shape (n, L, n_p).

    Box sets sample each sample uniformly; with a rate bound the samples are
    drawn sequentially, ``p_k`` uniform on the part of the set reachable from
    ``p_{k-1}``. Vertex polytopes use rejection from their bounding box.
    Balls sample uniformly inside the Euclidean ball around the nominal.
    """
    rng = np.random.default_rng(rng)
    n_p = s.n_p
    out = np.zeros((n, L, n_p))
    if isinstance(s, QuadraticBall):
        nom = s.nominal_trajectory(L)
        g = rng.standard_normal((n, L, n_p))
        g /= np.linalg.norm(g, axis=2, keepdims=True)
        rad = s.radius * rng.uniform(size=(n, L, 1)) ** (1.0 / n_p)
        return nom[None] + g * rad
    if isinstance(s, BoxPolytope):
        if not s.has_rate_bound:
            return rng.uniform(s.lower, s.upper, size=(n, L, n_p))
        for t in range(n):
            out[t, 0] = rng.uniform(s.lower, s.upper)
            for k in range(1, L):
                lo = np.maximum(s.lower, out[t, k - 1] + s.rate_lower)
                hi = np.minimum(s.upper, out[t, k - 1] + s.rate_upper)
                if np.any(lo > hi + 1e-15):
                    raise SchedulingError("rate-bounded sampler reached an empty set")
                out[t, k] = rng.uniform(lo, np.maximum(lo, hi))
        return out
    A, b = s.halfspaces()
    lo, hi = s.bounding_box()
    rate = s.rate_halfspaces()
    for t in range(n):
        out[t, 0] = _uniform_in_halfspaces(rng, A, b, lo, hi)
        for k in range(1, L):
            if rate is None:
                out[t, k] = _uniform_in_halfspaces(rng, A, b, lo, hi)
            else:
                Ad, bd = rate
                A2 = np.vstack([A, Ad])
                b2 = np.concatenate([b, bd + Ad @ out[t, k - 1]])
                out[t, k] = _uniform_in_halfspaces(rng, A2, b2, lo, hi)
    return out


def sample_sequence(s: SchedulingSet, N: int, rng=None) -> np.ndarray:
    """One admissible scheduling sequence of length ``N``, shape (N, n_p)."""
    if isinstance(s, QuadraticBall) and s.nominal.ndim == 2:
        raise SchedulingError("a trajectory-valued ball cannot generate a long sequence")
    return sample_trajectories(s, N, 1, rng)[0]


def pe_samples(s: SchedulingSet, L: int, n_random: int = 25, vertex_cap: int = 1024,
               rng=None) -> np.ndarray:
    """Trajectories at which excitation is checked: vertices (when few) plus random draws."""
    parts = []
    if is_polytopic(s):
        try:
            parts.append(enumerate_vertices(s, L, cap=vertex_cap))
        except VertexCapExceeded:
            pass
    if n_random > 0:
        parts.append(sample_trajectories(s, L, n_random, rng))
    if not parts:
        raise SchedulingError("no scheduling samples requested")
    return np.concatenate(parts, axis=0)
