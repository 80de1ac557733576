"""Shifted-affine LPV input-output models, supply rates and state-space realizations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .scheduling import SchedulingSet, scheduling_from_dict, scheduling_to_dict


class ModelError(ValueError):
    """Raised for malformed models or inconsistent signal dimensions."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def as_sequence(x, dim: Optional[int] = None, name: str = "signal") -> np.ndarray:
    """Return a signal as an (N, dim) float array.

    One-dimensional input is read as a scalar channel.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim != 2:
        raise ModelError(f"{name} must be a sequence of vectors, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ModelError(f"{name} has {arr.shape[1]} channels, expected {dim}")
    return arr


@dataclass(frozen=True)
class SupplyRate:
    """Quadratic supply ``[u; y]^T [[Q, S], [S^T, R]] [u; y]``."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise ModelError("Q and R must be square")
        if S.shape != (Q.shape[0], R.shape[0]):
            raise ModelError(f"S must have shape {(Q.shape[0], R.shape[0])}, got {S.shape}")
        object.__setattr__(self, "Q", _frozen(0.5 * (Q + Q.T)))
        object.__setattr__(self, "R", _frozen(0.5 * (R + R.T)))
        object.__setattr__(self, "S", _frozen(S))

    @property
    def n_u(self) -> int:
        return self.Q.shape[0]

    @property
    def n_y(self) -> int:
        return self.R.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Full symmetric supply matrix on the stacked vector ``[u; y]``."""
        return np.block([[self.Q, self.S], [self.S.T, self.R]])

    def evaluate(self, u, y) -> np.ndarray:
        """Per-sample supply values for sequences ``u`` and ``y``."""
        u = as_sequence(u, self.n_u, "u")
        y = as_sequence(y, self.n_y, "y")
        w = np.hstack([u, y])
        return np.einsum("ki,ij,kj->k", w, self.matrix, w)

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "S": self.S.tolist(), "R": self.R.tolist()}


def l2_supply(gamma: float, n_u: int = 1, n_y: int = 1) -> SupplyRate:
    """Supply for an L2-gain bound ``gamma``: ``(gamma^2 I, 0, -I)``."""
    if not gamma > 0:
        raise ModelError("gamma must be positive")
    return SupplyRate(gamma**2 * np.eye(n_u), np.zeros((n_u, n_y)), -np.eye(n_y))


def passivity_supply(n: int = 1) -> SupplyRate:
    """Passivity supply ``(0, I, 0)`` for square systems."""
    return SupplyRate(np.zeros((n, n)), np.eye(n), np.zeros((n, n)))


def supply_from_spec(spec: Any, n_u: int, n_y: int) -> Optional[SupplyRate]:
    """Build a supply rate from a preset name or an explicit ``{Q, S, R}`` mapping.

    ``"l2"`` (without a gamma) returns ``None``, meaning the gain is minimized.
    ``"l2:<gamma>"`` fixes the gain level.
    """
    if spec is None or isinstance(spec, SupplyRate):
        return spec
    if isinstance(spec, str):
        name, _, arg = spec.partition(":")
        name = name.strip().lower()
        if name == "l2":
            return l2_supply(float(arg), n_u, n_y) if arg else None
        if name == "passivity":
            if n_u != n_y:
                raise ModelError("passivity needs as many inputs as outputs")
            return passivity_supply(n_u)
        raise ModelError(f"unknown supply preset {spec!r}")
    if isinstance(spec, dict):
        if "gamma" in spec:
            return l2_supply(float(spec["gamma"]), n_u, n_y)
        return SupplyRate(
            np.asarray(spec["Q"], dtype=float).reshape(n_u, n_u),
            np.asarray(spec["S"], dtype=float).reshape(n_u, n_y),
            np.asarray(spec["R"], dtype=float).reshape(n_y, n_y),
        )
    raise ModelError(f"cannot interpret supply {spec!r}")


@dataclass(frozen=True)
class LpvIoModel:
    """Shifted-affine LPV input-output model.

    The output obeys
    ``y_k + sum_{i=1..n_a} a_i(p_{k-i}) y_{k-i} = sum_{i=0..n_b} b_i(p_{k-i}) u_{k-i}``
    where every coefficient is affine in the scheduling sample at its own lag,
    ``a_i(p) = a[i-1, 0] + sum_j a[i-1, j] p_j``.

    Attributes:
        a: array of shape (n_a, n_p + 1, n_y, n_y); ``a[i-1, j]`` multiplies ``p_j``
            in the lag-``i`` output coefficient (``j = 0`` is the constant part).
        b: array of shape (n_b + 1, n_p + 1, n_y, n_u); ``b[i, j]`` likewise for inputs.
        n_x: declared state dimension. Defaults to ``max(n_a, n_b)``.
        scheduling: optional admissible scheduling set.
        name: free-form label.
    """

    a: np.ndarray
    b: np.ndarray
    n_x: Optional[int] = None
    scheduling: Optional[SchedulingSet] = None
    name: str = ""
    notes: str = field(default="", compare=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 4 or b.ndim != 4:
            raise ModelError("coefficient tables must be 4-dimensional (lag, scheduling index, rows, cols)")
        if a.shape[0] < 1:
            raise ModelError("n_a must be at least 1")
        if b.shape[0] < 1:
            raise ModelError("b must contain at least the lag-0 coefficient")
        if a.shape[1] != b.shape[1] or a.shape[1] < 2:
            raise ModelError("a and b must share n_p + 1 >= 2 scheduling slots")
        if a.shape[2] != a.shape[3]:
            raise ModelError("output coefficients must be square")
        if b.shape[2] != a.shape[2]:
            raise ModelError("input coefficient rows must equal n_y")
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "b", _frozen(b))
        n_x = self.n_r if self.n_x is None else int(self.n_x)
        if self.n_u == 1 and self.n_y == 1 and n_x != self.n_r:
            raise ModelError(f"a SISO model has order n_r = {self.n_r}, got n_x = {n_x}")
        if n_x < self.n_r:
            raise ModelError(f"n_x = {n_x} is smaller than n_r = {self.n_r}")
        object.__setattr__(self, "n_x", n_x)
        if self.scheduling is not None and self.scheduling.n_p != self.n_p:
            raise ModelError("scheduling set dimension does not match n_p")

    @property
    def n_a(self) -> int:
        return self.a.shape[0]

    @property
    def n_b(self) -> int:
        return self.b.shape[0] - 1

    @property
    def n_r(self) -> int:
        return max(self.n_a, self.n_b)

    @property
    def n_p(self) -> int:
        return self.a.shape[1] - 1

    @property
    def n_y(self) -> int:
        return self.a.shape[2]

    @property
    def n_u(self) -> int:
        return self.b.shape[3]

    @property
    def is_siso(self) -> bool:
        return self.n_u == 1 and self.n_y == 1

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """Coefficient tables zero-padded to ``n_r`` lags: a (n_r, ...) and b (n_r + 1, ...)."""
        nr = self.n_r
        a = np.zeros((nr,) + self.a.shape[1:])
        a[: self.n_a] = self.a
        b = np.zeros((nr + 1,) + self.b.shape[1:])
        b[: self.n_b + 1] = self.b
        return a, b

    def with_scheduling(self, scheduling: Optional[SchedulingSet]) -> "LpvIoModel":
        return LpvIoModel(self.a, self.b, self.n_x, scheduling, self.name, self.notes)


def _extended(p, n_p: int) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape[-1] != n_p:
        raise ModelError(f"scheduling point has {p.shape[-1]} entries, expected {n_p}")
    ones = np.ones(p.shape[:-1] + (1,))
    return np.concatenate([ones, p], axis=-1)


def evaluate_coeff(model: LpvIoModel, i: int, role: str, p) -> np.ndarray:
    """Evaluate the lag-``i`` coefficient ``a_i(p)`` or ``b_i(p)`` at scheduling point ``p``."""
    if role == "a":
        if not 1 <= i <= model.n_a:
            raise ModelError(f"a index {i} outside [1, {model.n_a}]")
        table = model.a[i - 1]
    elif role == "b":
        if not 0 <= i <= model.n_b:
            raise ModelError(f"b index {i} outside [0, {model.n_b}]")
        table = model.b[i]
    else:
        raise ModelError(f"role must be 'a' or 'b', got {role!r}")
    return np.tensordot(_extended(p, model.n_p), table, axes=(0, 0))


@dataclass(frozen=True)
class InitialCondition:
    """Past samples before time 1, each stored oldest first.

    Attributes:
        y: (n_a, n_y) outputs at times ``1-n_a .. 0``.
        p: (n_r, n_p) scheduling at times ``1-n_r .. 0``.
        u: (n_b, n_u) inputs at times ``1-n_b .. 0``.
    """

    y: np.ndarray
    p: np.ndarray
    u: np.ndarray

    @classmethod
    def zero(cls, model: LpvIoModel, p_past=None) -> "InitialCondition":
        """Zero past inputs and outputs; past scheduling defaults to zero as well."""
        if p_past is None:
            p_past = np.zeros((model.n_r, model.n_p))
        return cls(
            np.zeros((model.n_a, model.n_y)),
            np.asarray(p_past, dtype=float).reshape(model.n_r, model.n_p),
            np.zeros((model.n_b, model.n_u)),
        )

    def check(self, model: LpvIoModel):
        if np.shape(self.y) != (model.n_a, model.n_y):
            raise ModelError(f"initial outputs need shape {(model.n_a, model.n_y)}")
        if np.shape(self.p) != (model.n_r, model.n_p):
            raise ModelError(f"initial scheduling needs shape {(model.n_r, model.n_p)}")
        if np.shape(self.u) != (model.n_b, model.n_u):
            raise ModelError(f"initial inputs need shape {(model.n_b, model.n_u)}")


def simulate(model: LpvIoModel, u, p, init: Optional[InitialCondition] = None,
             strict: bool = False, tol: float = 1e-9) -> np.ndarray:
    """Simulate the difference equation forward from an initial condition.

    Args:
        model: the LPV-IO model.
        u: (N, n_u) input sequence, times 1..N.
        p: (N, n_p) scheduling sequence, times 1..N.
        init: past samples; zero when omitted.
        strict: reject scheduling samples outside the model's scheduling set.
        tol: membership tolerance for ``strict``.

    Returns:
        (N, n_y) output sequence.
    """
    u = as_sequence(u, model.n_u, "u")
    p = as_sequence(p, model.n_p, "p")
    if len(u) != len(p):
        raise ModelError(f"u has {len(u)} samples but p has {len(p)}")
    if init is None:
        init = InitialCondition.zero(model)
    init.check(model)
    if strict and model.scheduling is not None:
        pts = np.vstack([init.p, p])
        if not model.scheduling.contains_points(pts, tol):
            raise ModelError("scheduling sample outside the declared scheduling set")

    N = len(u)
    na, nb, nr = model.n_a, model.n_b, model.n_r
    Y = np.vstack([np.asarray(init.y, dtype=float), np.zeros((N, model.n_y))])
    U = np.vstack([np.asarray(init.u, dtype=float), u])
    Pe = _extended(np.vstack([np.asarray(init.p, dtype=float), p]), model.n_p)
    # coefficient value at every time: (time, lag, rows, cols)
    A_t = np.einsum("tj,ijrc->tirc", Pe, model.a)
    B_t = np.einsum("tj,ijrc->tirc", Pe, model.b)
    for k in range(N):
        yk = np.zeros(model.n_y)
        for i in range(1, na + 1):
            yk -= A_t[nr + k - i, i - 1] @ Y[na + k - i]
        for i in range(0, nb + 1):
            yk += B_t[nr + k - i, i] @ U[nb + k - i]
        Y[na + k] = yk
    return Y[na:]


def io_residual(model: LpvIoModel, u, p, y, start: Optional[int] = None) -> np.ndarray:
    """Difference-equation residual at every time with a full lag window.

    Returns an array of shape (N - start, n_y) where ``start`` defaults to ``n_r``.
    """
    u = as_sequence(u, model.n_u, "u")
    p = as_sequence(p, model.n_p, "p")
    y = as_sequence(y, model.n_y, "y")
    a, b = model.padded()
    nr = model.n_r
    start = nr if start is None else start
    Pe = _extended(p, model.n_p)
    res = []
    for k in range(start, len(u)):
        r = y[k] - np.tensordot(Pe[k], b[0], axes=(0, 0)) @ u[k]
        for i in range(1, nr + 1):
            r += np.tensordot(Pe[k - i], a[i - 1], axes=(0, 0)) @ y[k - i]
            r -= np.tensordot(Pe[k - i], b[i], axes=(0, 0)) @ u[k - i]
        res.append(r)
    return np.array(res).reshape(-1, model.n_y)


@dataclass(frozen=True)
class LpvSsModel:
    """State-space model with affine scheduling dependence.

    Each of ``A, B, C, D`` has shape (n_p + 1, rows, cols); slot 0 is the
    constant part and slot ``j`` multiplies ``p_j``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for key in ("A", "B", "C", "D"):
            object.__setattr__(self, key, _frozen(getattr(self, key)))
        n_x = self.A.shape[1]
        if self.A.shape[2] != n_x or self.B.shape[1] != n_x or self.C.shape[2] != n_x:
            raise ModelError("inconsistent state dimension")
        if self.D.shape[1:] != (self.C.shape[1], self.B.shape[2]):
            raise ModelError("D must be n_y x n_u")
        if len({self.A.shape[0], self.B.shape[0], self.C.shape[0], self.D.shape[0]}) != 1:
            raise ModelError("all matrices need the same number of scheduling slots")

    @property
    def n_x(self) -> int:
        return self.A.shape[1]

    @property
    def n_u(self) -> int:
        return self.B.shape[2]

    @property
    def n_y(self) -> int:
        return self.C.shape[1]

    @property
    def n_p(self) -> int:
        return self.A.shape[0] - 1

    def at(self, p) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Frozen matrices ``(A(p), B(p), C(p), D(p))``."""
        pe = _extended(p, self.n_p)
        return tuple(np.tensordot(pe, M, axes=(0, 0)) for M in (self.A, self.B, self.C, self.D))


def realize_ss_siso(model: LpvIoModel) -> LpvSsModel:
    """Observable companion realization of a SISO shifted-affine model.

    Uses ``A(p)`` with first column ``-a_i(p)`` and an identity superdiagonal,
    ``B_i(p) = b_i(p) - a_i(p) b_0(p)``, ``C = e_1^T`` and ``D(p) = b_0(p)``.
    ``B`` stays affine only if ``b_0`` or every ``a_i`` is scheduling independent;
    other models are rejected.
    """
    if not model.is_siso:
        raise ModelError("state-space realization is implemented for SISO models only")
    a, b = model.padded()
    n, slots = model.n_r, model.n_p + 1
    a = a[:, :, 0, 0]
    b = b[:, :, 0, 0]
    if np.any(b[0, 1:] != 0) and np.any(a[:, 1:] != 0):
        raise ModelError("scheduling-dependent feedthrough with scheduling-dependent a "
                         "gives a non-affine input matrix; use simulate() instead")
    A = np.zeros((slots, n, n))
    A[0, :-1, 1:] = np.eye(n - 1)
    A[:, :, 0] = -a.T
    B = np.zeros((slots, n, 1))
    b0 = b[0]
    b0_varies = bool(np.any(b0[1:] != 0))
    for i in range(1, n + 1):
        # a_i(p) b_0(p) stays affine because one factor is constant
        prod = a[i - 1, 0] * b0 if b0_varies else a[i - 1] * b0[0]
        B[:, i - 1, 0] = b[i] - prod
    C = np.zeros((slots, 1, n))
    C[0, 0, 0] = 1.0
    D = b0.reshape(slots, 1, 1)
    return LpvSsModel(A, B, C, D)


def simulate_ss(ss: LpvSsModel, u, p, x0=None) -> tuple[np.ndarray, np.ndarray]:
    """Forward recursion ``x+ = A(p)x + B(p)u``, ``y = C(p)x + D(p)u``.

    Returns:
        states (N + 1, n_x) including ``x0``, and outputs (N, n_y).
    """
    u = as_sequence(u, ss.n_u, "u")
    p = as_sequence(p, ss.n_p, "p")
    if len(u) != len(p):
        raise ModelError(f"u has {len(u)} samples but p has {len(p)}")
    x = np.zeros(ss.n_x) if x0 is None else np.asarray(x0, dtype=float).reshape(ss.n_x)
    X = np.zeros((len(u) + 1, ss.n_x))
    Y = np.zeros((len(u), ss.n_y))
    X[0] = x
    for k in range(len(u)):
        A, B, C, D = ss.at(p[k])
        Y[k] = C @ X[k] + D @ u[k]
        X[k + 1] = A @ X[k] + B @ u[k]
    return X, Y


def io_operator(ss: LpvSsModel, p) -> np.ndarray:
    """Zero-state input-output matrix over the horizon of ``p``.

    Block ``(i, j)`` equals ``C(p_i) A(p_{i-1}) ... A(p_{j+1}) B(p_j)`` below the
    diagonal and ``D(p_i)`` on it, so ``y = T u`` for stacked signals.
    """
    p = as_sequence(p, ss.n_p, "p")
    L, ny, nu = len(p), ss.n_y, ss.n_u
    mats = [ss.at(pk) for pk in p]
    T = np.zeros((L * ny, L * nu))
    for j in range(L):
        T[j * ny:(j + 1) * ny, j * nu:(j + 1) * nu] = mats[j][3]
        G = mats[j][1]  # state response to u_j, propagated forward
        for i in range(j + 1, L):
            T[i * ny:(i + 1) * ny, j * nu:(j + 1) * nu] = mats[i][2] @ G
            G = mats[i][0] @ G
    return T


def observability_operator(ss: LpvSsModel, p) -> np.ndarray:
    """Stacked free response ``[C(p_1); C(p_2)A(p_1); ...]`` over the horizon of ``p``."""
    p = as_sequence(p, ss.n_p, "p")
    rows = []
    G = np.eye(ss.n_x)
    for pk in p:
        A, _, C, _ = ss.at(pk)
        rows.append(C @ G)
        G = A @ G
    return np.vstack(rows)


# -- model files ------------------------------------------------------------

MODEL_SCHEMA = "lpvdiss.model/1"


def model_to_dict(model: LpvIoModel) -> dict:
    out = {
        "schema": MODEL_SCHEMA,
        "name": model.name,
        "n_u": model.n_u,
        "n_y": model.n_y,
        "n_p": model.n_p,
        "n_a": model.n_a,
        "n_b": model.n_b,
        "n_x": model.n_x,
        "a": model.a.tolist(),
        "b": model.b.tolist(),
    }
    if model.notes:
        out["notes"] = model.notes
    if model.scheduling is not None:
        out["scheduling"] = scheduling_to_dict(model.scheduling)
    return out


def model_from_dict(doc: dict) -> LpvIoModel:
    try:
        n_u, n_y, n_p = int(doc["n_u"]), int(doc["n_y"]), int(doc["n_p"])
        n_a, n_b = int(doc["n_a"]), int(doc["n_b"])
        a = np.asarray(doc["a"], dtype=float).reshape(n_a, n_p + 1, n_y, n_y)
        b = np.asarray(doc["b"], dtype=float).reshape(n_b + 1, n_p + 1, n_y, n_u)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"model document is missing or has a malformed field: {exc}") from exc
    except ValueError as exc:
        raise ModelError(f"coefficient table has the wrong size: {exc}") from exc
    sched = doc.get("scheduling")
    return LpvIoModel(
        a, b, doc.get("n_x"),
        scheduling_from_dict(sched) if sched else None,
        name=doc.get("name", ""),
        notes=doc.get("notes", ""),
    )


def load_model(path) -> LpvIoModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not a valid model file ({exc})") from exc
    return model_from_dict(doc)


def save_model(model: LpvIoModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), indent=2) + "\n")
    return path
