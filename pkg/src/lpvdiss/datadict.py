"""Data dictionaries, Hankel matrices and persistency-of-excitation checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .lmi.linalg import nullspace_basis, rowspace_basis
from .model import LpvIoModel, as_sequence, simulate
from .scheduling import SchedulingSet, sample_sequence, scheduling_from_dict, scheduling_to_dict

DICT_SCHEMA = "lpvdiss.dictionary/1"


class DictionaryError(ValueError):
    """Raised for malformed dictionaries or files."""


@dataclass(frozen=True)
class DataDictionary:
    """One measured record of inputs, scheduling and outputs.

    Attributes:
        u: (N, n_u) inputs.
        p: (N, n_p) scheduling samples.
        y: (N, n_y) outputs.
        metadata: generator description, seed, declared order and similar.
    """

    u: np.ndarray
    p: np.ndarray
    y: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        u, p, y = (as_sequence(s, name=k) for s, k in ((self.u, "u"), (self.p, "p"), (self.y, "y")))
        if not (len(u) == len(p) == len(y)):
            raise DictionaryError(f"signal lengths differ: u {len(u)}, p {len(p)}, y {len(y)}")
        if len(u) < 1:
            raise DictionaryError("dictionary is empty")
        for k, v in (("u", u), ("p", p), ("y", y)):
            v = v.copy()
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def n_u(self) -> int:
        return self.u.shape[1]

    @property
    def n_p(self) -> int:
        return self.p.shape[1]

    @property
    def n_y(self) -> int:
        return self.y.shape[1]

    @property
    def n_x(self) -> Optional[int]:
        v = self.metadata.get("n_x")
        return None if v is None else int(v)

    def check_scheduling(self, s: SchedulingSet, tol: float = 1e-9) -> bool:
        return s.contains_trajectory(self.p, tol)

    def scaled(self, alpha_u: float = 1.0, alpha_y: float = 1.0) -> "DataDictionary":
        return DataDictionary(alpha_u * self.u, self.p, alpha_y * self.y, dict(self.metadata))


@dataclass(frozen=True)
class HankelStack:
    """Depth-``L`` Hankel matrices of a dictionary.

    ``H_up`` and ``H_yp`` hold the Hankel matrices of ``p_k kron u_k`` and
    ``p_k kron y_k``.
    """

    H_u: np.ndarray
    H_y: np.ndarray
    H_up: np.ndarray
    H_yp: np.ndarray
    L: int

    @property
    def columns(self) -> int:
        return self.H_u.shape[1]

    @property
    def io(self) -> np.ndarray:
        return np.vstack([self.H_u, self.H_y])

    @property
    def all_rows(self) -> np.ndarray:
        return np.vstack([self.H_u, self.H_y, self.H_up, self.H_yp])


def hankel(seq, L: int) -> np.ndarray:
    """Depth-``L`` block Hankel matrix, shape (L*dim, N-L+1); block (i, j) is ``seq[i+j]``."""
    s = as_sequence(seq, name="sequence")
    N, dim = s.shape
    if not 1 <= L <= N:
        raise DictionaryError(f"depth L = {L} must lie in [1, {N}]")
    win = sliding_window_view(s, L, axis=0)  # (N-L+1, dim, L)
    return np.ascontiguousarray(win.transpose(2, 1, 0).reshape(L * dim, N - L + 1))


def kron_sequence(p, u) -> np.ndarray:
    """Sample-wise Kronecker products ``p_k kron u_k``, shape (N, n_p*n_u)."""
    p = as_sequence(p, name="p")
    u = as_sequence(u, name="u")
    if len(p) != len(u):
        raise DictionaryError(f"length mismatch: p {len(p)}, u {len(u)}")
    return np.einsum("ki,kj->kij", p, u).reshape(len(p), -1)


def blockdiag_kron(p_traj, n: int) -> np.ndarray:
    """Block-diagonal operator with blocks ``p_i kron I_n``, shape (L*n_p*n, L*n)."""
    p = as_sequence(p_traj, name="p")
    L, n_p = p.shape
    if n < 1:
        raise DictionaryError("n must be positive")
    out = np.zeros((L * n_p * n, L * n))
    eye = np.eye(n)
    for i in range(L):
        out[i * n_p * n:(i + 1) * n_p * n, i * n:(i + 1) * n] = np.kron(p[i][:, None], eye)
    return out


def hankel_stack(data: DataDictionary, L: int) -> HankelStack:
    if L > data.N:
        raise DictionaryError(f"horizon L = {L} exceeds the record length N = {data.N}")
    return HankelStack(
        hankel(data.u, L),
        hankel(data.y, L),
        hankel(kron_sequence(data.p, data.u), L),
        hankel(kron_sequence(data.p, data.y), L),
        L,
    )


def scheduling_constraint(stack: HankelStack, p_traj, n_u: int, n_y: int) -> np.ndarray:
    """Rows ``[H_up - Pu H_u; H_yp - Py H_y]`` that vanish on trajectories scheduled by ``p_traj``."""
    p = as_sequence(p_traj, name="p")
    if len(p) != stack.L:
        raise DictionaryError(f"scheduling trajectory has length {len(p)}, expected {stack.L}")
    return np.vstack([
        stack.H_up - blockdiag_kron(p, n_u) @ stack.H_u,
        stack.H_yp - blockdiag_kron(p, n_y) @ stack.H_y,
    ])


def build_dd_stack(data: DataDictionary, L: int, p_traj) -> tuple[np.ndarray, np.ndarray]:
    """Left-hand side of the data-driven representation, split as ``([H_u; H_y], F2)``."""
    if data.N <= L:
        raise DictionaryError(f"need N > L, got N = {data.N}, L = {L}")
    stack = hankel_stack(data, L)
    p = as_sequence(p_traj, data.n_p, "p")
    return stack.io, scheduling_constraint(stack, p, data.n_u, data.n_y)


def dd_residual(data: DataDictionary, L: int, u_traj, p_traj, y_traj) -> tuple[float, np.ndarray]:
    """Least-squares residual norm of the data-driven representation for one trajectory."""
    top, bottom = build_dd_stack(data, L, p_traj)
    u = as_sequence(u_traj, data.n_u, "u")
    y = as_sequence(y_traj, data.n_y, "y")
    lhs = np.vstack([top, bottom])
    rhs = np.concatenate([u.ravel(), y.ravel(), np.zeros(bottom.shape[0])])
    g, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return float(np.linalg.norm(lhs @ g - rhs)), g


PROJECTION_TOL = 1e-10


def projection_dimension(null_basis: np.ndarray, row_basis: np.ndarray, tol: Optional[float] = None) -> int:
    """Dimension of the orthogonal projection of span(row_basis) onto span(null_basis).

    Both arguments hold basis vectors as columns; they are re-orthonormalized.
    The singular values of the projection are cosines of principal angles,
    absolute numbers in [0, 1]; those below ``tol`` count as zero. The default
    ``1e-10`` sits far above the rounding noise of the two basis computations.
    """
    N = np.asarray(null_basis, dtype=float)
    S = np.asarray(row_basis, dtype=float)
    if N.size == 0 or S.size == 0 or N.shape[1] == 0 or S.shape[1] == 0:
        return 0
    Nq, _ = np.linalg.qr(N)
    Sq, _ = np.linalg.qr(S)
    P = Nq.T @ Sq
    s = np.linalg.svd(P, compute_uv=False)
    tol = PROJECTION_TOL if tol is None else tol
    return int(np.sum(s >= tol))


@dataclass
class PEResult:
    """Persistency-of-excitation report.

    ``passed`` holds when every sampled scheduling trajectory reaches the
    required projected dimension; the certificate is only as strong as the sample.
    """

    passed: bool
    required: int
    dims: list[int]
    L: int
    n_x: int

    @property
    def min_dim(self) -> int:
        return min(self.dims)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "required": self.required, "min_dim": self.min_dim,
                "max_dim": max(self.dims), "n_samples": len(self.dims), "L": self.L,
                "n_x": self.n_x, "kind": "sampled"}


def check_pe(data: DataDictionary, L: int, n_x: int, samples, tol: Optional[float] = None,
             rank_tol: Optional[float] = None) -> PEResult:
    """Check the excitation condition at each sampled scheduling trajectory.

    For each sample the row space of ``[H_u; H_y]`` is projected onto the null
    space of the scheduling rows; the projection must have dimension
    ``n_x + n_u * L``.

    Args:
        tol: absolute threshold on the projection cosines.
        rank_tol: relative threshold for the row-space and null-space bases
            (defaults to ``max(rows, cols) * eps``).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[:, :, None]
    if samples.size == 0:
        raise DictionaryError("no scheduling samples given")
    if not (np.any(data.u) or np.any(data.y)):
        raise DictionaryError("dictionary is identically zero")
    required = n_x + data.n_u * L
    if L > data.N:
        return PEResult(False, required, [0] * len(samples), L, n_x)
    stack = hankel_stack(data, L)
    rows = rowspace_basis(stack.io, rank_tol)
    dims = []
    for p in samples:
        F2 = scheduling_constraint(stack, p, data.n_u, data.n_y)
        dims.append(projection_dimension(nullspace_basis(F2, rank_tol), rows, tol))
    return PEResult(all(d == required for d in dims), required, dims, L, n_x)


def io_from_g(data: DataDictionary, L: int, g) -> tuple[np.ndarray, np.ndarray]:
    """Trajectory ``([H_u; H_y] g)`` reshaped to (L, n_u) and (L, n_y) sequences."""
    g = np.asarray(g, dtype=float).ravel()
    cols = data.N - L + 1
    if g.size != cols:
        raise DictionaryError(f"g has length {g.size}, expected {cols}")
    u = hankel(data.u, L) @ g
    y = hankel(data.y, L) @ g
    return u.reshape(L, data.n_u), y.reshape(L, data.n_y)


def generate_dictionary(model: LpvIoModel, N: int, seed: Optional[int] = None,
                        scheduling: Optional[SchedulingSet] = None, input_std: float = 1.0) -> DataDictionary:
    """Simulate a record with i.i.d. normal inputs and admissible random scheduling.

    Scheduling comes from the sampler of ``scheduling`` (the model's set when
    omitted); the initial condition is zero.
    """
    s = scheduling if scheduling is not None else model.scheduling
    if s is None:
        raise DictionaryError("a scheduling set is needed to generate data")
    rng = np.random.default_rng(seed)
    u = input_std * rng.standard_normal((N, model.n_u))
    p = sample_sequence(s, N, rng)
    y = simulate(model, u, p)
    meta = {"generator": f"simulate:{model.name or 'model'}", "seed": seed, "n_x": model.n_x,
            "input": f"normal(0, {input_std})", "scheduling": scheduling_to_dict(s)}
    return DataDictionary(u, p, y, meta)


# -- files --------------------------------------------------------------------

def write_dictionary(data: DataDictionary, path) -> Path:
    """Write a dictionary as commented header lines followed by whitespace-delimited rows."""
    path = Path(path)
    head = {
        "schema": DICT_SCHEMA,
        "N": data.N,
        "n_u": data.n_u,
        "n_p": data.n_p,
        "n_y": data.n_y,
        "seed": data.metadata.get("seed"),
    }
    lines = [f"# {k}: {json.dumps(v)}" for k, v in head.items()]
    extra = {k: v for k, v in data.metadata.items() if k not in head}
    lines.append(f"# metadata: {json.dumps(extra, sort_keys=True)}")
    cols = [f"u{i + 1}" for i in range(data.n_u)] + [f"p{i + 1}" for i in range(data.n_p)]
    cols += [f"y{i + 1}" for i in range(data.n_y)]
    lines.append("# columns: " + json.dumps(cols))
    body = np.hstack([data.u, data.p, data.y])
    lines += [" ".join(repr(float(v)) for v in row) for row in body]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_dictionary(path) -> DataDictionary:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DictionaryError(f"cannot read {path}: {exc}") from exc
    head: dict = {}
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].partition(":")
            if not sep:
                continue
            try:
                head[key.strip()] = json.loads(val)
            except json.JSONDecodeError as exc:
                raise DictionaryError(f"{path}:{lineno}: bad header value for {key.strip()!r}") from exc
            continue
        try:
            rows.append([float(v) for v in line.split()])
        except ValueError as exc:
            raise DictionaryError(f"{path}:{lineno}: non-numeric entry") from exc
    for key in ("N", "n_u", "n_p", "n_y"):
        if key not in head:
            raise DictionaryError(f"{path}: header lacks {key!r}")
    if head.get("schema", DICT_SCHEMA) != DICT_SCHEMA:
        raise DictionaryError(f"{path}: unsupported schema {head.get('schema')!r}")
    n_u, n_p, n_y, N = int(head["n_u"]), int(head["n_p"]), int(head["n_y"]), int(head["N"])
    width = n_u + n_p + n_y
    bad = [i for i, r in enumerate(rows) if len(r) != width]
    if bad:
        raise DictionaryError(f"{path}: row {bad[0] + 1} has {len(rows[bad[0]])} columns, expected {width}")
    if len(rows) != N:
        raise DictionaryError(f"{path}: header says N = {N} but {len(rows)} rows follow")
    body = np.array(rows, dtype=float).reshape(N, width)
    meta = dict(head.get("metadata") or {})
    meta["seed"] = head.get("seed")
    return DataDictionary(body[:, :n_u], body[:, n_u:n_u + n_p], body[:, n_u + n_p:], meta)


def dictionary_scheduling(data: DataDictionary) -> Optional[SchedulingSet]:
    """Scheduling set recorded in the metadata, if any."""
    doc = data.metadata.get("scheduling")
    return scheduling_from_dict(doc) if doc else None


__all__ = [
    "DataDictionary",
    "DictionaryError",
    "HankelStack",
    "PEResult",
    "blockdiag_kron",
    "build_dd_stack",
    "check_pe",
    "dd_residual",
    "dictionary_scheduling",
    "generate_dictionary",
    "hankel",
    "hankel_stack",
    "io_from_g",
    "kron_sequence",
    "projection_dimension",
    "read_dictionary",
    "scheduling_constraint",
    "write_dictionary",
]
