"""Unbalanced disc in closed loop with a FIR gain-scheduled controller.

The Euler-discretized plant

    theta_k = -c1 theta_{k-1} - c2 theta_{k-2} - c3 sin(theta_{k-2}) + c4 u_{k-2}

with ``c1 = Ts/tau - 2``, ``c2 = 1 - Ts/tau``, ``c3 = Ts^2 mgl/J`` and
``c4 = Ts^2 K_m/tau`` is closed by ``u_k = sum_i k_i(p_{k-i}) e_{k-i}``,
``e_k = r_k - theta_k``. Writing ``sin(theta) = sinc(theta) theta`` and
scheduling on ``p_k = sinc(theta_k)`` turns the loop ``r -> e`` into a
fourth-order shifted-affine model.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .datadict import DataDictionary
from .model import LpvIoModel, as_sequence
from .scheduling import BoxPolytope, scheduling_to_dict

# Row i holds (k_{i,0}, k_{i,1}) so that k_i(p) = k_{i,0} + k_{i,1} p.
DEFAULT_GAINS = np.array([[-80.0, 1.5], [80.0, -3.0], [-3.0, 0.3]])

# Smallest value of sin(x)/x is about -0.2172, attained near x = 4.4934.
SINC_RANGE = (-0.22, 1.0)


@dataclass(frozen=True)
class DiscParams:
    """Physical constants of the disc; the defaults are placeholders.

    The sign of ``K_m`` is chosen so that the default controller, whose
    static gain is negative, closes a stabilizing loop.
    """

    mgl_J: float = 125.3
    tau: float = 0.40
    K_m: float = -11.0
    Ts: float = 0.01

    def __post_init__(self):
        if not self.Ts > 0:
            raise ValueError("sampling time must be positive")
        if not self.tau > 0:
            raise ValueError("time constant must be positive")

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        Ts, tau = self.Ts, self.tau
        return Ts / tau - 2.0, 1.0 - Ts / tau, Ts**2 * self.mgl_J, Ts**2 * self.K_m / tau


def sinc(theta) -> np.ndarray:
    """``sin(theta)/theta`` with a Taylor expansion for ``|theta| < 1e-6``."""
    th = np.asarray(theta, dtype=float)
    small = np.abs(th) < 1e-6
    safe = np.where(small, 1.0, th)
    t2 = th * th
    return np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe) / safe)


def _gains(gains) -> np.ndarray:
    g = np.asarray(DEFAULT_GAINS if gains is None else gains, dtype=float)
    if g.ndim != 2 or g.shape[1] != 2 or g.shape[0] < 1:
        raise ValueError("controller gains must have shape (n_k + 1, 2)")
    return g


def disc_closed_loop_model(params: Optional[DiscParams] = None, gains=None) -> LpvIoModel:
    """Shifted-affine model of ``r -> e`` scheduled by ``p = sinc(theta)``."""
    params = params or DiscParams()
    K = _gains(gains)
    c1, c2, c3, c4 = params.coefficients
    n_k = K.shape[0] - 1
    n_a = 2 + n_k
    a = np.zeros((n_a, 2))
    a[0, 0] = c1
    a[1] = [c2, c3]
    for i in range(n_k + 1):
        a[1 + i] += c4 * K[i]
    b = np.array([[1.0, 0.0], [c1, 0.0], [c2, c3]])
    return LpvIoModel(
        a.reshape(n_a, 2, 1, 1), b.reshape(3, 2, 1, 1),
        scheduling=BoxPolytope([SINC_RANGE[0]], [SINC_RANGE[1]]),
        name="unbalanced disc closed loop",
        notes="input r, output e = r - theta, scheduling sinc(theta)",
    )


def unbalanced_disc_closed_loop(r, params: Optional[DiscParams] = None, gains=None,
                                theta0=(0.0, 0.0)) -> tuple[DataDictionary, np.ndarray]:
    """Simulate the nonlinear loop and return the ``(r, p, e)`` record and ``theta``.

    ``theta0 = (theta_{-1}, theta_{-2})``; earlier inputs and errors are zero.
    """
    params = params or DiscParams()
    K = _gains(gains)
    c1, c2, c3, c4 = params.coefficients
    r = as_sequence(r, 1, "r")[:, 0]
    N = len(r)
    n_k = K.shape[0] - 1
    th_hist = [float(theta0[1]), float(theta0[0])]   # theta_{-2}, theta_{-1}
    u_hist = [0.0, 0.0]
    e_hist = [0.0] * n_k
    p_hist = [1.0] * n_k
    theta = np.zeros(N)
    e = np.zeros(N)
    p = np.zeros(N)
    with np.errstate(over="raise", invalid="raise"):
        for k in range(N):
            t2, t1 = th_hist[-2], th_hist[-1]
            th = -c1 * t1 - c2 * t2 - c3 * np.sin(t2) + c4 * u_hist[-2]
            theta[k] = th
            e[k] = r[k] - th
            p[k] = float(sinc(th))
            e_seq = [e[k]] + e_hist[::-1]      # e_k, e_{k-1}, ...
            p_seq = [p[k]] + p_hist[::-1]
            u = sum((K[i, 0] + K[i, 1] * p_seq[i]) * e_seq[i] for i in range(n_k + 1))
            th_hist = [t1, th]
            u_hist = [u_hist[-1], u]
            if n_k:
                e_hist = (e_hist + [e[k]])[-n_k:]
                p_hist = (p_hist + [p[k]])[-n_k:]
    meta = {
        "generator": "unbalanced disc closed loop",
        "n_x": 2 + n_k,
        "params": asdict(params),
        "gains": K.tolist(),
        "scheduling": scheduling_to_dict(BoxPolytope([SINC_RANGE[0]], [SINC_RANGE[1]])),
    }
    return DataDictionary(r[:, None], p[:, None], e[:, None], meta), theta


def step_reference(N: int, rng=None, hold: int = 25, amplitude: float = 3.0,
                   noise: float = 0.3) -> np.ndarray:
    """Random piecewise-constant reference with additive white noise."""
    rng = np.random.default_rng(rng)
    levels = rng.uniform(-amplitude, amplitude, size=N // hold + 1)
    r = np.repeat(levels, hold)[:N]
    return r + noise * rng.standard_normal(N)
