"""Result record of a verification run and its JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

OUTCOME_SCHEMA = "lpvdiss.outcome/1"
METHODS = ("CHA", "CHAr", "SP", "SDM", "MBA", "FIXED_P")
MODES = ("feasibility", "gain")
VERDICTS = ("certified", "not-certified", "inconclusive")

# Methods whose positive answer implies the property; the others are necessary-side estimates.
SUFFICIENT = {"CHA", "CHAr", "SP"}


@dataclass
class VerificationOutcome:
    """What a verification method concluded.

    Attributes:
        method: one of ``METHODS``.
        mode: ``feasibility`` for a fixed supply rate, ``gain`` for gamma minimization.
        verdict: ``certified``, ``not-certified`` or ``inconclusive``.
        gamma: L2-gain bound, present exactly in gain mode when a value was found.
        payload: multipliers found by the solver (arrays or lists of arrays).
        stats: solver statistics.
        n_lmis: number of matrix inequalities in the program.
        n_variables: number of scalar decision variables.
        info: method-specific extras (vertex count, sample count, margins).
    """

    method: str
    mode: str
    verdict: str
    gamma: Optional[float] = None
    payload: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    n_lmis: int = 0
    n_variables: int = 0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.gamma is not None and self.mode != "gain":
            raise ValueError("gamma is only reported in gain mode")

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    @property
    def sufficient_only(self) -> bool:
        return self.method in SUFFICIENT

    @property
    def wall_time(self) -> float:
        return float(self.stats.get("wall_time", 0.0))

    def summary(self) -> str:
        parts = [f"{self.method} [{self.mode}] {self.verdict}"]
        if self.gamma is not None:
            parts.append(f"gamma = {self.gamma:.6f}")
        parts.append(f"{self.n_lmis} LMIs, {self.n_variables} variables, {self.wall_time:.3f} s")
        return ", ".join(parts)

    def to_dict(self, include_payload: bool = True) -> dict:
        return {
            "schema": OUTCOME_SCHEMA,
            "method": self.method,
            "mode": self.mode,
            "verdict": self.verdict,
            "gamma": self.gamma,
            "n_lmis": self.n_lmis,
            "n_variables": self.n_variables,
            "stats": _jsonable(self.stats),
            "info": _jsonable(self.info),
            "payload": _jsonable(self.payload) if include_payload else {},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "VerificationOutcome":
        if doc.get("schema") != OUTCOME_SCHEMA:
            raise ValueError(f"unsupported outcome schema {doc.get('schema')!r}")
        return cls(
            method=doc["method"], mode=doc["mode"], verdict=doc["verdict"], gamma=doc.get("gamma"),
            payload=doc.get("payload", {}), stats=doc.get("stats", {}),
            n_lmis=int(doc.get("n_lmis", 0)), n_variables=int(doc.get("n_variables", 0)),
            info=doc.get("info", {}),
        )


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def save_outcome(outcome: VerificationOutcome, path, extra: Optional[dict] = None,
                 include_payload: bool = True) -> Path:
    doc = outcome.to_dict(include_payload)
    if extra:
        doc.update(_jsonable(extra))
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def load_outcome(path) -> VerificationOutcome:
    return VerificationOutcome.from_dict(json.loads(Path(path).read_text()))
