"""Dissipativity analysis of LPV input-output systems from a single data record."""

from .certify import (
    CertificationProblem,
    VerificationOutcome,
    VerifyOptions,
    load_outcome,
    run_method,
    save_outcome,
)
from .datadict import DataDictionary, check_pe, generate_dictionary, read_dictionary, write_dictionary
from .model import LpvIoModel, load_model, save_model, simulate, supply_from_spec
from .scheduling import BoxPolytope, QuadraticBall, VertexPolytope

__version__ = "0.1.0"

__all__ = [
    "BoxPolytope", "CertificationProblem", "DataDictionary", "LpvIoModel", "QuadraticBall",
    "VerificationOutcome", "VerifyOptions", "VertexPolytope", "check_pe", "generate_dictionary",
    "load_model", "load_outcome", "read_dictionary", "run_method", "save_model", "save_outcome",
    "simulate", "supply_from_spec", "write_dictionary", "__version__",
]
