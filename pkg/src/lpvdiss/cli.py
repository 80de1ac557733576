"""Command-line front end.

Exit codes: 0 success or certified, 1 not certified (or PE failed),
2 usage error, inconclusive result or runtime failure.

Settings come from three layers: built-in defaults, a JSON file given with
``--config`` and flags typed on the command line, later layers winning.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .certify import CertificationProblem, VerifyOptions, run_method, save_outcome
from .certify.outcome import SUFFICIENT
from .datadict import (
    DictionaryError,
    check_pe,
    dictionary_scheduling,
    generate_dictionary,
    read_dictionary,
    write_dictionary,
)
from .model import ModelError, load_model, supply_from_spec
from .reproduce import EXAMPLES, example_model, reproduce, sweep
from .scheduling import BoxPolytope, QuadraticBall, SchedulingError, pe_samples

EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_ERROR = 0, 1, 2
METHODS = ("CHA", "CHAr", "SP", "SDM", "MBA", "FIXED_P")

DEFAULTS = {
    "model": None, "dict": None, "out": None, "method": "CHA", "L": None, "ell": None,
    "supply": "l2", "gamma_min": False, "ns": 100, "seed": 0, "N": None, "nx": None,
    "rate_bound": None, "pmax": None, "nominal": None, "multiplier": "constant",
    "backend": "ipm", "L_range": None, "methods": None, "workers": 1, "n_random": 25,
}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file with settings; flags given here take precedence")
    common.add_argument("--seed", type=int, help="RNG seed (default 0)")
    common.add_argument("--out", help="output file or directory")

    data_opts = argparse.ArgumentParser(add_help=False, argument_default=S)
    data_opts.add_argument("--model", help="model file or example name (ex1, ex2, ex3)")
    data_opts.add_argument("--dict", help="dictionary file")
    data_opts.add_argument("-L", type=int, dest="L", help="horizon")
    data_opts.add_argument("--ell", type=int, help="zero-prefix length (default: model lag)")
    data_opts.add_argument("--supply", help="l2, l2:<gamma>, passivity or a JSON {Q,S,R}")
    data_opts.add_argument("--gamma-min", action="store_true", dest="gamma_min",
                           help="minimize the L2 gain (same as --supply l2)")
    data_opts.add_argument("--ns", type=int, help="sample count for SDM and FIXED_P")
    data_opts.add_argument("--rate-bound", dest="rate_bound", help="rate interval lo,hi added to a box set")
    data_opts.add_argument("--pmax", type=float, help="ball radius for SP")
    data_opts.add_argument("--nominal", help="ball center for SP: a value or comma list")
    data_opts.add_argument("--multiplier", choices=["constant", "affine"], help="CHA multiplier form")
    data_opts.add_argument("--backend", choices=["ipm", "cvxopt"], help="SDP backend")

    p = argparse.ArgumentParser(prog="lpvdiss", description="Data-based dissipativity checks for LPV systems.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], argument_default=S,
                       help="simulate a model into a dictionary file")
    s.add_argument("--model", help="model file or example name")
    s.add_argument("-N", type=int, dest="N", help="record length")
    s.add_argument("-L", type=int, dest="L", help="horizon for the PE report")

    s = sub.add_parser("pe", parents=[common], argument_default=S, help="check persistency of excitation")
    s.add_argument("--dict", help="dictionary file")
    s.add_argument("-L", type=int, dest="L", help="horizon")
    s.add_argument("--nx", type=int, help="system order (default: from the dictionary)")
    s.add_argument("--n-random", type=int, dest="n_random", help="random trajectories besides vertices")

    s = sub.add_parser("verify", parents=[common, data_opts], argument_default=S, help="run one method")
    s.add_argument("--method", help=f"one of {', '.join(METHODS)}")

    s = sub.add_parser("sweep", parents=[common, data_opts], argument_default=S,
                       help="gamma per horizon and method as CSV")
    s.add_argument("--L-range", dest="L_range", help="first:last horizon, inclusive")
    s.add_argument("--methods", help="comma-separated methods")
    s.add_argument("--workers", type=int, help="parallel cells")

    s = sub.add_parser("reproduce", parents=[common], argument_default=S, help="run a worked example")
    s.add_argument("example", choices=EXAMPLES)
    s.add_argument("--backend", choices=["ipm", "cvxopt"], help="SDP backend")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    given = vars(args).copy()
    cfg = dict(DEFAULTS)
    path = given.pop("config", None)
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(doc) - set(DEFAULTS) - {"command", "example"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    cfg.update(given)
    return cfg


def config_hash(cfg: dict) -> str:
    keep = {k: v for k, v in cfg.items() if k != "out"}
    blob = json.dumps(keep, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _stamp(cfg: dict) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg["seed"], "config": cfg}


def _load_model(spec):
    if spec is None:
        return None
    if spec in EXAMPLES:
        return example_model(spec)
    return load_model(spec)


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _scheduling(cfg, data, model):
    s = dictionary_scheduling(data) if data is not None else None
    if s is None and model is not None:
        s = model.scheduling
    if cfg["rate_bound"] is not None:
        if not isinstance(s, BoxPolytope):
            raise UsageError("--rate-bound needs a box scheduling set")
        lo, hi = _floats(cfg["rate_bound"])
        s = s.with_rate(np.full(s.n_p, lo), np.full(s.n_p, hi))
    if cfg["method"] and cfg["method"].upper() == "SP" and cfg["pmax"] is not None and cfg["nominal"] is not None \
            and s is None:
        s = QuadraticBall(_floats(cfg["nominal"]), float(cfg["pmax"]))
    return s


def _supply(cfg, n_u, n_y):
    if cfg["gamma_min"]:
        return None
    spec = cfg["supply"]
    if isinstance(spec, str) and spec.strip().startswith("{"):
        spec = json.loads(spec)
    return supply_from_spec(spec, n_u, n_y)


def _method(name) -> str:
    if name is None:
        raise UsageError("no method given")
    for m in METHODS:
        if m.upper() == str(name).upper().replace("-", "_"):
            return m
    raise UsageError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")


# -- commands ---------------------------------------------------------------

def cmd_simulate(cfg) -> int:
    model = _load_model(cfg["model"])
    if model is None:
        raise UsageError("simulate needs --model")
    if cfg["N"] is None or cfg["N"] < 1:
        raise UsageError("simulate needs -N >= 1")
    data = generate_dictionary(model, int(cfg["N"]), seed=cfg["seed"])
    data.metadata.update(config_hash=config_hash(cfg))
    if cfg["out"]:
        write_dictionary(data, cfg["out"])
        print(f"wrote {cfg['out']} (N={data.N}, seed={cfg['seed']}, config {config_hash(cfg)})")
    L = cfg["L"] if cfg["L"] is not None else model.n_x + model.n_r + 1
    if L > data.N:
        print(f"PE at (L={L}, n_x={model.n_x}): FAIL (record shorter than the horizon)")
        return EXIT_NOT_CERTIFIED
    pe = check_pe(data, L, model.n_x, pe_samples(model.scheduling, L, cfg["n_random"], rng=cfg["seed"]))
    print(f"PE at (L={L}, n_x={model.n_x}): {'PASS' if pe.passed else 'FAIL'} "
          f"(min dim {pe.min_dim}, required {pe.required}, sampled)")
    return EXIT_OK if pe.passed else EXIT_NOT_CERTIFIED


def cmd_pe(cfg) -> int:
    if not cfg["dict"] or cfg["L"] is None:
        raise UsageError("pe needs --dict and -L")
    data = read_dictionary(cfg["dict"])
    n_x = cfg["nx"] if cfg["nx"] is not None else data.n_x
    if n_x is None:
        raise UsageError("the dictionary does not declare n_x; pass --nx")
    s = dictionary_scheduling(data)
    if s is None:
        raise UsageError("the dictionary does not record a scheduling set")
    L = int(cfg["L"])
    if L > data.N:
        print(f"PE at (L={L}, n_x={n_x}): FAIL (record shorter than the horizon)")
        return EXIT_NOT_CERTIFIED
    pe = check_pe(data, L, n_x, pe_samples(s, L, cfg["n_random"], rng=cfg["seed"]))
    print(json.dumps({**pe.to_dict(), **{k: v for k, v in _stamp(cfg).items() if k != "config"}}))
    return EXIT_OK if pe.passed else EXIT_NOT_CERTIFIED


def _problem(cfg, L):
    data = read_dictionary(cfg["dict"]) if cfg["dict"] else None
    model = _load_model(cfg["model"])
    if data is None:
        if model is None:
            raise UsageError("need --dict (or --model to generate data)")
        raise UsageError("data-based methods need --dict; generate one with 'simulate'")
    s = _scheduling(cfg, data, model)
    n_r = model.n_r if model is not None else None
    ell = cfg["ell"] if cfg["ell"] is not None else (n_r if n_r is not None else data.metadata.get("n_x"))
    if ell is None:
        raise UsageError("pass --ell (no model lag known)")
    supply = _supply(cfg, data.n_u, data.n_y)
    return CertificationProblem(data, int(L), int(ell), supply, s, n_r=n_r), model


def cmd_verify(cfg) -> int:
    method = _method(cfg["method"])
    opts = VerifyOptions(backend=cfg["backend"])
    kw = {"multiplier": cfg["multiplier"], "n_samples": cfg["ns"], "rng": cfg["seed"], "p_max": cfg["pmax"],
          "nominal": _floats(cfg["nominal"]) if cfg["nominal"] is not None else None}
    if method == "MBA" and not cfg["dict"]:
        model = _load_model(cfg["model"])
        if model is None or cfg["L"] is None:
            raise UsageError("MBA without a dictionary needs --model and -L (the horizon)")
        from .certify import verify_mba

        supply = _supply(cfg, model.n_u, model.n_y)
        s = _scheduling(cfg, None, model)
        out = verify_mba(model, int(cfg["L"]), supply, scheduling=s, options=opts)
    else:
        if cfg["L"] is None:
            raise UsageError("verify needs -L")
        problem, model = _problem(cfg, cfg["L"])
        if method == "MBA":
            if model is None:
                raise UsageError("MBA needs --model")
            kw["model"] = model
        out = run_method(method, problem, opts, **kw)
    print(out.summary())
    if out.sufficient_only:
        print("note: sufficient-only condition; " + ("the true bound may be lower" if out.certified
              else "failure does not show the property is violated"))
    if method in ("SDM", "FIXED_P"):
        print("note: sampled necessary-side estimate; not a certificate for the whole scheduling set")
    if cfg["out"]:
        save_outcome(out, cfg["out"], extra=_stamp(cfg))
    if out.verdict == "certified":
        return EXIT_OK
    return EXIT_NOT_CERTIFIED if out.verdict == "not-certified" else EXIT_ERROR


SWEEP_FIELDS = ["L", "method", "gamma", "verdict", "wall_time", "n_lmis", "n_variables", "error"]


def write_sweep_csv(rows, path, stamp: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash: {stamp['config_hash']}\n# seed: {stamp['seed']}\n")
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in SWEEP_FIELDS})


def cmd_sweep(cfg) -> int:
    if not cfg["L_range"]:
        raise UsageError("sweep needs --L-range first:last")
    try:
        a, _, b = str(cfg["L_range"]).partition(":")
        Ls = list(range(int(a), int(b or a) + 1))
    except ValueError as exc:
        raise UsageError(f"bad --L-range {cfg['L_range']!r}") from exc
    if not Ls:
        raise UsageError("empty horizon range")
    methods = [_method(m) for m in (cfg["methods"] or cfg["method"]).split(",") if m.strip()]
    if not methods:
        raise UsageError("no methods given")
    problem, model = _problem(cfg, Ls[0])
    if problem.supply is not None:
        raise UsageError("sweep minimizes gamma; use --supply l2")
    nominal = _floats(cfg["nominal"]) if cfg["nominal"] is not None else None
    rows = sweep(problem.data, problem.scheduling, Ls, problem.ell, methods, model,
                 VerifyOptions(backend=cfg["backend"]), cfg["ns"], cfg["seed"], cfg["workers"],
                 cfg["pmax"], nominal)
    for r in rows:
        g = "-" if r["gamma"] is None else f"{r['gamma']:.6f}"
        print(f"L={r['L']:3d} {r['method']:8s} gamma={g:>10s} {r['verdict']:14s} {r['wall_time']:.3f}s {r['error']}")
    if cfg["out"]:
        write_sweep_csv(rows, cfg["out"], _stamp(cfg))
    if any(r["error"] or r["verdict"] == "inconclusive" for r in rows):
        return EXIT_ERROR
    return EXIT_OK if all(r["verdict"] == "certified" for r in rows) else EXIT_NOT_CERTIFIED


def cmd_reproduce(cfg) -> int:
    ex = cfg["example"]
    rep = reproduce(ex, cfg["seed"], VerifyOptions(backend=cfg["backend"]),
                    log=lambda s: print(s, file=sys.stderr))
    for c in rep.checks:
        print(c.line())
    for e in rep.stage_errors:
        print(f"[FAIL] stage error: {e}")
    out = Path(cfg["out"] or f"report_{ex}")
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(cfg)
    (out / "report.json").write_text(json.dumps({**stamp, **rep.to_dict()}, indent=2, default=_json_default) + "\n")
    if ex == "ex2" and rep.rows:
        write_sweep_csv(rep.rows, out / "sweep.csv", stamp)
    print(f"report written to {out}/ ({'PASS' if rep.passed else 'FAIL'})")
    if rep.stage_errors:
        return EXIT_ERROR
    return EXIT_OK if rep.passed else EXIT_NOT_CERTIFIED


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


COMMANDS = {"simulate": cmd_simulate, "pe": cmd_pe, "verify": cmd_verify,
            "sweep": cmd_sweep, "reproduce": cmd_reproduce}


def main(argv: Optional[list] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg["command"]](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ModelError, DictionaryError, SchedulingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
