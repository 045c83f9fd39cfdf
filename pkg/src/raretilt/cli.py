"""``tilt`` command-line entry point.

Configuration files are TOML: top-level ``command``, ``seed``, ``out``,
``format`` and ``workers``, plus one table named after the command holding
its parameters (the VaR commands nest the model under ``<command>.model``).
Command-line flags override file values.

Exit status: 0 success, 2 configuration error, 3 domain or precondition
error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional, Sequence

import tomlkit

from . import tables
from .core import DomainError, NumericalError, PreconditionError, TailEvent
from .estimator import CSV_FIELDS, analytic_re, estimate_is, estimate_naive
from .families import FamilySpec, make_family
from .solver import SolverConfig, large_deviation_tilt, solve_optimal_tilt

__all__ = ["ConfigError", "RunConfig", "COMMANDS", "run", "main", "parse_config", "builtin_config"]

FORMATS = ("csv", "markdown")


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


# key -> (kind, default); a default of ``...`` marks the key as required
_F, _I, _S = "float", "int", "str"
COMMANDS: dict[str, dict[str, tuple[str, Any]]] = {
    "solve": {"family": (_S, ...), "a": (_F, ...), "upper": ("bool", True), "tol_rel": (_F, 1e-10),
              "max_iter": (_I, 200), "order": (_S, "inverse")},
    "estimate": {"family": (_S, ...), "a": (_F, ...), "n": (_I, 100_000), "method": (_S, "both"),
                 "theta": (_F, None)},
    "table2": {"families": ("strs", list(tables.TABLE2_FAMILIES)), "probs": ("floats", list(tables.TAIL_PROBS)),
               "n": (_I, 100_000)},
    "table3": {"kappa": (_F, ...), "lambda": (_F, ...), "probs": ("floats", list(tables.TAIL_PROBS)),
               "n": (_I, 10_000)},
    "var": {"thresholds": ("floats", ...), "k": (_I, 1000), "M": (_I, 10_000), "m": (_I, 50_000),
            "model": ("table", ...)},
    "var-quantile": {"probs": ("floats", ...), "n": (_I, 200_000), "budget": (_I, 40),
                     "model": ("table", ...)},
    "bootstrap": {"alphas": ("floats", [0.1, 0.05, 0.01]), "B": (_I, 100), "M": (_I, 10_000),
                  "family": (_S, "normal"), "p_eff": (_I, 7), "divisor": (_I, 15)},
    "coverage": {"methods": ("strs", ["naive", "importance", "importance", "importance"]),
                 "B": ("ints", [1000, 400, 200, 100]), "trials": (_I, 500), "nominal": (_F, 0.95),
                 "divisor": (_I, 15)},
}


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: Optional[str] = None
    format: str = "csv"
    workers: int = 1

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {"command": self.command, "seed": self.seed, "format": self.format,
                               "workers": self.workers}
        if self.out is not None:
            doc["out"] = self.out
        doc[self.command] = {k: v for k, v in self.params.items() if v is not None}
        return doc

    def to_toml(self) -> str:
        return tomlkit.dumps(self.to_dict())


def _line_of(text: str, section: Optional[str], key: str) -> Optional[int]:
    if not text:
        return None
    in_section = section is None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("["):
            in_section = section is not None and s.strip("[]").strip() in (section, f'"{section}"')
            continue
        if in_section and re.match(rf"{re.escape(key)}\s*=", s):
            return i
    return None


def _err(text, section, key, msg):
    line = _line_of(text, section, key)
    where = f"line {line}: " if line else ""
    name = f"{section}.{key}" if section else key
    return ConfigError(f"{where}field '{name}': {msg}")


def _coerce(kind, value, text, section, key):
    def bad(msg):
        return _err(text, section, key, msg)

    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad(f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise bad("must be finite")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad(f"expected an integer, got {value!r}")
        return int(value)
    if kind == "str":
        if not isinstance(value, str):
            raise bad(f"expected a string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise bad(f"expected true or false, got {value!r}")
        return value
    if kind in ("floats", "ints", "strs"):
        if not isinstance(value, list) or not value:
            raise bad("expected a non-empty list")
        return [_coerce(kind[:-1] if kind != "floats" else "float", v, text, section, key) for v in value]
    if kind == "table":
        if not isinstance(value, dict):
            raise bad("expected a table")
        return value
    raise AssertionError(kind)


def _validate(cmd: str, params: dict, text: str = "") -> dict:
    """Type-check ``params`` and apply the owning modules' preconditions."""
    schema = COMMANDS[cmd]
    unknown = set(params) - set(schema)
    if unknown:
        key = sorted(unknown)[0]
        raise _err(text, cmd, key, f"unknown key for command '{cmd}'")
    out = {}
    for key, (kind, default) in schema.items():
        if key in params and params[key] is not None:
            out[key] = _coerce(kind, params[key], text, cmd, key)
        elif default is ...:
            raise _err(text, cmd, key, "required")
        else:
            out[key] = default
    chk = lambda ok, key, msg: None if ok else (_ for _ in ()).throw(_err(text, cmd, key, msg))
    for key in ("n", "k", "M", "m", "trials", "budget", "p_eff", "divisor", "max_iter"):
        if key in out and out[key] is not None:
            chk(out[key] >= 1, key, "must be at least 1")
    if cmd in ("solve", "estimate"):
        try:
            FamilySpec.parse(out["family"])
            make_family(out["family"])
        except (ValueError, KeyError) as exc:
            raise _err(text, cmd, "family", str(exc)) from None
    if cmd == "estimate":
        chk(out["method"] in ("naive", "is", "both"), "method", "must be naive, is or both")
    for key in ("probs", "alphas"):
        if key in out:
            chk(all(0 < v < 1 for v in out[key]), key, "probabilities must lie in (0, 1)")
    if cmd == "var-quantile":
        chk(all(v < 0.5 for v in out["probs"]), "probs", "VaR probabilities must be below 0.5")
    if cmd == "table3":
        chk(out["kappa"] > 0 and out["lambda"] > 0, "kappa", "kappa and lambda must be positive")
    if cmd == "bootstrap":
        chk(out["family"] in ("normal", "chi2"), "family", "must be normal or chi2")
    if cmd == "coverage":
        chk(0 < out["nominal"] < 1, "nominal", "must lie in (0, 1)")
        chk(len(out["methods"]) == len(out["B"]), "B", "needs one entry per method")
        chk(all(m in ("naive", "importance") for m in out["methods"]), "methods",
            "entries must be naive or importance")
        chk(all(b >= 1 for b in out["B"]), "B", "entries must be at least 1")
    if cmd in ("var", "var-quantile"):
        try:
            tables.model_from_dict(out["model"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"section '{cmd}.model': {exc}") from None
    return out


def parse_config(text: str) -> RunConfig:
    try:
        doc = tomlkit.parse(text).unwrap()
    except tomlkit.exceptions.ParseError as exc:
        raise ConfigError(f"line {exc.line}, column {exc.col}: {exc}") from None
    cmd = doc.get("command")
    if cmd not in COMMANDS:
        raise _err(text, None, "command", f"must be one of {sorted(COMMANDS)}")
    extra = set(doc) - {"command", "seed", "out", "format", "workers", cmd}
    if extra:
        raise _err(text, None, sorted(extra)[0], "unknown top-level key")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise _err(text, None, "seed", "must be an integer in [0, 2^64)")
    fmt = doc.get("format", "csv")
    if fmt not in FORMATS:
        raise _err(text, None, "format", f"must be one of {FORMATS}")
    workers = doc.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise _err(text, None, "workers", "must be a positive integer")
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise _err(text, None, "out", "must be a string path")
    params = doc.get(cmd, {})
    if not isinstance(params, dict):
        raise _err(text, None, cmd, "must be a table")
    return RunConfig(cmd, _validate(cmd, params, text), seed, out, fmt, workers)


def builtin_config(name: str) -> str:
    """Text of a committed configuration such as ``"table4"``."""
    fname = name if name.endswith(".toml") else f"{name}.toml"
    res = resources.files("raretilt") / "configs" / fname
    if not res.is_file():
        raise ConfigError(f"no such configuration file or builtin: {name}")
    return res.read_text()


# ----------------------------------------------------------------------- run

def _solve(cfg: RunConfig):
    p = cfg.params
    fam = make_family(p["family"])
    event = TailEvent(p["a"], p["upper"])
    res = solve_optimal_tilt(fam, event, SolverConfig(p["tol_rel"], p["max_iter"], None, p["order"]))
    if not math.isfinite(res.theta_star):
        raise NumericalError(res.message or "solver failed")
    canon, thr = event.canonical(fam)
    try:
        ld = large_deviation_tilt(canon, thr) * (1 if event.upper else -1)
    except DomainError:
        ld = math.nan
    msg = f"θ*={res.theta_star:.6f}  status={res.status.value} iterations={res.iterations}"
    row = {"family": fam.name, "a": p["a"], "upper": p["upper"], "theta_star": res.theta_star,
           "status": res.status.value, "iterations": res.iterations, "theta_ld": ld}
    return [row], msg


def _estimate(cfg: RunConfig):
    p = cfg.params
    fam = make_family(p["family"])
    event = TailEvent(p["a"])
    theta = p["theta"]
    if theta is None and p["method"] != "naive":
        theta = solve_optimal_tilt(fam, event).theta_star
    rows = []
    nv = iv = None
    if p["method"] in ("naive", "both"):
        nv = estimate_naive(fam, event, p["n"], cfg.seed, cfg.workers)
    if p["method"] in ("is", "both"):
        iv = estimate_is(fam, theta, event, p["n"], cfg.seed + 1, cfg.workers)
    re = nv.variance / iv.variance if nv and iv and iv.variance > 0 else math.nan
    re_star = analytic_re(fam, event, theta) if theta is not None else math.nan
    for r in (nv, iv):
        if r is not None:
            rows.append(r.row(re if r is iv else math.nan, re_star if r is iv else math.nan))
    return rows, None


def _dispatch(cfg: RunConfig):
    p, s, w = cfg.params, cfg.seed, cfg.workers
    if cfg.command == "solve":
        return _solve(cfg)
    if cfg.command == "estimate":
        return _estimate(cfg)
    if cfg.command == "table2":
        return tables.table2(p["families"], p["probs"], p["n"], s), None
    if cfg.command == "table3":
        return tables.table3(p["kappa"], p["lambda"], p["probs"], p["n"], s), None
    if cfg.command == "var":
        return tables.table4(p["model"], p["thresholds"], p["k"], p["M"], p["m"], s, w), None
    if cfg.command == "var-quantile":
        return tables.var_quantiles(p["model"], p["probs"], p["n"], s, p["budget"]), None
    if cfg.command == "bootstrap":
        return tables.table5(p["alphas"], p["B"], p["M"], p["family"], p["p_eff"], p["divisor"], s, w), None
    if cfg.command == "coverage":
        runs = list(zip(p["methods"], p["B"]))
        return tables.table6(runs, p["trials"], p["nominal"], p["divisor"], s, w), None
    raise ConfigError(f"unknown command {cfg.command!r}")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def format_rows(rows: Sequence[dict], fmt: str, columns: Optional[Sequence[str]] = None) -> str:
    if not rows:
        return ""
    cols = list(columns or rows[0].keys())
    if fmt == "markdown":
        lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
        lines += ["| " + " | ".join(_fmt(r.get(c, "")) for c in cols) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tilt-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute ``cfg``; returns the process exit status."""
    stdout = stdout or sys.stdout
    rows, message = _dispatch(cfg)
    columns = CSV_FIELDS if cfg.command == "estimate" else None
    text = format_rows(rows, cfg.format, columns)
    if message:
        print(message, file=stdout)
    if cfg.out:
        _write_atomic(cfg.out, text)
    elif not message:
        stdout.write(text)
    return 0


# ----------------------------------------------------------------------- main

_OVERRIDES = {
    "family": str, "a": float, "n": int, "method": str, "theta": float, "kappa": float,
    "lambda": float, "k": int, "M": int, "m": int, "B": str, "trials": int, "nominal": float,
    "probs": str, "alphas": str, "thresholds": str, "families": str, "budget": int, "p_eff": int,
    "divisor": int, "order": str,
}
_LIST_KIND = {"probs": float, "alphas": float, "thresholds": float, "families": str, "B": int}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tilt", description="Rare-event estimation by optimal exponential tilting.")
    ap.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="TOML run configuration (path or builtin name, e.g. table4)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="write the report here (atomically) instead of stdout")
    ap.add_argument("--format", choices=FORMATS)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--lower", action="store_true", help="solve: lower-tail event {X < a}")
    for key, typ in _OVERRIDES.items():
        ap.add_argument(f"--{key}", dest=f"ov_{key}", type=typ, default=None)
    return ap


def _config_from_args(args) -> RunConfig:
    if args.config:
        path = args.config
        text = open(path).read() if os.path.exists(path) else builtin_config(path)
        base = parse_config(text)
        if args.command and args.command != base.command:
            raise ConfigError(f"command {args.command!r} conflicts with config command {base.command!r}")
    else:
        if not args.command:
            raise ConfigError("a command or --config is required")
        text = ""
        base = None
    cmd = base.command if base else args.command
    params = dict(base.params) if base else {}
    for key, typ in _OVERRIDES.items():
        val = getattr(args, f"ov_{key}")
        if val is None:
            continue
        if key not in COMMANDS[cmd]:
            raise ConfigError(f"option --{key} does not apply to command '{cmd}'")
        if key in _LIST_KIND:
            try:
                val = [_LIST_KIND[key](v) for v in str(val).split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"option --{key}: expected a comma-separated list") from None
        params[key] = val
    if args.lower:
        if cmd != "solve":
            raise ConfigError("--lower applies only to 'solve'")
        params["upper"] = False
    params = _validate(cmd, params, text)
    seed = args.seed if args.seed is not None else (base.seed if base else 0)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must lie in [0, 2^64)")
    workers = args.workers if args.workers is not None else (base.workers if base else 1)
    if workers < 1:
        raise ConfigError("workers must be positive")
    return RunConfig(cmd, params, seed, args.out if args.out else (base.out if base else None),
                     args.format or (base.format if base else "csv"), workers)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config_from_args(args)
        return run(cfg)
    except ConfigError as exc:
        print(f"tilt: config error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, PreconditionError) as exc:
        print(f"tilt: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"tilt: numerical failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"tilt: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
