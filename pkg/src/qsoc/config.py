"""Run configuration: a single JSON document, validated with field paths.

Schema (all keys except ``problem`` and ``grid`` optional)::

    {
      "problem": {
        "name": "lq",                  # free | lq | quadratic_control | quadratic_state
        "m": 1,
        "lower": [-1.0], "upper": [1.0],
        "rates": {"a":0.5,"f0":0.3,"g0":0.25,"q":0.4,"r":0.3,"s":0.5},
        "elements": {                  # blade-coefficient lists [[mask,re,im],...]
          "b": [[[0,1,0]]], "f": ..., "g": ...,
          "cd": ..., "cf": ..., "cg": ...,
          "qd": [[0,0.35,0]], "qf": ..., "qg": ...,
          "x_tgt": [[0,0.5,0]], "eta": ..., "x0": [[0,1,0]]
        }
      },
      "grid": {"t0": 0.0, "T": 1.0, "N": 4},
      "suites": ["algebra", ...],      # default: all
      "tolerances": {"algebra": {"laws": 1e-10}},
      "seed": 0,
      "output": "out",
      "emit": ["json", "csv", "plotdata"]
    }

Omitted gallery fields fall back to the canonical instance for the problem
name.  Unknown keys anywhere are rejected so typos cannot silently change a
run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .clifford import DEFAULT_GENERATOR_CAP
from .errors import ConfigError
from .problems import GALLERY_NAMES, ProblemSpec

__all__ = ["RunConfig", "parse_config", "load_config", "SUITE_ORDER", "EMIT_FORMATS"]

SUITE_ORDER = ("algebra", "isometry", "orders", "gradient", "adjoint",
               "second_order", "theorem", "optimize")
EMIT_FORMATS = ("json", "csv", "plotdata")

_RATE_KEYS = ("a", "f0", "g0", "q", "r", "s")
_PER_DIM_ELEMENT_KEYS = ("b", "f", "g", "cd", "cf", "cg")
_SINGLE_ELEMENT_KEYS = ("qd", "qf", "qg", "x_tgt", "eta", "x0")


@dataclass
class RunConfig:
    problem: ProblemSpec
    t0: float
    T: float
    n_steps: int
    suites: list
    tolerances: dict
    seed: int
    output: str | None
    emit: list
    cap: int = DEFAULT_GENERATOR_CAP

    def echo(self) -> dict:
        """Normalized semantic content, used verbatim in reports."""
        spec = self.problem
        elements = {}
        for key in _PER_DIM_ELEMENT_KEYS:
            val = getattr(spec, key)
            if val is not None:
                elements[key] = [[list(term) for term in row] for row in val]
        for key in _SINGLE_ELEMENT_KEYS:
            val = getattr(spec, key)
            if val is not None:
                elements[key] = [list(term) for term in val]
        return {
            "problem": {
                "name": spec.name,
                "m": spec.m,
                "lower": list(spec.lower),
                "upper": list(spec.upper),
                "rates": {k: float(getattr(spec, k)) for k in _RATE_KEYS},
                "elements": elements,
            },
            "grid": {"t0": self.t0, "T": self.T, "N": self.n_steps},
            "suites": list(self.suites),
            "tolerances": self.tolerances,
            "seed": self.seed,
            "emit": list(self.emit),
        }


class _Checker:
    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def fail(self, path, msg):
        self.errors.append((path, msg))

    def expect_keys(self, obj, path, allowed):
        for key in obj:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, "unknown key")

    def number(self, obj, path, default=None, required=False):
        if obj is None:
            if required:
                self.fail(path, "missing required number")
            return default
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            self.fail(path, f"expected number, got {type(obj).__name__}")
            return default
        return float(obj)

    def integer(self, obj, path, default=None, required=False, minimum=None):
        if obj is None:
            if required:
                self.fail(path, "missing required integer")
            return default
        if isinstance(obj, bool) or not isinstance(obj, int):
            self.fail(path, f"expected integer, got {type(obj).__name__}")
            return default
        if minimum is not None and obj < minimum:
            self.fail(path, f"must be >= {minimum}")
            return default
        return int(obj)

    def terms(self, obj, path):
        """[[mask, re, im], ...] -> tuple of term tuples."""
        if not isinstance(obj, list):
            self.fail(path, "expected a list of [mask, re, im] terms")
            return None
        out = []
        for i, term in enumerate(obj):
            if (not isinstance(term, list) or len(term) != 3
                    or isinstance(term[0], bool) or not isinstance(term[0], int)
                    or not all(isinstance(t, (int, float)) and not isinstance(t, bool)
                               for t in term[1:])):
                self.fail(f"{path}[{i}]", "expected [mask:int, re:number, im:number]")
                return None
            out.append((term[0], float(term[1]), float(term[2])))
        return tuple(out)


def _parse_problem(raw: dict, check: _Checker) -> ProblemSpec | None:
    if not isinstance(raw, dict):
        check.fail("problem", "expected an object")
        return None
    check.expect_keys(raw, "problem", {"name", "m", "lower", "upper", "rates", "elements"})
    name = raw.get("name")
    if name not in GALLERY_NAMES or name == "custom":
        check.fail("problem.name", f"expected one of {GALLERY_NAMES[:-1]}")
        return None
    m = check.integer(raw.get("m"), "problem.m", default=1, minimum=1)
    if m is None:
        return None
    base = ProblemSpec.gallery(name, m=m)
    overrides: dict = {}

    for key in ("lower", "upper"):
        if key in raw:
            vals = raw[key]
            if (not isinstance(vals, list) or len(vals) != m
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                               for v in vals)):
                check.fail(f"problem.{key}", f"expected a list of {m} numbers")
            else:
                overrides[key] = tuple(float(v) for v in vals)

    rates = raw.get("rates", {})
    if not isinstance(rates, dict):
        check.fail("problem.rates", "expected an object")
    else:
        check.expect_keys(rates, "problem.rates", set(_RATE_KEYS))
        for key in _RATE_KEYS:
            if key in rates:
                val = check.number(rates[key], f"problem.rates.{key}")
                if val is not None:
                    overrides[key] = val

    elements = raw.get("elements", {})
    if not isinstance(elements, dict):
        check.fail("problem.elements", "expected an object")
    else:
        check.expect_keys(elements, "problem.elements",
                          set(_PER_DIM_ELEMENT_KEYS) | set(_SINGLE_ELEMENT_KEYS))
        for key in _PER_DIM_ELEMENT_KEYS:
            if key in elements:
                rows = elements[key]
                if not isinstance(rows, list) or len(rows) != m:
                    check.fail(f"problem.elements.{key}",
                               f"expected {m} term lists (one per control dim)")
                    continue
                parsed = []
                for i, row in enumerate(rows):
                    t = check.terms(row, f"problem.elements.{key}[{i}]")
                    if t is not None:
                        parsed.append(t)
                if len(parsed) == m:
                    overrides[key] = tuple(parsed)
        for key in _SINGLE_ELEMENT_KEYS:
            if key in elements:
                if elements[key] is None:
                    overrides[key] = None
                    continue
                t = check.terms(elements[key], f"problem.elements.{key}")
                if t is not None:
                    overrides[key] = t

    if name == "free":
        # the free instance carries no dynamics at all; reject rather than drop
        for key in ("a", "f0", "g0"):
            if overrides.get(key):
                check.fail(f"problem.rates.{key}", "free problems have no dynamics")
            overrides.pop(key, None)
        for key in _PER_DIM_ELEMENT_KEYS + ("qd", "qf", "qg"):
            if overrides.get(key):
                check.fail(f"problem.elements.{key}", "free problems have no dynamics")
            overrides.pop(key, None)

    if check.errors:
        return None
    try:
        return ProblemSpec.gallery(name, m=m, **overrides)
    except (ValueError, TypeError) as exc:
        check.fail("problem", str(exc))
        return None


def parse_config(raw: dict, cap: int = DEFAULT_GENERATOR_CAP) -> RunConfig:
    check = _Checker()
    if not isinstance(raw, dict):
        raise ConfigError([("", "top-level document must be an object")])
    check.expect_keys(raw, "", {"problem", "grid", "suites", "tolerances",
                                "seed", "output", "emit"})

    spec = _parse_problem(raw.get("problem"), check) if "problem" in raw else None
    if "problem" not in raw:
        check.fail("problem", "missing required object")

    grid = raw.get("grid")
    t0 = T = 0.0
    n = 1
    if not isinstance(grid, dict):
        check.fail("grid", "missing required object {t0, T, N}")
    else:
        check.expect_keys(grid, "grid", {"t0", "T", "N"})
        t0 = check.number(grid.get("t0"), "grid.t0", required=True)
        T = check.number(grid.get("T"), "grid.T", required=True)
        n = check.integer(grid.get("N"), "grid.N", required=True, minimum=1)
        if t0 is not None and T is not None and not (T > t0):
            check.fail("grid.T", "must exceed grid.t0")
        if n is not None and n > cap:
            check.fail("grid.N", f"exceeds the generator cap {cap}")

    suites = raw.get("suites", list(SUITE_ORDER))
    if (not isinstance(suites, list) or not suites
            or not all(isinstance(s, str) for s in suites)):
        check.fail("suites", "expected a non-empty list of suite names")
        suites = []
    else:
        bad = [s for s in suites if s not in SUITE_ORDER]
        for s in bad:
            check.fail("suites", f"unknown suite {s!r}")
        if len(set(suites)) != len(suites):
            check.fail("suites", "duplicate suite names")
        suites = [s for s in SUITE_ORDER if s in suites]

    tolerances = raw.get("tolerances", {})
    if not isinstance(tolerances, dict):
        check.fail("tolerances", "expected an object keyed by suite name")
        tolerances = {}
    else:
        for key, val in tolerances.items():
            if key not in SUITE_ORDER:
                check.fail(f"tolerances.{key}", "unknown suite")
            elif not isinstance(val, dict):
                check.fail(f"tolerances.{key}", "expected an object of overrides")
            else:
                for name, num in val.items():
                    if isinstance(num, bool) or not isinstance(num, (int, float)):
                        check.fail(f"tolerances.{key}.{name}", "expected a number")

    seed = check.integer(raw.get("seed"), "seed", default=0)
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        check.fail("output", "expected a string path")
        output = None

    emit = raw.get("emit", ["json"])
    if not isinstance(emit, list) or not all(isinstance(e, str) for e in emit):
        check.fail("emit", "expected a list of format names")
        emit = ["json"]
    else:
        for e in emit:
            if e not in EMIT_FORMATS:
                check.fail("emit", f"unknown format {e!r}")
        emit = [e for e in EMIT_FORMATS if e in emit]

    if check.errors:
        raise ConfigError(check.errors)
    return RunConfig(problem=spec, t0=t0, T=T, n_steps=n, suites=suites,
                     tolerances=tolerances, seed=seed, output=output, emit=emit,
                     cap=cap)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError([("", f"config file not found: {path}")])
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON: {exc}")])
    return parse_config(raw)
