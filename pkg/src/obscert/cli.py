"""Declarative scenario driver.

A scenario is a JSON document declaring named rate functions, semigroup
constants, Bernstein functions, symbols, models and thick sets, plus an
ordered task list (certify / certify-polynomial / subordinate / symbol-rate
/ fit-uncertainty / verify / report).  ``run`` executes the tasks and writes
certificate and verification artifacts; ``validate`` only checks structure
and name resolution.

Exit codes: 0 success, 1 error, 2 not admissible, 3 verification failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import bernstein as bst
from . import levy_symbol as sym
from . import rates as rt
from . import simgroup as sg
from . import verify as vf
from .certifier import (
    Certificate,
    ProblemData,
    certify,
    certify_polynomial,
    holder_log_factor,
    iteration_trace,
)
from .errors import NotAdmissible, ObscertError, ParseError, ResolutionError

SCHEMA_VERSION = 1

_TOP_KEYS = {"schema", "seed", "output", "rates", "constants", "bernstein",
             "symbols", "models", "sets", "tasks"}
_CONSTANT_KEYS = {"M", "omega", "C1", "C2", "normC", "T", "r", "m"}
_TASK_KINDS = {"certify", "certify-polynomial", "subordinate", "symbol-rate",
               "fit-uncertainty", "verify", "report"}


def _fail(path: str, message: str) -> ParseError:
    return ParseError(f"{path}: {message}")


def _expect_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise _fail(path, f"expected an object, got {type(obj).__name__}")
    return obj


def _check_keys(obj: dict, path: str, allowed: set, required: set = frozenset()):
    unknown = set(obj) - allowed
    if unknown:
        raise _fail(path, f"unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise _fail(path, f"missing keys {sorted(missing)}")


def _number(obj, path: str, default=None) -> float:
    if obj is None and default is not None:
        return default
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise _fail(path, f"expected a number, got {type(obj).__name__}")
    return float(obj)


# ---------------------------------------------------------------------------
# scenario loading


@dataclass
class Scenario:
    raw: dict
    source: str = "<memory>"

    @classmethod
    def from_file(cls, path: str) -> "Scenario":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        return cls(_expect_mapping(raw, path), path)

    def apply_overrides(self, pairs) -> None:
        """Dotted-path overrides like constants.T=0.5; values parse as JSON."""
        for item in pairs or []:
            if "=" not in item:
                raise ParseError(f"override '{item}' is not KEY=VALUE")
            key, _, text = item.partition("=")
            try:
                value = json.loads(text)
            except json.JSONDecodeError:
                value = text
            node = self.raw
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ParseError(f"override path '{key}' crosses a non-object")
            node[parts[-1]] = value

    # -- structural validation ------------------------------------------------

    def diagnostics(self) -> list:
        """Schema and reference checks; no computation, no filesystem writes."""
        issues = []
        try:
            self._validate_structure()
        except (ParseError, ResolutionError) as exc:
            issues.append(str(exc))
        return issues

    def _validate_structure(self) -> None:
        raw = self.raw
        _check_keys(raw, "$", _TOP_KEYS, {"schema", "tasks"})
        if raw.get("schema") != SCHEMA_VERSION:
            raise _fail("$.schema", f"unsupported schema {raw.get('schema')!r}")
        for section in ("rates", "bernstein", "symbols", "models", "sets"):
            names = raw.get(section, {})
            _expect_mapping(names, f"$.{section}")
        if "constants" in raw:
            consts = _expect_mapping(raw["constants"], "$.constants")
            _check_keys(consts, "$.constants", _CONSTANT_KEYS)
            for k, v in consts.items():
                _number(v, f"$.constants.{k}")
        if "output" in raw:
            out = _expect_mapping(raw["output"], "$.output")
            _check_keys(out, "$.output", {"dir", "formats", "timestamp"})
        tasks = raw.get("tasks")
        if not isinstance(tasks, list):
            raise _fail("$.tasks", "expected a list")
        known_rates = set(raw.get("rates", {}))
        known_certs = set()
        for i, task in enumerate(tasks):
            path = f"$.tasks[{i}]"
            t = _expect_mapping(task, path)
            kind = t.get("task")
            if kind not in _TASK_KINDS:
                raise _fail(f"{path}.task", f"unknown task kind {kind!r}")
            self._validate_task(t, path, kind, known_rates, known_certs)

    def _validate_task(self, t, path, kind, known_rates, known_certs) -> None:
        raw = self.raw

        def need_ref(section, name, where, extra=frozenset()):
            if isinstance(name, dict):
                return
            if not isinstance(name, str):
                raise _fail(where, "expected a name or an inline object")
            if name not in raw.get(section, {}) and name not in extra:
                raise ResolutionError(f"{where}: '{name}' is not declared in {section}")

        if kind == "certify":
            _check_keys(t, path, {"task", "name", "f", "g", "h", "constants", "trace"},
                        {"task", "name", "f", "g", "h"})
            for key in ("f", "g", "h"):
                need_ref("rates", t[key], f"{path}.{key}", extra=known_rates)
            known_certs.add(t["name"])
        elif kind == "certify-polynomial":
            _check_keys(t, path, {"task", "name", "c1", "c2", "gamma1", "gamma2",
                                  "gamma3", "constants"},
                        {"task", "name", "c1", "c2", "gamma1", "gamma2", "gamma3"})
            known_certs.add(t["name"])
        elif kind == "subordinate":
            _check_keys(t, path, {"task", "name", "phi", "g", "register", "certify",
                                  "constants", "f"},
                        {"task", "name", "phi", "g"})
            need_ref("bernstein", t["phi"], f"{path}.phi")
            need_ref("rates", t["g"], f"{path}.g", extra=known_rates)
            if "f" in t:
                need_ref("rates", t["f"], f"{path}.f", extra=known_rates)
            if t.get("register"):
                known_rates.add(t["register"])
            if t.get("certify", True):
                known_certs.add(t["name"])
        elif kind == "symbol-rate":
            _check_keys(t, path, {"task", "name", "symbol", "register"},
                        {"task", "name", "symbol", "register"})
            need_ref("symbols", t["symbol"], f"{path}.symbol")
            known_rates.add(t["register"])
        elif kind == "fit-uncertainty":
            _check_keys(t, path, {"task", "name", "model", "set", "lambdas", "samples",
                                  "growth", "safety", "register"},
                        {"task", "name", "model", "set", "lambdas", "register"})
            need_ref("models", t["model"], f"{path}.model")
            need_ref("sets", t["set"], f"{path}.set")
            known_rates.add(t["register"])
        elif kind == "verify":
            _check_keys(t, path, {"task", "name", "model", "set", "certificate",
                                  "checks", "lambda_grid", "t_grid", "samples",
                                  "time_panels", "restarts", "steps", "fit"},
                        {"task", "name", "model", "set", "certificate"})
            need_ref("models", t["model"], f"{path}.model")
            need_ref("sets", t["set"], f"{path}.set")
            if t["certificate"] not in known_certs:
                raise ResolutionError(
                    f"{path}.certificate: '{t['certificate']}' is not produced by an earlier task"
                )
            if "fit" in t and t["fit"] is not None:
                pass  # fit names are resolved at run time against fit tasks
        elif kind == "report":
            _check_keys(t, path, {"task", "name"}, {"task"})


# ---------------------------------------------------------------------------
# object builders


def _build_rate(spec, registry: dict, path: str) -> rt.RateFunction:
    if isinstance(spec, str):
        if spec not in registry:
            raise ResolutionError(f"{path}: rate '{spec}' is not declared")
        return registry[spec]
    spec = _expect_mapping(spec, path)
    kind = spec.get("kind")
    if kind == "identity":
        _check_keys(spec, path, {"kind"})
        return rt.identity()
    if kind == "polynomial":
        _check_keys(spec, path, {"kind", "c", "gamma"}, {"kind", "gamma"})
        return rt.polynomial(_number(spec.get("c"), path, 1.0), _number(spec["gamma"], path))
    if kind == "exponential":
        _check_keys(spec, path, {"kind"})
        return rt.exponential()
    if kind == "log_power":
        _check_keys(spec, path, {"kind", "s"}, {"kind", "s"})
        return rt.log_power(_number(spec["s"], path))
    if kind == "loglog_power":
        _check_keys(spec, path, {"kind", "s"}, {"kind", "s"})
        return rt.loglog_power(_number(spec["s"], path))
    if kind == "affine":
        _check_keys(spec, path, {"kind", "slope", "offset"}, {"kind", "slope"})
        return rt.affine(_number(spec["slope"], path), _number(spec.get("offset"), path, 0.0))
    if kind == "composite":
        _check_keys(spec, path, {"kind", "outer", "inner"}, {"kind", "outer", "inner"})
        outer = _build_rate(spec["outer"], registry, f"{path}.outer")
        inner = _build_rate(spec["inner"], registry, f"{path}.inner")
        return rt.composite(outer, inner)
    raise _fail(path, f"unknown rate kind {kind!r}")


def _build_bernstein(spec, path: str) -> bst.BernsteinFunction:
    spec = _expect_mapping(spec, path)
    kind = spec.get("kind")
    if kind == "power":
        _check_keys(spec, path, {"kind", "s"}, {"kind", "s"})
        return bst.power(_number(spec["s"], path))
    if kind == "affine":
        _check_keys(spec, path, {"kind", "a", "b"}, {"kind"})
        return bst.affine_bernstein(_number(spec.get("a"), path, 0.0),
                                    _number(spec.get("b"), path, 0.0))
    if kind == "triplet":
        _check_keys(spec, path, {"kind", "a", "b", "density", "atoms"}, {"kind"})
        a = _number(spec.get("a"), path, 0.0)
        b = _number(spec.get("b"), path, 0.0)
        if "atoms" in spec:
            return bst.from_triplet(bst.LevyTriplet(a=a, b=b, atoms=np.asarray(spec["atoms"], float)))
        dens = _expect_mapping(spec.get("density", {}), f"{path}.density")
        if dens.get("kind") != "stable":
            raise _fail(f"{path}.density", "only the 'stable' density kind is declarable")
        tr = bst.stable_triplet(_number(dens.get("s"), f"{path}.density.s"),
                                _number(dens.get("scale"), f"{path}.density", 1.0))
        return bst.from_triplet(bst.LevyTriplet(a=a, b=b, density=tr.density,
                                                support=tr.support,
                                                density_kind=tr.density_kind,
                                                density_params=tr.density_params))
    raise _fail(path, f"unknown Bernstein kind {kind!r}")


def _build_symbol(spec, path: str) -> sym.SymbolModel:
    spec = _expect_mapping(spec, path)
    _check_keys(spec, path, {"n", "c", "d", "Q", "density", "atoms", "closed_form"}, {"n"})
    n = int(spec["n"])
    density = None
    atoms = None
    if "density" in spec:
        dens = _expect_mapping(spec["density"], f"{path}.density")
        kind = dens.get("kind")
        if kind == "indicator":
            density = sym.indicator_density()
        elif kind == "power_law":
            density = sym.power_law_density(_number(dens["exponent"], path),
                                            _number(dens.get("coefficient"), path, 1.0))
        elif kind == "fractional_stable":
            density = sym.fractional_stable_density(n, _number(dens["alpha"], path))
        else:
            raise _fail(f"{path}.density", f"unknown density kind {kind!r}")
    if "atoms" in spec:
        arr = np.asarray(spec["atoms"], dtype=float)
        atoms = (arr[:, :n], arr[:, n])
    closed = spec.get("closed_form")
    return sym.SymbolModel(
        n=n,
        c=_number(spec.get("c"), path, 0.0),
        d=np.asarray(spec["d"], float) if "d" in spec else None,
        Q=np.asarray(spec["Q"], float) if "Q" in spec else None,
        density=density,
        atoms=atoms,
        closed_form=closed,
    )


def _build_model(spec, path: str, rates: dict, symbols: dict):
    spec = _expect_mapping(spec, path)
    kind = spec.get("type")
    if kind == "diagonal":
        _check_keys(spec, path, {"type", "N", "L", "G", "rate", "sqrt_argument"},
                    {"type", "N"})
        rate = None
        if "rate" in spec:
            rate = _build_rate(spec["rate"], rates, f"{path}.rate")
        return sg.diagonal_model(
            int(spec["N"]),
            rate=rate,
            L=_number(spec.get("L"), path, math.pi),
            G=int(spec.get("G", 2048)),
            sqrt_argument=bool(spec.get("sqrt_argument", True)),
        )
    if kind == "grid":
        _check_keys(spec, path, {"type", "n", "G", "box", "symbol", "p"}, {"type", "symbol"})
        name = spec["symbol"]
        if name not in symbols:
            raise ResolutionError(f"{path}.symbol: '{name}' is not declared")
        box = np.asarray(spec["box"], float) if "box" in spec else None
        return sg.grid_model(symbols[name], G=int(spec.get("G", 256)), box=box,
                             p=_number(spec.get("p"), path, 2.0))
    raise _fail(path, f"unknown model type {kind!r}")


def _build_set(spec, path: str, models: dict):
    spec = _expect_mapping(spec, path)
    _check_keys(spec, path, {"model", "pattern", "rho", "L", "period", "axis"},
                {"model", "rho"})
    name = spec["model"]
    if name not in models:
        raise ResolutionError(f"{path}.model: '{name}' is not declared")
    model = models[name]
    L = spec.get("L", spec.get("period"))
    if L is None:
        raise _fail(path, "need a thickness box L (or period)")
    return sg.make_thick_set(
        model,
        _number(spec["rho"], f"{path}.rho"),
        L,
        spec.get("pattern", "periodic-slabs"),
        period=_number(spec.get("period"), path, None) if "period" in spec else None,
        axis=int(spec.get("axis", 0)),
    )


# ---------------------------------------------------------------------------
# runner


@dataclass
class RunResult:
    exit_code: int
    artifacts: list = field(default_factory=list)
    messages: list = field(default_factory=list)


class Runner:
    def __init__(self, scenario: Scenario, out_dir: str, seed: Optional[int],
                 formats=None, timestamp: Optional[bool] = None, jobs: int = 1):
        self.scenario = scenario
        raw = scenario.raw
        out_cfg = raw.get("output", {})
        self.out_dir = out_dir or out_cfg.get("dir", "obscert-out")
        self.formats = formats or out_cfg.get("formats", ["json"])
        self.timestamp = out_cfg.get("timestamp", True) if timestamp is None else timestamp
        self.seed = int(raw.get("seed", 0) if seed is None else seed)
        self.jobs = max(1, jobs)
        self.rates: dict = {}
        self.bernstein: dict = {}
        self.symbols: dict = {}
        self.models: dict = {}
        self.sets: dict = {}
        self.certificates: dict = {}
        self.problems: dict = {}
        self.fits: dict = {}
        self.summary: list = []
        self.artifacts: list = []
        self.failed_checks = 0

    # lazy builders keyed by declaration name
    def _rate(self, name_or_spec, path):
        if isinstance(name_or_spec, str):
            if name_or_spec in self.rates:
                return self.rates[name_or_spec]
            decl = self.scenario.raw.get("rates", {}).get(name_or_spec)
            if decl is None:
                raise ResolutionError(f"{path}: rate '{name_or_spec}' is not declared")
            built = _build_rate(decl, self.rates, f"$.rates.{name_or_spec}")
            self.rates[name_or_spec] = built
            return built
        return _build_rate(name_or_spec, self.rates, path)

    def _bernstein_fn(self, name, path):
        if name not in self.bernstein:
            decl = self.scenario.raw.get("bernstein", {}).get(name)
            if decl is None:
                raise ResolutionError(f"{path}: Bernstein function '{name}' is not declared")
            self.bernstein[name] = _build_bernstein(decl, f"$.bernstein.{name}")
        return self.bernstein[name]

    def _symbol(self, name, path):
        if name not in self.symbols:
            decl = self.scenario.raw.get("symbols", {}).get(name)
            if decl is None:
                raise ResolutionError(f"{path}: symbol '{name}' is not declared")
            self.symbols[name] = _build_symbol(decl, f"$.symbols.{name}")
        return self.symbols[name]

    def _model(self, name, path):
        if name not in self.models:
            decl = self.scenario.raw.get("models", {}).get(name)
            if decl is None:
                raise ResolutionError(f"{path}: model '{name}' is not declared")
            # symbols referenced by the model must exist first
            if isinstance(decl, dict) and decl.get("type") == "grid":
                self._symbol(decl.get("symbol"), f"$.models.{name}.symbol")
            self.models[name] = _build_model(decl, f"$.models.{name}", self.rates, self.symbols)
        return self.models[name]

    def _set(self, name, path):
        if name not in self.sets:
            decl = self.scenario.raw.get("sets", {}).get(name)
            if decl is None:
                raise ResolutionError(f"{path}: set '{name}' is not declared")
            decl_map = _expect_mapping(decl, f"$.sets.{name}")
            self._model(decl_map.get("model"), f"$.sets.{name}.model")
            self.sets[name] = _build_set(decl, f"$.sets.{name}", self.models)
        return self.sets[name]

    def _constants(self, overrides) -> dict:
        base = dict(self.scenario.raw.get("constants", {}))
        base.update(overrides or {})
        _check_keys(base, "constants", _CONSTANT_KEYS)
        out = {k: float(base.get(k, d)) for k, d in
               [("M", 1.0), ("omega", 0.0), ("C1", 1.0), ("C2", 1.0),
                ("normC", 1.0), ("T", 1.0), ("m", 0.0)]}
        r = base.get("r", 1.0)
        out["r"] = math.inf if r in ("inf", "Infinity") else float(r)
        return out

    # -- artifact output -------------------------------------------------------

    def _write(self, name: str, payload, fmt: str) -> None:
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)
        self.artifacts.append(path)

    def _json_artifact(self, name: str, obj: dict) -> None:
        doc = dict(obj)
        if self.timestamp:
            doc["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        text = json.dumps(vf._json_safe(doc), indent=2, sort_keys=True) + "\n"
        self._write(name, text, "json")

    # -- task execution --------------------------------------------------------

    def run(self) -> int:
        diags = self.scenario.diagnostics()
        if diags:
            for d in diags:
                print(d, file=sys.stderr)
            return 1
        try:
            for i, task in enumerate(self.scenario.raw.get("tasks", [])):
                self._run_task(task, i)
        except NotAdmissible as exc:
            self.summary.append(f"NOT ADMISSIBLE: {exc}")
            self._json_artifact("rejection.json", {"error": str(exc),
                                                   "report": exc.report.to_dict()})
            self._write_summary()
            return 2
        except (ParseError, ResolutionError) as exc:
            print(str(exc), file=sys.stderr)
            return 1
        except ObscertError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        self._write_summary()
        return 3 if self.failed_checks else 0

    def _write_summary(self) -> None:
        if self.summary:
            self._write("summary.txt", "\n".join(self.summary) + "\n", "txt")

    def _run_task(self, task: dict, index: int) -> None:
        kind = task.get("task")
        name = task.get("name", f"task{index}")
        if kind == "certify":
            consts = self._constants(task.get("constants"))
            p = ProblemData(
                f=self._rate(task["f"], f"$.tasks[{index}].f"),
                g=self._rate(task["g"], f"$.tasks[{index}].g"),
                h=self._rate(task["h"], f"$.tasks[{index}].h"),
                **consts,
            )
            cert = certify(p)
            self._store_certificate(name, cert, p, task)
        elif kind == "certify-polynomial":
            consts = self._constants(task.get("constants"))
            consts.pop("m")
            cert = certify_polynomial(
                float(task["c1"]), float(task["c2"]), float(task["gamma1"]),
                float(task["gamma2"]), float(task["gamma3"]), **consts,
            )
            p = ProblemData(
                f=rt.polynomial(float(task["c1"]), float(task["gamma1"])),
                g=rt.polynomial(float(task["c2"]), float(task["gamma2"])),
                h=rt.polynomial(1.0, float(task["gamma3"])),
                **dict(consts, m=0.0),
            )
            self._store_certificate(name, cert, p, task)
        elif kind == "subordinate":
            phi = self._bernstein_fn(task["phi"], f"$.tasks[{index}].phi")
            g = self._rate(task["g"], f"$.tasks[{index}].g")
            if task.get("register"):
                self.rates[task["register"]] = bst.subordinate_rate(phi, g)
            if task.get("certify", True):
                consts = self._constants(task.get("constants"))
                f = self._rate(task.get("f", {"kind": "identity"}), f"$.tasks[{index}].f")
                p = ProblemData(f=f, g=g, h=rt.identity(), **consts)
                cert = bst.certify_subordinated(phi, p)
                p_eff = ProblemData(f=f, g=bst.subordinate_rate(phi, g), h=rt.identity(), **consts)
                self._store_certificate(name, cert, p_eff, task)
        elif kind == "symbol-rate":
            model = self._symbol(task["symbol"], f"$.tasks[{index}].symbol")
            rate = sym.dissipation_rate_function(model)
            self.rates[task["register"]] = rate
            self.summary.append(f"{name}: registered dissipation rate '{task['register']}' ({rate.label})")
        elif kind == "fit-uncertainty":
            self._run_fit(task, name, index)
        elif kind == "verify":
            self._run_verify(task, name, index)
        elif kind == "report":
            self.summary.append(f"{name}: {len(self.certificates)} certificates, "
                                f"{len(self.artifacts)} artifacts so far")
        else:
            raise ParseError(f"$.tasks[{index}].task: unknown kind {kind!r}")

    def _store_certificate(self, name: str, cert: Certificate, p: ProblemData, task: dict) -> None:
        self.certificates[name] = cert
        self.problems[name] = p
        if "json" in self.formats:
            self._json_artifact(f"{name}.certificate.json", cert.to_dict())
        trace_n = task.get("trace")
        if trace_n:
            tr = iteration_trace(cert, p, int(trace_n))
            if "csv" in self.formats or "json" not in self.formats:
                self._write(f"{name}.trace.csv", tr.to_csv(), "csv")
        self.summary.append(
            f"{name}: admissible, log cobs_L1 = {cert.log_cobs_L1:.6g}, "
            f"log cobs_Lr(r={cert.r:g}) = {cert.log_cobs_Lr:.6g}"
        )

    def _run_fit(self, task: dict, name: str, index: int) -> None:
        model = self._model(task["model"], f"$.tasks[{index}].model")
        E = self._set(task["set"], f"$.tasks[{index}].set")
        rng = np.random.default_rng([self.seed, index])
        fit = sg.estimate_ls_constants(
            model, E, np.asarray(task["lambdas"], float),
            samples=int(task.get("samples", 128)), rng=rng,
            growth=task.get("growth", "sqrt"),
        )
        safety = float(task.get("safety", 1.25))
        if fit.d1 <= 0:
            raise ObscertError(f"{name}: fitted growth slope is not positive ({fit.d1:.3g})")
        gamma = 0.5 if fit.growth == "sqrt" else 1.0
        self.rates[task["register"]] = rt.polynomial(fit.d1, gamma)
        self.fits[name] = {"d0": fit.d0, "d1": fit.d1, "C1": safety * fit.d0,
                           "growth": fit.growth, "register": task["register"]}
        self._json_artifact(f"{name}.fit.json", {
            "d0": fit.d0, "d1": fit.d1, "safety": safety, "C1": safety * fit.d0,
            "growth": fit.growth, "lambdas": fit.lambdas, "ratios": fit.ratios,
            "samples": fit.samples,
        })
        self.summary.append(f"{name}: fitted d0 = {fit.d0:.6g}, d1 = {fit.d1:.6g} "
                            f"(C1 = {safety * fit.d0:.6g} with safety {safety})")

    def _run_verify(self, task: dict, name: str, index: int) -> None:
        model = self._model(task["model"], f"$.tasks[{index}].model")
        E = self._set(task["set"], f"$.tasks[{index}].set")
        cert = self.certificates.get(task["certificate"])
        p = self.problems.get(task["certificate"])
        if cert is None:
            raise ResolutionError(
                f"$.tasks[{index}].certificate: '{task['certificate']}' was not produced"
            )
        checks = task.get("checks", ["dissipation", "uncertainty", "observability"])
        samples = int(task.get("samples", 32))
        time_panels = int(task.get("time_panels", 256))
        lambda_grid = np.asarray(task.get("lambda_grid", [4.0, 16.0, 64.0]), float)
        t_grid = np.asarray(task.get("t_grid", [0.05, 0.25, 1.0]), float)
        t_grid = t_grid[t_grid <= p.T] if (t_grid <= p.T).any() else np.array([p.T])

        report = vf.VerificationReport(header={
            "seed": self.seed,
            "task": name,
            "certificate": task["certificate"],
            "samples": samples,
            "time_panels": time_panels,
            "pass_slack": vf.PASS_SLACK,
        })

        fit_info = self.fits.get(task.get("fit")) if task.get("fit") else None
        C1 = fit_info["C1"] if fit_info else p.C1

        jobs_pool = concurrent.futures.ThreadPoolExecutor(max_workers=self.jobs) \
            if self.jobs > 1 else None

        def submit(fn, *args, **kwargs):
            if jobs_pool is None:
                return fn(*args, **kwargs)
            return jobs_pool.submit(fn, *args, **kwargs)

        pending = []
        for check in checks:
            rng = np.random.default_rng([self.seed, index, _CHECK_IDS[check]])
            if check == "dissipation":
                pending.append(("dissipation", submit(
                    vf.check_dissipation, model, p.g, p.h, p.C2, lambda_grid, t_grid,
                    samples, rng, p.omega)))
            elif check == "uncertainty":
                pending.append(("uncertainty", submit(
                    vf.check_uncertainty, model, E, p.f, C1, lambda_grid, samples, rng)))
            elif check == "observability":
                pending.append(("observability", submit(
                    vf.check_observability, model, E, p.T, cert, p.r, samples,
                    time_panels, rng)))
            elif check == "optimal":
                pending.append(("optimal", submit(
                    self._optimal_row, model, E, cert, p, time_panels)))
            elif check == "lower-bound":
                pending.append(("lower-bound", submit(
                    self._lower_bound_row, model, E, cert, p, task, rng, time_panels)))
            else:
                raise ParseError(f"$.tasks[{index}].checks: unknown check {check!r}")
        for label, item in pending:
            row = item.result() if jobs_pool is not None else item
            report.add(row)
        if jobs_pool is not None:
            jobs_pool.shutdown()

        if "json" in self.formats:
            doc = report.to_dict()
            if self.timestamp:
                doc["header"]["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
            self._write(f"{name}.verification.json",
                        json.dumps(vf._json_safe(doc), indent=2, sort_keys=True) + "\n",
                        "json")
        if "csv" in self.formats:
            self._write(f"{name}.verification.csv", report.to_csv(), "csv")
        failed = [r.name for r in report.rows if not r.passed]
        self.failed_checks += len(failed)
        status = "all checks passed" if not failed else f"FAILED: {', '.join(failed)}"
        self.summary.append(f"{name}: {status}")

    def _optimal_row(self, model, E, cert: Certificate, p: ProblemData, time_panels: int):
        value = vf.optimal_constant_l2(model, E, p.T, time_panels)
        log_bound = _log_cobs_for_r(cert, p, 2.0)
        log_val = math.log(value) if value > 0 else -math.inf
        return vf.CheckRow(
            name="oracle-optimal-l2",
            samples=0,
            max_ratio=value,
            bound=math.exp(log_bound) if log_bound < 700 else math.inf,
            log_bound=log_bound,
            passed=log_val <= log_bound + math.log1p(vf.PASS_SLACK),
            extra={"time_panels": time_panels},
        )

    def _lower_bound_row(self, model, E, cert: Certificate, p: ProblemData,
                         task: dict, rng, time_panels: int):
        value = vf.empirical_lower_bound(
            model, E, p.T, p.r,
            restarts=int(task.get("restarts", 4)),
            steps=int(task.get("steps", 60)),
            rng=rng, time_panels=time_panels,
        )
        log_bound = cert.log_cobs_Lr
        log_val = math.log(value) if value > 0 else -math.inf
        return vf.CheckRow(
            name=f"ascent-lower-bound[r={p.r:g}]",
            samples=int(task.get("restarts", 4)),
            max_ratio=value,
            bound=cert.cobs_Lr,
            log_bound=log_bound,
            passed=log_val <= log_bound + math.log1p(vf.PASS_SLACK),
            extra={},
        )


_CHECK_IDS = {"dissipation": 1, "uncertainty": 2, "observability": 3,
              "optimal": 4, "lower-bound": 5}


def _log_cobs_for_r(cert: Certificate, p: ProblemData, r: float) -> float:
    log_bounded = math.log(cert.C3) - math.log(cert.T) + 6.0 * cert.lambda_T
    return log_bounded + holder_log_factor(cert.omega, cert.T, r)


# ---------------------------------------------------------------------------
# entry points


def run(scenario_path: str, overrides=None, out_dir: Optional[str] = None,
        seed: Optional[int] = None, formats=None, timestamp: Optional[bool] = None,
        jobs: int = 1) -> RunResult:
    try:
        scenario = Scenario.from_file(scenario_path)
        scenario.apply_overrides(overrides)
    except ParseError as exc:
        print(str(exc), file=sys.stderr)
        return RunResult(1)
    runner = Runner(scenario, out_dir, seed, formats, timestamp, jobs)
    code = runner.run()
    return RunResult(code, runner.artifacts, runner.summary)


def validate(scenario_path: str) -> list:
    scenario = Scenario.from_file(scenario_path)
    return scenario.diagnostics()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="obscert",
        description="certify and verify semigroup observability scenarios",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--format", choices=["json", "csv", "both"], default=None)
    p_run.add_argument("--no-timestamp", action="store_true")
    p_run.add_argument("--jobs", type=int, default=1)

    p_val = sub.add_parser("validate", help="schema and reference checks only")
    p_val.add_argument("--scenario", required=True)

    args = parser.parse_args(argv)
    if args.command == "validate":
        try:
            issues = validate(args.scenario)
        except ParseError as exc:
            print(str(exc), file=sys.stderr)
            return 1
        for issue in issues:
            print(issue, file=sys.stderr)
        return 1 if issues else 0

    formats = None
    if args.format == "both":
        formats = ["json", "csv"]
    elif args.format:
        formats = [args.format]
    out_env = os.environ.get("OBSCERT_OUT")
    result = run(
        args.scenario,
        overrides=args.set,
        out_dir=args.out or out_env,
        seed=args.seed,
        formats=formats,
        timestamp=False if args.no_timestamp else None,
        jobs=args.jobs,
    )
    for line in result.messages:
        print(line)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
