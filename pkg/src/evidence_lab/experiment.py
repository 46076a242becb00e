"""Experiment configuration, orchestration and output files.

Configuration documents are flat ``key = value`` lines with dotted keys
and ``#`` comments (the TOML subset of ``docs/config.md``).  A run writes
three files: the convergence CSV, a JSON manifest that is sufficient to
reproduce the run, and a JSON verdict summary.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .consistency import (
    INCONCLUSIVE,
    STREAM_BLOCK_BITS,
    Experiment,
    TolerancePolicy,
    build_convergence_curve,
    limit_for,
    verdict,
)
from .exceptions import ConfigError, EvidenceLabError, NumericalError
from .measures import MEASURE_IDS, MeasureConfig
from .model import GaussianMeanModel, HypothesisPair, ParameterRegion
from .priors import TruncatedGaussianPrior, TwoLevelPrior, UniformPrior

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "run_experiment",
    "emit_convergence_csv",
    "SEED_ENV_VAR",
    "EXIT_OK",
    "EXIT_VALIDATION",
    "EXIT_NUMERICAL",
    "EXIT_INCONCLUSIVE",
]

SCHEMA_VERSION = 1
SEED_ENV_VAR = "EVIDENCE_LAB_SEED"
CSV_HEADER = ("measure", "n", "M", "count_S", "count_S_and_H1", "estimate", "std_error", "oracle", "defined")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4

# key -> (type, default).  ``None`` default means optional without a value.
_SCHEMA = {
    "schema_version": (int, SCHEMA_VERSION),
    "model.variance": (float, 1.0),
    "hypotheses.kind": (str, "point"),
    "hypotheses.theta1": (float, 0.0),
    "hypotheses.delta": (float, 1.0),
    "hypotheses.theta1_lower": (float, -math.inf),
    "hypotheses.theta1_upper": (float, 0.0),
    "hypotheses.theta2_lower": (float, 0.0),
    "hypotheses.theta2_upper": (float, math.inf),
    "prior.w": ("floats", (0.5,)),
    "prior.within": (str, None),
    "prior.theta1_mean": (float, None),
    "prior.theta1_sd": (float, 1.0),
    "prior.theta2_mean": (float, None),
    "prior.theta2_sd": (float, 1.0),
    "measures.list": ("strs", ("pvalue", "rl")),
    "measures.alpha_s": (float, 0.01),
    "measures.k_s": (float, 30.0),
    "measures.bf_threshold": (float, 150.0),
    "measures.odds_threshold": (float, 150.0),
    "run.n_grid": ("ints", (16, 64, 256)),
    "run.M": (int, 100_000),
    "run.master_seed": (int, None),
    "run.full_path": (bool, False),
    "verdict.n_se": (float, 3.0),
    "verdict.abs_tol": (float, 0.0),
    "output.dir": (str, "."),
    "output.csv": (str, "convergence.csv"),
    "output.manifest": (str, "manifest.json"),
    "output.verdict": (str, "verdict.json"),
}


def _flatten(tree, prefix=""):
    flat = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def _coerce(kind, value):
    """Convert a raw document value to the schema type or raise ValueError."""
    if kind is float:
        if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "-inf"):
            return float(value)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError("expected a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError("expected an integer")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ValueError("expected true or false")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ValueError("expected a string")
        return value
    items = value if isinstance(value, (list, tuple)) else [value]
    inner = {"floats": float, "ints": int, "strs": str}[kind]
    return tuple(_coerce(inner, v) for v in items)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment definition (see ``docs/config.md``)."""

    values: Dict[str, object]
    seed_source: str = "config"

    def __getitem__(self, key):
        return self.values[key]

    @property
    def w_values(self) -> Tuple[float, ...]:
        return self.values["prior.w"]

    @property
    def n_grid(self):
        return self.values["run.n_grid"]

    @property
    def M(self):
        return self.values["run.M"]

    @property
    def master_seed(self):
        return self.values["run.master_seed"]

    @property
    def policy(self):
        return TolerancePolicy(self.values["verdict.n_se"], self.values["verdict.abs_tol"])

    def with_overrides(self, **kv):
        values = dict(self.values)
        seed_source = self.seed_source
        for key, value in kv.items():
            if value is None:
                continue
            dotted = {"master_seed": "run.master_seed", "out_dir": "output.dir"}.get(key, key)
            values[dotted] = value
            if dotted == "run.master_seed":
                seed_source = "flag"
        return ExperimentConfig(values, seed_source)

    def to_mapping(self):
        """JSON-safe flat mapping; infinities are spelled as strings."""
        out = {}
        for key, value in self.values.items():
            if isinstance(value, float) and math.isinf(value):
                value = "inf" if value > 0 else "-inf"
            elif isinstance(value, tuple):
                value = list(value)
            out[key] = value
        return out

    # -- domain objects ---------------------------------------------------

    def model(self):
        return GaussianMeanModel(self.values["model.variance"])

    def hypotheses(self):
        v = self.values
        if v["hypotheses.kind"] == "point":
            return HypothesisPair.points(v["hypotheses.theta1"], v["hypotheses.theta1"] + v["hypotheses.delta"])
        lo1, hi1 = v["hypotheses.theta1_lower"], v["hypotheses.theta1_upper"]
        lo2, hi2 = v["hypotheses.theta2_lower"], v["hypotheses.theta2_upper"]
        # A shared endpoint belongs to Theta1.
        r1 = ParameterRegion.interval(lo1, hi1)
        r2 = ParameterRegion.interval(lo2, hi2, lower_closed=lo2 != hi1, upper_closed=hi2 != lo1)
        return HypothesisPair(r1, r2)

    def within_kind(self):
        kind = self.values["prior.within"]
        if kind is None:
            kind = "point" if self.values["hypotheses.kind"] == "point" else "truncated_gaussian"
        return kind

    def prior(self, w):
        hyp = self.hypotheses()
        kind = self.within_kind()
        if kind == "point":
            return TwoLevelPrior.points(w, hyp.theta1_region.point_value, hyp.theta2_region.point_value)
        dists = []
        for j, region in ((1, hyp.theta1_region), (2, hyp.theta2_region)):
            if kind == "uniform":
                dists.append(UniformPrior(region))
                continue
            mean = self.values[f"prior.theta{j}_mean"]
            if mean is None:
                # Centre on the finite endpoint nearest the other region.
                mean = region.upper if j == 1 else region.lower
                if not math.isfinite(mean):
                    mean = region.lower if j == 1 else region.upper
            dists.append(TruncatedGaussianPrior(region, mean, self.values[f"prior.theta{j}_sd"]))
        return TwoLevelPrior(w, *dists)

    def measures(self):
        v = self.values
        return MeasureConfig(
            v["measures.list"], v["measures.alpha_s"], v["measures.k_s"],
            v["measures.bf_threshold"], v["measures.odds_threshold"],
        )

    def experiment(self, w):
        return Experiment(self.model(), self.prior(w), self.hypotheses(), self.measures(),
                          full_path=self.values["run.full_path"])

    def output_path(self, key, w=None):
        path = Path(self.values["output.dir"]) / self.values[f"output.{key}"]
        if w is not None and len(self.w_values) > 1:
            path = path.with_name(f"{path.stem}_w{w:g}{path.suffix}")
        return path


def _validate(values):
    errors = []
    v = values

    def check(cond, message):
        if not cond:
            errors.append(message)

    check(v["schema_version"] == SCHEMA_VERSION, f"schema_version must be {SCHEMA_VERSION}")
    check(v["model.variance"] > 0 and math.isfinite(v["model.variance"]), "model.variance: variance > 0")
    kind = v["hypotheses.kind"]
    check(kind in ("point", "interval"), "hypotheses.kind: one of 'point', 'interval'")
    if kind == "point":
        check(math.isfinite(v["hypotheses.theta1"]), "hypotheses.theta1: finite")
        check(v["hypotheses.delta"] > 0 and math.isfinite(v["hypotheses.delta"]), "hypotheses.delta: delta > 0")
    elif kind == "interval":
        lo1, hi1 = v["hypotheses.theta1_lower"], v["hypotheses.theta1_upper"]
        lo2, hi2 = v["hypotheses.theta2_lower"], v["hypotheses.theta2_upper"]
        check(lo1 < hi1, "hypotheses: theta1_lower < theta1_upper")
        check(lo2 < hi2, "hypotheses: theta2_lower < theta2_upper")
        check(hi1 <= lo2 or hi2 <= lo1, "hypotheses: regions must be disjoint")
    within = v["prior.within"]
    check(within in (None, "point", "truncated_gaussian", "uniform"),
          "prior.within: one of 'point', 'truncated_gaussian', 'uniform'")
    if kind == "point":
        check(within in (None, "point"), "prior.within: point hypotheses need 'point'")
    elif within == "point":
        errors.append("prior.within: interval hypotheses need 'truncated_gaussian' or 'uniform'")
    elif within == "uniform" and kind == "interval":
        ends = [v[f"hypotheses.theta{j}_{s}"] for j in (1, 2) for s in ("lower", "upper")]
        check(all(math.isfinite(e) for e in ends), "prior.within: uniform needs bounded regions")
    for j in (1, 2):
        check(v[f"prior.theta{j}_sd"] > 0, f"prior.theta{j}_sd: sd > 0")
    check(len(v["prior.w"]) > 0, "prior.w: at least one value")
    for w in v["prior.w"]:
        check(0.0 < w < 1.0, f"prior.w: w ∈ (0,1), got {w}")
    ms = v["measures.list"]
    for m in ms:
        check(m in MEASURE_IDS, f"measures.list: unknown measure {m!r}")
    check(len(ms) > 0, "measures.list: at least one measure")
    check(len(set(ms)) == len(ms), "measures.list: duplicates")
    if kind == "interval":
        check("rl" not in ms, "measures.list: 'rl' needs point hypotheses; use 'erl'")
        if "pvalue" in ms:
            check(math.isfinite(v["hypotheses.theta1_upper"]),
                  "measures.list: p-value needs theta1_upper finite")
    check(0.0 < v["measures.alpha_s"] < 1.0, "measures.alpha_s: alpha_S ∈ (0,1)")
    check(v["measures.k_s"] > 1.0, "measures.k_s: k_S > 1")
    check(v["measures.bf_threshold"] > 1.0, "measures.bf_threshold: > 1")
    check(v["measures.odds_threshold"] > 1.0, "measures.odds_threshold: > 1")
    grid = v["run.n_grid"]
    check(len(grid) > 0, "run.n_grid: nonempty")
    check(all(n >= 1 for n in grid), "run.n_grid: n >= 1")
    check(all(b > a for a, b in zip(grid, grid[1:])), "run.n_grid: strictly increasing")
    check(v["run.M"] >= 1, "run.M: M >= 1")
    seed = v["run.master_seed"]
    check(seed is None or 0 <= seed < 2**64, "run.master_seed: 64-bit unsigned integer")
    check(v["verdict.n_se"] > 0, "verdict.n_se: > 0")
    check(v["verdict.abs_tol"] >= 0, "verdict.abs_tol: >= 0")
    return errors


def config_from_mapping(raw) -> ExperimentConfig:
    """Validate a flat (dotted-key) mapping; collects every error."""
    errors = []
    values = {}
    for key in raw:
        if key not in _SCHEMA:
            errors.append(f"unknown key {key!r}")
    for key, (kind, default) in _SCHEMA.items():
        if key in raw and raw[key] is not None:
            try:
                values[key] = _coerce(kind, raw[key])
            except ValueError as exc:
                errors.append(f"{key}: {exc}")
                values[key] = default
        else:
            values[key] = default
    if not errors:
        errors.extend(_validate(values))
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(values)


def parse_config(text) -> ExperimentConfig:
    """Parse and validate a configuration document."""
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax error: {exc}"]) from None
    return config_from_mapping(_flatten(tree))


def load_config(path) -> ExperimentConfig:
    """Read a configuration document, or the config embedded in a run manifest."""
    text = Path(path).read_text(encoding="utf-8")
    if Path(path).suffix == ".json":
        try:
            manifest = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"manifest is not valid JSON: {exc}"]) from None
        if "config" not in manifest:
            raise ConfigError(["manifest has no 'config' entry"])
        return config_from_mapping(manifest["config"])
    return parse_config(text)


def resolve_seed(config: ExperimentConfig, flag_seed=None, environ=os.environ):
    """Seed precedence: command-line flag, then config, then environment, then 0."""
    if flag_seed is not None:
        return config.with_overrides(master_seed=int(flag_seed))
    if config.master_seed is not None:
        return config
    env = environ.get(SEED_ENV_VAR)
    if env is not None and env.strip():
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError([f"{SEED_ENV_VAR} must be an integer, got {env!r}"]) from None
        if not 0 <= seed < 2**64:
            raise ConfigError([f"{SEED_ENV_VAR}: 64-bit unsigned integer"])
        values = dict(config.values, **{"run.master_seed": seed})
        return ExperimentConfig(values, "env")
    return ExperimentConfig(dict(config.values, **{"run.master_seed": 0}), "default")


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _fmt(x):
    return "" if x is None else f"{x:.9g}"


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def convergence_csv_text(curves) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for curve in curves:
        for row in curve.rows:
            est = row.estimate
            writer.writerow([
                curve.measure_id, row.n, est.M, est.count_S, est.count_S_and_H1,
                _fmt(est.estimate), _fmt(est.std_error), _fmt(row.oracle),
                "true" if est.defined else "false",
            ])
    return buf.getvalue()


def emit_convergence_csv(curve, path):
    """Write one curve (or a list of curves) as convergence CSV."""
    curves = [curve] if hasattr(curve, "rows") else list(curve)
    if not curves or any(not c.rows for c in curves):
        raise ValueError("cannot emit an empty curve")
    _atomic_write(path, convergence_csv_text(curves))


def _oracle_formulas(config):
    formulas = {"conditional": "w*p1 / (w*p1 + (1-w)*p2)"}
    if config["hypotheses.kind"] == "point":
        formulas.update({
            "pvalue_strong": "Theta1: alpha_S; Theta2: 1 - Phi(z_{1-alpha_S} - sqrt(n)*delta/sigma)",
            "ratio_strong": "Theta1: 1 - Phi(log k/(d*sqrt(n)) + sqrt(n)*d/2); "
                            "Theta2: 1 - Phi(log k/(d*sqrt(n)) - sqrt(n)*d/2), d = delta/sigma",
            "pvalue_limit": "alpha_S*w / (1 - w*(1 - alpha_S))",
        })
    return formulas


def _write_json(path, payload):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_experiment(config: ExperimentConfig, *, workers=1, strict=False) -> int:
    """Execute every sweep in ``config`` and write CSV, manifest and verdict.

    Returns the process exit status.
    """
    started = time.perf_counter()
    summary = {"schema_version": SCHEMA_VERSION, "results": [], "errors": []}
    per_w = []
    status = EXIT_OK
    n_grid = config.n_grid
    try:
        for wi, w in enumerate(config.w_values):
            exp = config.experiment(w)
            first_block = wi * len(n_grid)
            curves = build_convergence_curve(exp, n_grid, config.M, config.master_seed,
                                             workers=workers, first_block=first_block)
            emit_convergence_csv(list(curves.values()), config.output_path("csv", w))
            per_w.append({
                "w": w,
                "csv": str(config.output_path("csv", w)),
                "within_region_distributions": exp.prior.describe(),
                "stream_id_ranges": [
                    {"n": n, "first": (first_block + k) << STREAM_BLOCK_BITS,
                     "last": ((first_block + k) << STREAM_BLOCK_BITS) + config.M - 1}
                    for k, n in enumerate(n_grid)
                ],
            })
            for m, curve in curves.items():
                limit = limit_for(m, hypotheses=exp.hypotheses, prior=exp.prior, config=exp.measures)
                outcome = verdict(curve, limit, config.policy)
                last = curve.rows[-1].estimate
                summary["results"].append({
                    "w": w, "measure": m, "limit": limit, "verdict": outcome,
                    "largest_n": last.n, "estimate": last.estimate, "std_error": last.std_error,
                    "count_S": last.count_S, "count_S_and_H1": last.count_S_and_H1,
                })
                if outcome == INCONCLUSIVE and strict:
                    status = EXIT_INCONCLUSIVE
    except NumericalError as exc:
        summary["errors"].append({"kind": "numerical", "message": str(exc), "diagnostics": exc.diagnostics})
        status = EXIT_NUMERICAL
    except OSError as exc:
        summary["errors"].append({"kind": "io", "message": str(exc)})
        status = EXIT_NUMERICAL
    except EvidenceLabError as exc:
        summary["errors"].append({"kind": "configuration", "message": str(exc)})
        status = EXIT_VALIDATION
    summary["exit_code"] = status
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "csv_schema_version": SCHEMA_VERSION,
        "artifact": "evidence-lab",
        "version": __version__,
        "config": config.to_mapping(),
        "master_seed": config.master_seed,
        "seed_source": config.seed_source,
        "fast_path": (not config["run.full_path"]) and config.model().mean_sufficient,
        "oracle_formulas": _oracle_formulas(config),
        "tolerance_policy": {"n_se": config.policy.n_se, "abs_tol": config.policy.abs_tol,
                             "standard_error": "binomial sqrt(p(1-p)/count_S)"},
        "sweeps": per_w,
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    try:
        _write_json(config.output_path("manifest"), manifest)
        _write_json(config.output_path("verdict"), summary)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return status
