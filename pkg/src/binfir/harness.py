"""Experiment configuration, single runs, Monte Carlo variance studies and
result files.

Config files are YAML::

    algorithm: alg1            # alg1 | alg2 | alg3 | alg4
    system:
      coefficients: [0.2, -0.2, 0.6]
      input: {kind: gaussian, mean: 1.0, variance: 1.0}
      noise: {kind: gaussian, mean: 0.0, variance: 1.0}
    step: {gain: 10.0, offset: 0.0}
    truncation: {bound: 1000.0, growth: 2.0}
    threshold: 1.0             # input threshold of the smart schemes
    tail: paper                # paper | exact | a number in (0, 0.5)
    horizon: 1000000
    seed: 0
    replicas: 200
    checkpoints: {per_decade: 10, start: 10}

Every key is optional except ``algorithm``.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from joblib import Parallel, delayed

from . import blind, smart
from .exceptions import ConfigError, OutputError, UnsupportedError
from .numerics import EXACT_ONE_SIGMA_TAIL, PAPER_ONE_SIGMA_TAIL
from .plant import (
    BIT_LINKS,
    Gaussian,
    PAPER_SYSTEM,
    PlantRng,
    SystemSpec,
    distribution_from_dict,
    rng_header,
    simulate,
    write_signal_dump,
)
from .sa import StepSchedule, TruncationPolicy
from .trace import CSV_COLUMNS, RunTrace, log_grid

ALGORITHMS = ("alg1", "alg2", "alg3", "alg4")
DEFAULT_GAIN = {"alg1": 10.0, "alg2": 10.0, "alg3": 1.0, "alg4": 1.0}
DEFAULT_REPLICAS = 200
PAPER_REPLICAS = 10_000
OUT_ENV = "BINFIR_OUT"

_TOP_KEYS = {"algorithm", "system", "step", "truncation", "threshold", "tail", "horizon", "seed",
             "replicas", "checkpoints"}


@dataclass
class ExperimentConfig:
    algorithm: str
    system: SystemSpec = PAPER_SYSTEM
    gain: float | None = None
    offset: float = 0.0
    bound: float = 1000.0
    growth: float = 2.0
    threshold: float = 1.0
    tail: float | str = "paper"
    horizon: int = 10**6
    seed: int = 0
    replicas: int = DEFAULT_REPLICAS
    per_decade: int = 10
    checkpoint_start: int = 10

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}",
                              "algorithm")
        _field_check(lambda: StepSchedule(self.step_gain, self.offset))
        _field_check(lambda: TruncationPolicy(self.bound, self.growth))
        for name in ("horizon", "seed", "replicas", "per_decade", "checkpoint_start"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"expected an integer, got {v!r}", _PATHS.get(name, name))
            setattr(self, name, int(v))
        if self.horizon < 0:
            raise ConfigError("must be nonnegative", "horizon")
        if self.seed < 0:
            raise ConfigError("must be nonnegative", "seed")
        if self.replicas < 1:
            raise ConfigError("must be at least 1", "replicas")
        if self.per_decade < 1 or self.checkpoint_start < 1:
            raise ConfigError("per_decade and start must be positive", "checkpoints")
        self.tail_value()
        self._check_compatibility()

    def _check_compatibility(self):
        spec = self.system
        if self.algorithm in ("alg1", "alg2"):
            for name in ("input", "noise"):
                if not isinstance(getattr(spec, name), Gaussian):
                    raise ConfigError(f"{self.algorithm} needs a Gaussian {name}", f"system.{name}.kind")
            if spec.input.variance <= 0:
                raise ConfigError(f"{self.algorithm} needs a positive input variance", "system.input.variance")
        else:
            if not math.isfinite(self.threshold):
                raise ConfigError("must be finite", "threshold")
            try:
                a = spec.input.mean_above(self.threshold)
            except ValueError as exc:
                raise ConfigError(str(exc), "threshold") from None
            if self.algorithm == "alg3":
                u_mat = smart.build_u(a, spec.input.expectation(), spec.order)
                if u_mat.is_singular():
                    raise ConfigError("U is singular at this threshold", "threshold")

    def tail_value(self) -> float:
        if self.tail == "paper":
            return PAPER_ONE_SIGMA_TAIL
        if self.tail == "exact":
            return EXACT_ONE_SIGMA_TAIL
        if isinstance(self.tail, (int, float)) and not isinstance(self.tail, bool) and 0 < self.tail < 0.5:
            return float(self.tail)
        raise ConfigError(f"expected 'paper', 'exact' or a number in (0, 0.5), got {self.tail!r}", "tail")

    def checkpoints(self) -> np.ndarray:
        return log_grid(self.horizon, self.per_decade, self.checkpoint_start)

    @property
    def step_gain(self) -> float:
        """Configured gain, or the per-algorithm default when unset."""
        return DEFAULT_GAIN[self.algorithm] if self.gain is None else self.gain

    def with_overrides(self, **kw) -> ExperimentConfig:
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "system": self.system.to_dict(),
            "step": {"gain": self.step_gain, "offset": self.offset},
            "truncation": {"bound": self.bound, "growth": self.growth},
            "threshold": self.threshold,
            "tail": self.tail,
            "horizon": self.horizon,
            "seed": self.seed,
            "replicas": self.replicas,
            "checkpoints": {"per_decade": self.per_decade, "start": self.checkpoint_start},
        }


_PATHS = {"per_decade": "checkpoints.per_decade", "checkpoint_start": "checkpoints.start"}


def _field_check(fn):
    try:
        fn()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _section(d, key, allowed):
    sec = d.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError("expected a mapping", key)
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)}", key)
    return sec


def _number(sec, key, path, default):
    v = sec.get(key, default)
    if v is None or isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", path)
    return float(v)


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping at the top level")
    extra = set(d) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)}", "<root>")
    if "algorithm" not in d:
        raise ConfigError("missing required field", "algorithm")
    sys_d = _section(d, "system", ("coefficients", "input", "noise"))
    if sys_d:
        coef = sys_d.get("coefficients", list(PAPER_SYSTEM.coefficients))
        if not isinstance(coef, list) or not coef or not all(
            isinstance(c, (int, float)) and not isinstance(c, bool) for c in coef
        ):
            raise ConfigError("expected a nonempty list of numbers", "system.coefficients")
        inp = distribution_from_dict(sys_d.get("input", PAPER_SYSTEM.input.to_dict()), "system.input")
        noise = distribution_from_dict(sys_d.get("noise", PAPER_SYSTEM.noise.to_dict()), "system.noise")
        system = SystemSpec(tuple(coef), inp, noise)
    else:
        system = PAPER_SYSTEM
    step = _section(d, "step", ("gain", "offset"))
    trunc = _section(d, "truncation", ("bound", "growth"))
    cps = _section(d, "checkpoints", ("per_decade", "start"))
    algorithm = d["algorithm"]
    if not isinstance(algorithm, str):
        raise ConfigError(f"expected a string, got {algorithm!r}", "algorithm")
    gain = step.get("gain")
    return ExperimentConfig(
        algorithm=algorithm,
        system=system,
        gain=None if gain is None else _number(step, "gain", "step.gain", None),
        offset=_number(step, "offset", "step.offset", 0.0),
        bound=_number(trunc, "bound", "truncation.bound", 1000.0),
        growth=_number(trunc, "growth", "truncation.growth", 2.0),
        threshold=_number(d, "threshold", "threshold", 1.0),
        tail=d.get("tail", "paper"),
        horizon=d.get("horizon", 10**6),
        seed=d.get("seed", 0),
        replicas=d.get("replicas", DEFAULT_REPLICAS),
        per_decade=cps.get("per_decade", 10),
        checkpoint_start=cps.get("start", 10),
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}", str(path)) from None
    return config_from_dict(data)


# -- running ---------------------------------------------------------------


def _kwargs(config: ExperimentConfig) -> dict:
    kw = {"gain": config.step_gain, "offset": config.offset}
    if config.algorithm in ("alg1", "alg2"):
        kw.update(bound=config.bound, growth=config.growth, tail=config.tail_value())
    else:
        kw["threshold"] = config.threshold
    return kw


_RUNNERS = {"alg1": blind.run_alg1, "alg2": blind.run_alg2, "alg3": smart.run_alg3, "alg4": smart.run_alg4}


def run_experiment(config: ExperimentConfig, replica: int | None = None, checkpoints=None) -> RunTrace:
    """Deterministic run for ``(config, replica)``; ``replica=None`` uses the
    base seed directly."""
    if checkpoints is None:
        checkpoints = config.checkpoints()
    run = _RUNNERS.get(config.algorithm)
    if run is None:
        raise UnsupportedError(f"algorithm {config.algorithm!r}")
    trace = run(config.system, config.horizon, seed=config.seed, replica=replica,
                checkpoints=checkpoints, **_kwargs(config))
    trace.meta["config"] = config.to_dict()
    return trace


def simulated_signals(config: ExperimentConfig, replica: int | None = None):
    """The exact input/output samples a run with this config sees."""
    rng = PlantRng.from_seed(config.seed, replica)
    n = config.system.order
    if config.algorithm in ("alg1", "alg2"):
        return simulate(config.system, config.horizon + n, rng, first_slot=1 - n)
    return simulate(config.system, config.horizon, rng)


@dataclass(eq=False)
class VarianceCurve:
    """Sample variance across replicas of ``sqrt(t) (b_hat - b)`` and
    ``sqrt(j) (b_hat - b)`` at each checkpoint.

    ``j`` is the iteration count reached by slot t, averaged over replicas
    (it is deterministic for the computation-free schemes and random for the
    smart ones).
    """

    algorithm: str
    t: np.ndarray
    j: np.ndarray
    by_t: np.ndarray
    by_j: np.ndarray
    replicas: int
    coefficients: tuple[float, ...]
    truncations: int = 0
    meta: dict = field(default_factory=dict)

    def rows(self):
        for r in range(self.t.size):
            t = int(self.t[r])
            j = int(round(float(self.j[r])))
            for kind, values in (("var_t", self.by_t), ("var_j", self.by_j)):
                for k, v in enumerate(values[r], start=1):
                    yield t, j, kind, k, repr(float(v))
            yield t, j, "mean_j", 1, repr(float(self.j[r]))

    def to_csv(self, path=None) -> str | None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(self.rows())
        if path is None:
            return buf.getvalue()
        try:
            with open(path, "w", newline="") as fh:
                fh.write(buf.getvalue())
        except OSError as exc:
            raise OutputError(f"cannot write variance curve to {path}: {exc}") from exc
        return None


def _replica_result(config: ExperimentConfig, replica: int, checkpoints: np.ndarray):
    trace = run_experiment(config, replica=replica, checkpoints=checkpoints)
    return trace.j.astype(float), trace.estimates["b_hat"].copy(), int(trace.truncations)


def normalized_variance(t, j, b_hats, b_true) -> tuple[np.ndarray, np.ndarray]:
    """Sample variances (ddof=1) over axis 0 of ``b_hats`` with shape
    (replicas, checkpoints, N)."""
    err = b_hats - np.asarray(b_true)[None, None, :]
    by_t = np.var(np.sqrt(np.asarray(t, float))[None, :, None] * err, axis=0, ddof=1)
    by_j = np.var(np.sqrt(np.asarray(j, float))[:, :, None] * err, axis=0, ddof=1)
    return by_t, by_j


def monte_carlo_variance(config: ExperimentConfig, replicas: int | None = None, jobs: int = 1,
                         checkpoints=None) -> VarianceCurve:
    """Run ``replicas`` independent replicas (replica index r uses the random
    stream derived from ``(config.seed, r)``) and aggregate in replica order."""
    replicas = config.replicas if replicas is None else int(replicas)
    if replicas < 2:
        raise ConfigError("need at least 2 replicas for a sample variance", "replicas")
    if checkpoints is None:
        cps = log_grid(config.horizon, max(1, config.per_decade // 3), start=100)
        cps = cps[cps >= min(100, config.horizon)]
    else:
        cps = np.unique(np.asarray(checkpoints, dtype=np.int64))
    results = Parallel(n_jobs=jobs)(delayed(_replica_result)(config, r, cps) for r in range(replicas))
    j = np.stack([r[0] for r in results])
    b = np.stack([r[1] for r in results])
    by_t, by_j = normalized_variance(cps, j, b, config.system.coefficients)
    return VarianceCurve(
        algorithm=config.algorithm,
        t=cps,
        j=j.mean(axis=0),
        by_t=by_t,
        by_j=by_j,
        replicas=replicas,
        coefficients=config.system.coefficients,
        truncations=int(sum(r[2] for r in results)),
        meta={"config": config.to_dict(), "rng": rng_header(config.seed)},
    )


# -- output files ----------------------------------------------------------


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "out"))


def trace_summary(trace: RunTrace, config: ExperimentConfig | None = None) -> dict:
    b_true = None if config is None else np.asarray(config.system.coefficients)
    final = {k: v[-1].tolist() for k, v in trace.estimates.items()} if len(trace) else {}
    summary = {
        "algorithm": trace.algorithm,
        "horizon": trace.horizon,
        "iterations": trace.meta.get("iterations", 0),
        "final_estimates": final,
        "truncations": int(trace.truncations),
    }
    if b_true is not None and "b_hat" in final:
        err = np.asarray(final["b_hat"]) - b_true
        summary["true_coefficients"] = b_true.tolist()
        summary["error_norms"] = {"max_abs": float(np.abs(err).max()), "l2": float(np.linalg.norm(err))}
    log = trace.channel_log
    if log is not None:
        summary["bits_per_link"] = log.bits_per_link(1, trace.horizon)
        if log.first_slot < 1:
            summary["warmup_bits_per_link"] = log.bits_per_link(log.first_slot, 0)
        summary["max_bits_per_slot"] = {
            link: int((log.payload[:, k] >= 0).max(initial=0)) for k, link in enumerate(BIT_LINKS)
        }
    if "triggers" in trace.meta:
        summary["triggers"] = trace.meta["triggers"]
    if config is not None:
        summary["config"] = config.to_dict()
    if "rng" in trace.meta:
        summary["rng"] = trace.meta["rng"]
    return summary


def curve_summary(curve: VarianceCurve) -> dict:
    return {
        "algorithm": curve.algorithm,
        "replicas": curve.replicas,
        "checkpoints": curve.t.tolist(),
        "final_variance_t": curve.by_t[-1].tolist() if curve.t.size else [],
        "final_variance_j": curve.by_j[-1].tolist() if curve.t.size else [],
        "truncations": curve.truncations,
        "config": curve.meta.get("config"),
        "rng": curve.meta.get("rng"),
    }


def _write_json(path: Path, obj: dict):
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def emit_outputs(result: RunTrace | VarianceCurve, out_dir, config: ExperimentConfig | None = None) -> dict:
    """Write ``trace.csv`` (or ``variance.csv``) plus ``summary.json`` into
    ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out}: {exc}") from exc
    if isinstance(result, VarianceCurve):
        csv_path = out / "variance.csv"
        result.to_csv(csv_path)
        summary = curve_summary(result)
    else:
        csv_path = out / "trace.csv"
        result.to_csv(csv_path)
        summary = trace_summary(result, config)
    json_path = out / "summary.json"
    _write_json(json_path, summary)
    return {"csv": csv_path, "summary": json_path}


def dump_channel(trace: RunTrace, out_dir) -> Path:
    path = Path(out_dir) / "channel.csv"
    trace.channel_log.write_csv(path)
    return path


def dump_signals(config: ExperimentConfig, trace: RunTrace, out_dir) -> Path:
    path = Path(out_dir) / "signals.csv"
    write_signal_dump(path, simulated_signals(config), trace.channel_log)
    return path
