"""FIR plant, input/noise distributions, binary quantizers and the channel log."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from .exceptions import ConfigError, DomainError, OutputError, ProtocolError, UnsupportedError
from .numerics import GaussianParams, truncated_gaussian_mean

BIT_GENERATOR = "PCG64"


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    variance: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ConfigError(f"variance must be nonnegative, got {self.variance}", "variance")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + math.sqrt(self.variance) * rng.standard_normal(size)

    def expectation(self) -> float:
        return self.mean

    def moments(self) -> tuple[float, float]:
        return self.mean, self.variance

    def mean_above(self, c: float) -> float:
        if self.variance == 0:
            raise DomainError("degenerate distribution has no mass above its mean")
        return truncated_gaussian_mean(GaussianParams(self.mean, self.variance), c)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mean": self.mean, "variance": self.variance}


@dataclass(frozen=True)
class Uniform:
    low: float = 0.0
    high: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        if not self.high > self.low:
            raise ConfigError(f"need low < high, got [{self.low}, {self.high}]", "high")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size)

    def expectation(self) -> float:
        return 0.5 * (self.low + self.high)

    def moments(self) -> tuple[float, float]:
        return self.expectation(), (self.high - self.low) ** 2 / 12.0

    def mean_above(self, c: float) -> float:
        if c >= self.high:
            raise DomainError(f"no mass above {c}")
        return 0.5 * (max(c, self.low) + self.high)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "low": self.low, "high": self.high}


@dataclass(frozen=True, eq=False)
class Empirical:
    """Bootstrap resampling from a fixed set of observations."""

    samples: np.ndarray
    kind = "empirical"

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float).ravel()
        if arr.size == 0 or not np.all(np.isfinite(arr)):
            raise ConfigError("need a nonempty set of finite samples", "samples")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # index through random() so batch and one-at-a-time draws agree
        idx = (rng.random(size) * self.samples.size).astype(np.int64)
        return self.samples[idx]

    def expectation(self) -> float:
        return float(self.samples.mean())

    def moments(self) -> tuple[float, float]:
        raise UnsupportedError("empirical distributions have no closed-form moments")

    def mean_above(self, c: float) -> float:
        above = self.samples[self.samples > c]
        if above.size == 0:
            raise DomainError(f"no mass above {c}")
        return float(above.mean())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "samples": self.samples.tolist()}


Distribution = Union[Gaussian, Uniform, Empirical]


def distribution_from_dict(d: dict, path: str = "") -> Distribution:
    if not isinstance(d, dict):
        raise ConfigError("expected a mapping", path)
    kind = d.get("kind", "gaussian")
    args = {k: v for k, v in d.items() if k != "kind"}
    classes = {"gaussian": Gaussian, "uniform": Uniform, "empirical": Empirical}
    if kind not in classes:
        raise ConfigError(f"unknown distribution kind {kind!r}", f"{path}.kind")
    try:
        return classes[kind](**args)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}.{exc.path}") from None
    except TypeError as exc:
        raise ConfigError(str(exc), path) from None


@dataclass(frozen=True)
class SystemSpec:
    coefficients: tuple[float, ...]
    input: Distribution = field(default_factory=Gaussian)
    noise: Distribution = field(default_factory=Gaussian)

    def __post_init__(self):
        coef = tuple(float(b) for b in np.atleast_1d(self.coefficients))
        if len(coef) < 1:
            raise ConfigError("FIR order must be at least 1", "system.coefficients")
        object.__setattr__(self, "coefficients", coef)
        _check_zero_mean(self.noise)

    @property
    def order(self) -> int:
        return len(self.coefficients)

    def to_dict(self) -> dict:
        return {
            "coefficients": list(self.coefficients),
            "input": self.input.to_dict(),
            "noise": self.noise.to_dict(),
        }


def _check_zero_mean(noise):
    path = "system.noise"
    if isinstance(noise, Gaussian) and noise.mean != 0.0:
        raise ConfigError(f"noise must be zero mean, got mean {noise.mean}", f"{path}.mean")
    if isinstance(noise, Uniform) and noise.low != -noise.high:
        raise ConfigError("uniform noise must be symmetric about 0", path)
    if isinstance(noise, Empirical):
        scale = 1.0 + float(np.abs(noise.samples).max())
        if abs(noise.samples.mean()) > 1e-12 * scale:
            raise ConfigError("empirical noise samples must have zero mean", f"{path}.samples")


PAPER_SYSTEM = SystemSpec((0.2, -0.2, 0.6), Gaussian(1.0, 1.0), Gaussian(0.0, 1.0))


def stationary_moments(spec: SystemSpec) -> tuple[float, float, float, float]:
    """Closed-form (E y, Var y, E u, Var u)."""
    if isinstance(spec.input, Empirical) or isinstance(spec.noise, Empirical):
        raise UnsupportedError("stationary moments need a Gaussian or uniform spec")
    eu, vu = spec.input.moments()
    _, vw = spec.noise.moments()
    b = np.asarray(spec.coefficients)
    return float(b.sum() * eu), float((b**2).sum() * vu + vw), eu, vu


# -- random streams --------------------------------------------------------


def seed_sequence(seed: int, replica: int | None = None) -> np.random.SeedSequence:
    key = () if replica is None else (int(replica),)
    return np.random.SeedSequence(int(seed), spawn_key=key)


@dataclass
class PlantRng:
    """Independent generators for the input and noise processes."""

    input: np.random.Generator
    noise: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int, replica: int | None = None) -> PlantRng:
        ss = seed_sequence(seed, replica)
        key = ss.spawn_key
        in_ss = np.random.SeedSequence(ss.entropy, spawn_key=key + (0,))
        noise_ss = np.random.SeedSequence(ss.entropy, spawn_key=key + (1,))
        return cls(np.random.Generator(np.random.PCG64(in_ss)), np.random.Generator(np.random.PCG64(noise_ss)))


def rng_header(seed: int, replica: int | None = None) -> dict:
    ss = seed_sequence(seed, replica)
    return {
        "bit_generator": BIT_GENERATOR,
        "entropy": int(ss.entropy),
        "spawn_key": list(ss.spawn_key),
        "streams": {"input": list(ss.spawn_key) + [0], "noise": list(ss.spawn_key) + [1]},
    }


# -- plant -----------------------------------------------------------------


@dataclass
class PlantState:
    """Last N inputs, newest first, and the current slot index."""

    lags: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, spec: SystemSpec, rng: PlantRng) -> PlantState:
        # N pre-sample inputs so that y_1 is already stationary; drawn oldest first
        pre = spec.input.sample(rng.input, spec.order)
        return cls(pre[::-1].copy(), 0)


def step_plant(state: PlantState, spec: SystemSpec, rng: PlantRng) -> tuple[float, float]:
    w = float(spec.noise.sample(rng.noise, 1)[0])
    y = float(np.dot(spec.coefficients, state.lags)) + w
    u = float(spec.input.sample(rng.input, 1)[0])
    state.lags = np.roll(state.lags, 1)
    state.lags[0] = u
    state.t += 1
    return u, y


@dataclass(frozen=True, eq=False)
class Signals:
    """Aligned input/output samples for slots ``first_slot .. last_slot``."""

    u: np.ndarray
    y: np.ndarray
    first_slot: int = 1

    @property
    def last_slot(self) -> int:
        return self.first_slot + self.u.size - 1

    @property
    def slots(self) -> np.ndarray:
        return np.arange(self.first_slot, self.last_slot + 1)


def simulate(spec: SystemSpec, n_slots: int, rng: PlantRng, first_slot: int = 1) -> Signals:
    """Vectorized equivalent of ``n_slots`` calls to :func:`step_plant`."""
    n = spec.order
    u_all = spec.input.sample(rng.input, n + n_slots)
    w = spec.noise.sample(rng.noise, n_slots)
    b = np.asarray(spec.coefficients)
    y = np.convolve(u_all, np.concatenate(([0.0], b)))[n : n + n_slots] + w
    return Signals(u_all[n:], y, first_slot)


def quantize(x: float, c: float) -> int:
    return int(x > c)


# -- channel log -----------------------------------------------------------

INPUT_LINK = "input->estimator"
OUTPUT_LINK = "output->estimator"
TO_INPUT_LINK = "estimator->input"
TO_OUTPUT_LINK = "estimator->output"
LINKS = (INPUT_LINK, OUTPUT_LINK, TO_INPUT_LINK, TO_OUTPUT_LINK)
BIT_LINKS = (INPUT_LINK, OUTPUT_LINK)


class ChannelLog:
    """Per-slot record of every transmission.

    The two quantizer-to-estimator links hold at most one bit per slot; the
    stored value is the bit itself (``-1`` when the slot is silent), so the
    estimator's view of the experiment can be replayed from the log alone.
    Feedback links carry real-valued thresholds or relayed bits and are
    counted as messages, not bits.
    """

    def __init__(self, first_slot: int = 1, n_slots: int = 0):
        self.first_slot = int(first_slot)
        self.payload = np.full((n_slots, 2), -1, dtype=np.int8)
        self.feedback = np.zeros((n_slots, 2), dtype=np.uint8)

    @classmethod
    def from_arrays(cls, first_slot, in_bits, out_bits, fb_in, fb_out) -> ChannelLog:
        log = cls(first_slot, 0)
        log.payload = np.stack([in_bits, out_bits], axis=1).astype(np.int8)
        log.feedback = np.stack([fb_in, fb_out], axis=1).astype(np.uint8)
        if np.any(log.payload > 1) or np.any(log.payload < -1):
            raise ProtocolError("payload values must be single bits")
        return log

    @property
    def last_slot(self) -> int:
        return self.first_slot + self.payload.shape[0] - 1

    def _index(self, t: int) -> int:
        if t < self.first_slot:
            raise ProtocolError(f"slot {t} precedes the first logged slot {self.first_slot}")
        idx = t - self.first_slot
        if idx >= self.payload.shape[0]:
            grow = max(idx + 1, 2 * self.payload.shape[0], 16) - self.payload.shape[0]
            self.payload = np.vstack([self.payload, np.full((grow, 2), -1, dtype=np.int8)])
            self.feedback = np.vstack([self.feedback, np.zeros((grow, 2), dtype=np.uint8)])
        return idx

    def bit(self, t: int, link: str) -> int:
        """Bit received on a quantizer link at slot t; ProtocolError if silent."""
        col = BIT_LINKS.index(link)
        idx = t - self.first_slot
        if not 0 <= idx < self.payload.shape[0] or self.payload[idx, col] < 0:
            raise ProtocolError(f"no bit on {link} at slot {t}")
        return int(self.payload[idx, col])

    def bits_per_link(self, first: int | None = None, last: int | None = None) -> dict[str, int]:
        lo = 0 if first is None else max(first - self.first_slot, 0)
        hi = self.payload.shape[0] if last is None else max(last - self.first_slot + 1, 0)
        sent = self.payload[lo:hi] >= 0
        fb = self.feedback[lo:hi]
        return {
            INPUT_LINK: int(sent[:, 0].sum()),
            OUTPUT_LINK: int(sent[:, 1].sum()),
            TO_INPUT_LINK: int(fb[:, 0].sum()),
            TO_OUTPUT_LINK: int(fb[:, 1].sum()),
        }

    def records(self) -> Iterator[tuple[int, str, int]]:
        """(slot, link, payload) for every transmission; feedback payload is a
        message count."""
        for idx in range(self.payload.shape[0]):
            t = self.first_slot + idx
            for col, link in enumerate(BIT_LINKS):
                if self.payload[idx, col] >= 0:
                    yield t, link, int(self.payload[idx, col])
            for col, link in enumerate((TO_INPUT_LINK, TO_OUTPUT_LINK)):
                if self.feedback[idx, col]:
                    yield t, link, int(self.feedback[idx, col])

    def write_csv(self, path) -> None:
        try:
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["t", "link", "payload"])
                writer.writerows(self.records())
        except OSError as exc:
            raise OutputError(f"cannot write channel log to {path}: {exc}") from exc


def log_bit(log: ChannelLog, t: int, link: str, bits: int = 1) -> None:
    """Append a transmission.

    On quantizer links ``bits`` is the transmitted bit value; a second
    transmission in the same slot raises :class:`ProtocolError`. On feedback
    links the call counts one message regardless of ``bits``.
    """
    if link not in LINKS:
        raise ProtocolError(f"unknown link {link!r}")
    idx = log._index(t)
    if link in BIT_LINKS:
        if bits not in (0, 1):
            raise ProtocolError(f"payload on {link} must be 0 or 1, got {bits}")
        col = BIT_LINKS.index(link)
        if log.payload[idx, col] >= 0:
            raise ProtocolError(f"second bit on {link} in slot {t}")
        log.payload[idx, col] = bits
    else:
        col = (TO_INPUT_LINK, TO_OUTPUT_LINK).index(link)
        log.feedback[idx, col] = min(int(log.feedback[idx, col]) + 1, 255)


def write_signal_dump(path, signals: Signals, log: ChannelLog) -> None:
    """Debug dump: t, u_t, y_t, input_bit, output_bit (empty when silent)."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "u_t", "y_t", "input_bit", "output_bit"])
            for k, t in enumerate(signals.slots):
                idx = t - log.first_slot
                row = [int(t), repr(float(signals.u[k])), repr(float(signals.y[k]))]
                for col in (0, 1):
                    v = log.payload[idx, col] if 0 <= idx < log.payload.shape[0] else -1
                    row.append("" if v < 0 else int(v))
                writer.writerow(row)
    except OSError as exc:
        raise OutputError(f"cannot write signal dump to {path}: {exc}") from exc
