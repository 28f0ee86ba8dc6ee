"""scikit-learn style wrappers around the four identification schemes.

Each estimator takes a recorded input sequence ``u`` and output sequence
``y`` in :meth:`fit`, runs the quantized protocol over them and exposes the
identified FIR coefficients as ``coef_``. :meth:`predict` filters a new
input sequence through the identified model.

The computation-free schemes treat the first ``n_taps`` samples as pre-sample
slots, so ``len(u) - n_taps`` protocol slots are used.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils import check_consistent_length, column_or_1d
from sklearn.utils.validation import check_is_fitted

from . import blind, smart
from .numerics import PAPER_ONE_SIGMA_TAIL


def _signals(u, y):
    u = column_or_1d(np.asarray(u, dtype=float), warn=True)
    y = column_or_1d(np.asarray(y, dtype=float), warn=True)
    check_consistent_length(u, y)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
        raise ValueError("u and y must be finite")
    return u, y


class _FIRBase(RegressorMixin, BaseEstimator):
    def _store(self, trace):
        self.coef_ = np.array(trace.final("b_hat"), dtype=float)
        self.trace_ = trace
        self.channel_log_ = trace.channel_log
        self.n_truncations_ = int(trace.truncations)
        self.n_iter_ = int(trace.meta["iterations"])
        return self

    def predict(self, u):
        """One-step FIR prediction ``sum_n coef_n u_{t-n}`` with zero initial
        conditions."""
        check_is_fitted(self, "coef_")
        u = column_or_1d(np.asarray(u, dtype=float), warn=True)
        return np.convolve(u, np.concatenate([[0.0], self.coef_]))[: u.size]


class BinaryFIRKnownInput(_FIRBase):
    """Binary output quantizer, input quantized at its known mean.

    Needs Gaussian input with known ``input_mean`` and ``input_variance``
    and Gaussian noise.
    """

    def __init__(self, n_taps=3, input_mean=None, input_variance=None, gain=10.0, offset=0.0,
                 bound=1000.0, growth=2.0, tail=PAPER_ONE_SIGMA_TAIL, use_table=True):
        self.n_taps = n_taps
        self.input_mean = input_mean
        self.input_variance = input_variance
        self.gain = gain
        self.offset = offset
        self.bound = bound
        self.growth = growth
        self.tail = tail
        self.use_table = use_table

    def fit(self, u, y, checkpoints=None):
        if self.input_mean is None or self.input_variance is None:
            raise ValueError("input_mean and input_variance must be set")
        u, y = _signals(u, y)
        trace = blind.identify_alg1(
            u, y, self.n_taps, mean=self.input_mean, variance=self.input_variance, gain=self.gain,
            offset=self.offset, bound=self.bound, growth=self.growth, tail=self.tail,
            table="default" if self.use_table else None, checkpoints=checkpoints,
        )
        self._store(trace)
        self.thresholds_ = {"c_y": float(trace.final("c_y")[0]), "ct_y": float(trace.final("ct_y")[0])}
        return self


class BinaryFIRUnknownInput(_FIRBase):
    """Binary quantizers at both ends, input statistics unknown."""

    def __init__(self, n_taps=3, gain=10.0, offset=0.0, bound=1000.0, growth=2.0,
                 tail=PAPER_ONE_SIGMA_TAIL, use_table=True):
        self.n_taps = n_taps
        self.gain = gain
        self.offset = offset
        self.bound = bound
        self.growth = growth
        self.tail = tail
        self.use_table = use_table

    def fit(self, u, y, checkpoints=None):
        u, y = _signals(u, y)
        trace = blind.identify_alg2(
            u, y, self.n_taps, gain=self.gain, offset=self.offset, bound=self.bound,
            growth=self.growth, tail=self.tail, table="default" if self.use_table else None,
            checkpoints=checkpoints,
        )
        self._store(trace)
        self.thresholds_ = {k: float(trace.final(k)[0]) for k in ("c_y", "ct_y", "c_u", "ct_u")}
        return self


class SmartBinaryFIRKnownInput(_FIRBase):
    """Smart output quantizer with a known input distribution.

    ``input_distribution`` is any object with ``expectation()`` and
    ``mean_above(c)``, e.g. :class:`binfir.plant.Gaussian`.
    """

    def __init__(self, n_taps=3, input_distribution=None, threshold=1.0, gain=1.0, offset=0.0):
        self.n_taps = n_taps
        self.input_distribution = input_distribution
        self.threshold = threshold
        self.gain = gain
        self.offset = offset

    def fit(self, u, y, checkpoints=None):
        if self.input_distribution is None:
            raise ValueError("input_distribution must be set")
        u, y = _signals(u, y)
        trace = smart.identify_alg3(
            u, y, self.n_taps, threshold=self.threshold,
            mean=self.input_distribution.expectation(),
            mean_above=self.input_distribution.mean_above(self.threshold),
            gain=self.gain, offset=self.offset, checkpoints=checkpoints,
        )
        return self._store(trace)


class SmartBinaryFIRUnknownInput(_FIRBase):
    """Smart quantizers at both ends, input distribution unknown."""

    def __init__(self, n_taps=3, threshold=1.0, gain=1.0, offset=0.0):
        self.n_taps = n_taps
        self.threshold = threshold
        self.gain = gain
        self.offset = offset

    def fit(self, u, y, checkpoints=None):
        u, y = _signals(u, y)
        trace = smart.identify_alg4(
            u, y, self.n_taps, threshold=self.threshold, gain=self.gain, offset=self.offset,
            checkpoints=checkpoints,
        )
        self._store(trace)
        self.input_moments_ = trace.final("e_hat").copy()
        return self


ESTIMATORS = {
    "alg1": BinaryFIRKnownInput,
    "alg2": BinaryFIRUnknownInput,
    "alg3": SmartBinaryFIRKnownInput,
    "alg4": SmartBinaryFIRUnknownInput,
}
