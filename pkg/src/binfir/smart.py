"""Identification with smart quantizers (arbitrary i.i.d. input and noise).

Every time the input exceeds ``c_u`` the output quantizer starts averaging
the next N outputs, so its running means converge to

    d_n = E[y_{t+n} | u_t > c_u] = b_n E[u | u > c_u] + sum_{m != n} b_m E[u].

After every N triggers it sends one sign bit per lag, letting the estimator
track ``d`` with a sign recursion, and the estimator solves ``U b = d`` with U
having ``E[u | u > c_u]`` on the diagonal and ``E[u]`` elsewhere. With a
known input distribution U is fixed (:func:`identify_alg3`); otherwise the
input quantizer also tracks both moments and reports them through two extra
sign bits per frame of N + 2 slots (:func:`identify_alg4`).

Per-slot order, shared by the compiled loop, :func:`reference_run` and
:func:`replay_estimator`:

1. input quantizer: update running moments; send a due moment sign (frame
   trailing slots) or the threshold bit (data slots);
2. estimator: apply a received moment sign; relay the threshold bit;
3. output quantizer: fold y_t into every pending lag, then send the due lag
   sign, which the estimator applies;
4. on a trigger: register the next N lags; when the trigger count reaches a
   multiple of N the estimator solves for b and both quantizers arm the next
   batch of sign messages.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .exceptions import ConfigError, DomainError, ProtocolError
from .plant import (
    INPUT_LINK,
    OUTPUT_LINK,
    TO_OUTPUT_LINK,
    ChannelLog,
    PlantRng,
    SystemSpec,
    log_bit,
    quantize,
    rng_header,
    simulate,
)
from .sa import StepSchedule, next_step, wire_sign
from .trace import RunTrace, validate_checkpoints

SINGULAR_TOL = 1e-8
_OK, _COLLISION = 0, 1


# -- the linear system -----------------------------------------------------


@dataclass(frozen=True)
class UMatrix:
    """``a`` on the diagonal and ``m`` elsewhere: U = (a - m) I + m 11^T."""

    a: float
    m: float
    n: int

    def matrix(self) -> np.ndarray:
        return (self.a - self.m) * np.eye(self.n) + self.m * np.ones((self.n, self.n))

    def determinant(self) -> float:
        return (self.a - self.m) ** (self.n - 1) * (self.a + (self.n - 1) * self.m)

    def is_singular(self, tol: float = SINGULAR_TOL) -> bool:
        return bool(_is_singular(self.a, self.m, self.n, tol))

    def inverse(self) -> np.ndarray:
        if self.is_singular(0.0):
            raise DomainError("U is singular")
        g = self.a - self.m
        h = self.a + (self.n - 1) * self.m
        return np.eye(self.n) / g - self.m * np.ones((self.n, self.n)) / (g * h)


def build_u(a: float, m: float, n: int) -> UMatrix:
    if n < 1:
        raise DomainError(f"order must be >= 1, got {n}")
    return UMatrix(float(a), float(m), int(n))


def solve_parameters(u_mat: UMatrix, d_hat, *, strict: bool = True, tol: float = SINGULAR_TOL) -> np.ndarray:
    """Closed-form ``U^{-1} d``.

    A singular U raises :class:`ConfigError` when ``strict`` (known input
    distribution, where invertibility is a modelling assumption) and returns
    zeros otherwise.
    """
    d_hat = np.asarray(d_hat, dtype=float)
    if d_hat.shape != (u_mat.n,):
        raise ValueError(f"expected {u_mat.n} entries, got shape {d_hat.shape}")
    out = np.zeros(u_mat.n)
    if _solve(u_mat.a, u_mat.m, d_hat, out, tol):
        return out
    if strict:
        raise ConfigError(
            f"U is singular for E[u|u>c_u]={u_mat.a:g}, E[u]={u_mat.m:g}; pick another threshold",
            "threshold",
        )
    return out


@njit(cache=True)
def _is_singular(a, m, n, tol):
    scale = max(abs(a), abs(m), 1.0)
    return abs(a - m) <= tol * scale or abs(a + (n - 1) * m) <= tol * scale


@njit(cache=True)
def _solve(a, m, d, out, tol):
    n = d.size
    if _is_singular(a, m, n, tol):
        for k in range(n):
            out[k] = 0.0
        return False
    g = a - m
    h = a + (n - 1) * m
    total = 0.0
    for k in range(n):
        total += d[k]
    corr = m * total / (g * h)
    for k in range(n):
        out[k] = d[k] / g - corr
    return True


# -- quantizer state machines ----------------------------------------------


@dataclass
class OutputQuantizerState:
    """Conditional-mean accumulators at the output quantizer."""

    n_taps: int
    pending: dict = field(default_factory=dict)
    d: np.ndarray = None
    counts: np.ndarray = None
    i: int = 0
    tau: int = 0
    j: int = 0
    d_hat: np.ndarray = None
    due: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d is None:
            self.d = np.zeros(self.n_taps)
        if self.counts is None:
            self.counts = np.ones(self.n_taps, dtype=np.int64)
        if self.d_hat is None:
            self.d_hat = np.zeros(self.n_taps)


def register_trigger(state: OutputQuantizerState, t: int) -> bool:
    """Record u_t > c_u; returns True when this trigger completes a batch of N."""
    state.i += 1
    state.tau = t
    for n in range(1, state.n_taps + 1):
        state.pending.setdefault(t + n, set()).add(n)
    if state.i % state.n_taps == 0:
        state.j += 1
        return True
    return False


def fold_conditional_mean(state: OutputQuantizerState, y_t: float, t: int) -> OutputQuantizerState:
    for n in sorted(state.pending.get(t, ())):
        c = state.counts[n - 1]
        state.d[n - 1] = (y_t + (c - 1) * state.d[n - 1]) / c
        state.counts[n - 1] = c + 1
    state.pending.pop(t - 1, None)
    return state


def emit_sign_messages(state: OutputQuantizerState, sched: StepSchedule) -> list[int]:
    """Arm the batch just completed at ``state.tau``: lag n reports at slot
    ``tau + n``. Returns the scheduled slots."""
    alpha = next_step(sched)
    slots = []
    for n in range(1, state.n_taps + 1):
        s = state.tau + n
        if s in state.due:
            raise ProtocolError(f"slot {s} already carries a sign message")
        state.due[s] = (n, alpha)
        slots.append(s)
    return slots


def send_due_message(state: OutputQuantizerState, t: int, log: ChannelLog | None = None) -> int | None:
    """Send the sign scheduled for slot t, if any, and update the local copy of
    the tracked means."""
    if t not in state.due:
        return None
    n, alpha = state.due.pop(t)
    s = wire_sign(state.d[n - 1] - state.d_hat[n - 1])
    state.d_hat[n - 1] += alpha * s
    bit = 1 if s > 0 else 0
    if log is not None:
        log_bit(log, t, OUTPUT_LINK, bit)
    return bit


@dataclass
class InputQuantizerState:
    """Running input moments at a smart input quantizer."""

    threshold: float
    e1: float = 0.0
    t: int = 0
    e2: float = 0.0
    k: int = 0
    e_hat: np.ndarray = field(default_factory=lambda: np.zeros(2))
    due: dict = field(default_factory=dict)


def observe_input(state: InputQuantizerState, u_t: float) -> int:
    state.t += 1
    state.e1 = (u_t + (state.t - 1) * state.e1) / state.t
    bit = quantize(u_t, state.threshold)
    if bit:
        state.k += 1
        state.e2 = (u_t + (state.k - 1) * state.e2) / state.k
    return bit


def frame_position(t: int, n_taps: int) -> int:
    return t % (n_taps + 2)


def is_data_slot(t: int, n_taps: int) -> bool:
    return 1 <= frame_position(t, n_taps) <= n_taps


def moment_slots(tau: int, n_taps: int) -> tuple[int, int]:
    """Trailing slots of the frame containing ``tau``."""
    start = tau - frame_position(tau, n_taps) + 1
    return start + n_taps, start + n_taps + 1


# -- compiled run loop -----------------------------------------------------


@njit(cache=True)
def _smart_run(u, y, n_taps, c_u, known, a_known, m_known, gain, offset, tol, cps,
               in_bits, out_bits, fb_out, rec_i, rec_j, rec_b, rec_d, rec_e):
    N = n_taps
    T = u.size
    frame = N + 2
    d = np.zeros(N)
    cnt = np.ones(N)
    dh = np.zeros(N)
    bh = np.zeros(N)
    eh = np.zeros(2)
    pend = np.zeros((N + 1, N), dtype=np.bool_)
    i = 0
    j = 0
    batch_tau = -1
    batch_alpha = 0.0
    e1 = 0.0
    e2 = 0.0
    k = 0
    e_slot1 = -1
    e_slot2 = -1
    es1 = 0.0
    es2 = 0.0
    e_alpha = 0.0
    cp = 0
    while cp < cps.size and cps[cp] < 1:
        rec_i[cp] = 0
        rec_j[cp] = 0
        rec_b[cp, :] = bh
        rec_d[cp, :] = dh
        rec_e[cp, :] = eh
        cp += 1
    for t in range(1, T + 1):
        idx = t - 1
        ut = u[idx]
        above = ut > c_u
        data = True
        pos = 0
        if not known:
            e1 = (ut + (t - 1) * e1) / t
            if above:
                k += 1
                e2 = (ut + (k - 1) * e2) / k
            pos = t % frame
            data = 1 <= pos <= N
            if t == e_slot1:
                in_bits[idx] = 1 if es1 > 0 else 0
                eh[0] += e_alpha * es1
            elif t == e_slot2:
                in_bits[idx] = 1 if es2 > 0 else 0
                eh[1] += e_alpha * es2
        if data:
            if in_bits[idx] >= 0:
                return _COLLISION, i, j
            in_bits[idx] = 1 if above else 0
            fb_out[idx] += 1
        r = t % (N + 1)
        yt = y[idx]
        for n in range(N):
            if pend[r, n]:
                d[n] = (yt + (cnt[n] - 1.0) * d[n]) / cnt[n]
                cnt[n] += 1.0
                pend[r, n] = False
        if batch_tau > 0:
            lag = t - batch_tau
            if 1 <= lag <= N:
                s = 1.0 if d[lag - 1] - dh[lag - 1] >= 0.0 else -1.0
                dh[lag - 1] += batch_alpha * s
                if out_bits[idx] >= 0:
                    return _COLLISION, i, j
                out_bits[idx] = 1 if s > 0 else 0
        if data and above:
            i += 1
            for n in range(N):
                pend[(t + n + 1) % (N + 1), n] = True
            if i % N == 0:
                j += 1
                alpha = gain / (j + offset)
                if known:
                    _solve(a_known, m_known, dh, bh, tol)
                else:
                    _solve(eh[1], eh[0], dh, bh, tol)
                    es1 = 1.0 if e1 - eh[0] >= 0.0 else -1.0
                    es2 = 1.0 if e2 - eh[1] >= 0.0 else -1.0
                    start = t - pos + 1
                    e_slot1 = start + N
                    e_slot2 = start + N + 1
                    e_alpha = alpha
                batch_tau = t
                batch_alpha = alpha
        while cp < cps.size and cps[cp] == t:
            rec_i[cp] = i
            rec_j[cp] = j
            rec_b[cp, :] = bh
            rec_d[cp, :] = dh
            rec_e[cp, :] = eh
            cp += 1
    return _OK, i, j


def _run_smart(u, y, n_taps, threshold, known, a, m, gain, offset, tol, checkpoints, algorithm):
    if n_taps < 1:
        raise ConfigError("n_taps must be >= 1", "n_taps")
    StepSchedule(gain, offset)
    u = np.ascontiguousarray(u, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if u.ndim != 1 or u.shape != y.shape:
        raise ValueError(f"u and y must be 1-D of equal length, got {u.shape} and {y.shape}")
    T = u.size
    cps = validate_checkpoints(checkpoints, T)
    in_bits = np.full(T, -1, np.int8)
    out_bits = np.full(T, -1, np.int8)
    fb_in = np.zeros(T, np.uint8)
    fb_out = np.zeros(T, np.uint8)
    if T:
        fb_in[0] = 1  # threshold set once
    rec_i = np.zeros(cps.size, np.int64)
    rec_j = np.zeros(cps.size, np.int64)
    rec_b = np.zeros((cps.size, n_taps))
    rec_d = np.zeros((cps.size, n_taps))
    rec_e = np.zeros((cps.size, 2))
    status, i, j = _smart_run(
        u, y, n_taps, float(threshold), known, float(a), float(m), float(gain), float(offset), float(tol),
        cps, in_bits, out_bits, fb_out, rec_i, rec_j, rec_b, rec_d, rec_e,
    )
    if status != _OK:
        raise ProtocolError(f"two bits on one link in a single slot (trigger {i})")
    estimates = {"d_hat": rec_d}
    if not known:
        estimates["e_hat"] = rec_e
    estimates["b_hat"] = rec_b
    estimates["triggers"] = rec_i[:, None]
    log = ChannelLog.from_arrays(1, in_bits, out_bits, fb_in, fb_out)
    meta = {"iterations": int(j), "triggers": int(i), "threshold": float(threshold)}
    if known:
        meta["u_matrix"] = {"diagonal": float(a), "off_diagonal": float(m)}
    return RunTrace(algorithm, cps, rec_j, estimates, 0, log, T, meta)


def identify_alg3(u, y, n_taps: int, *, threshold: float, mean: float, mean_above: float,
                  gain: float = 1.0, offset: float = 0.0, checkpoints=None) -> RunTrace:
    """Known input distribution: ``mean = E[u]`` and ``mean_above =
    E[u | u > threshold]`` fix U."""
    if n_taps < 1:
        raise ConfigError("n_taps must be >= 1", "n_taps")
    build = build_u(mean_above, mean, n_taps)
    if build.is_singular():
        solve_parameters(build, np.zeros(n_taps), strict=True)
    return _run_smart(u, y, n_taps, threshold, True, mean_above, mean, gain, offset, SINGULAR_TOL,
                      checkpoints, "alg3")


def identify_alg4(u, y, n_taps: int, *, threshold: float, gain: float = 1.0, offset: float = 0.0,
                  singular_tol: float = SINGULAR_TOL, checkpoints=None) -> RunTrace:
    """Unknown input distribution; frames of ``n_taps + 2`` slots."""
    return _run_smart(u, y, n_taps, threshold, False, 0.0, 0.0, gain, offset, singular_tol,
                      checkpoints, "alg4")


def run_alg3(spec: SystemSpec, horizon: int, seed: int = 0, replica: int | None = None, *,
             threshold: float = 1.0, **kwargs) -> RunTrace:
    rng = PlantRng.from_seed(seed, replica)
    sig = simulate(spec, horizon, rng)
    trace = identify_alg3(sig.u, sig.y, spec.order, threshold=threshold, mean=spec.input.expectation(),
                          mean_above=spec.input.mean_above(threshold), **kwargs)
    trace.meta["rng"] = rng_header(seed, replica)
    return trace


def run_alg4(spec: SystemSpec, horizon: int, seed: int = 0, replica: int | None = None, *,
             threshold: float = 1.0, **kwargs) -> RunTrace:
    rng = PlantRng.from_seed(seed, replica)
    sig = simulate(spec, horizon, rng)
    trace = identify_alg4(sig.u, sig.y, spec.order, threshold=threshold, **kwargs)
    trace.meta["rng"] = rng_header(seed, replica)
    return trace


# -- readable reference and estimator-only replay --------------------------


def reference_run(u, y, n_taps: int, threshold: float, *, known: tuple[float, float] | None = None,
                  gain: float = 1.0, offset: float = 0.0) -> dict:
    """Slot-by-slot run built from the quantizer state machines.

    ``known`` is ``(E[u], E[u | u > threshold])`` for the known-distribution
    scheme, ``None`` for the framed unknown-distribution scheme. Slow; meant
    for short horizons and for cross-checking :func:`identify_alg3` and
    :func:`identify_alg4`.
    """
    N = n_taps
    log = ChannelLog(1, len(u))
    out_q = OutputQuantizerState(N)
    in_q = InputQuantizerState(threshold)
    sched = StepSchedule(gain, offset)
    b_hat = np.zeros(N)
    e_due = {}
    max_live_sets = 0
    for t in range(1, len(u) + 1):
        bit = observe_input(in_q, float(u[t - 1]))
        data = known is not None or is_data_slot(t, N)
        if known is None and t in e_due:
            which, s, alpha = e_due.pop(t)
            log_bit(log, t, INPUT_LINK, 1 if s > 0 else 0)
            in_q.e_hat[which] += alpha * s
        if data:
            log_bit(log, t, INPUT_LINK, bit)
            log_bit(log, t, TO_OUTPUT_LINK)
        fold_conditional_mean(out_q, float(y[t - 1]), t)
        send_due_message(out_q, t, log)
        if data and bit:
            if register_trigger(out_q, t):
                if known is not None:
                    b_hat = solve_parameters(build_u(known[1], known[0], N), out_q.d_hat)
                else:
                    b_hat = solve_parameters(build_u(in_q.e_hat[1], in_q.e_hat[0], N), out_q.d_hat, strict=False)
                alpha = sched.alpha(sched.j)
                emit_sign_messages(out_q, sched)
                if known is None:
                    s1 = wire_sign(in_q.e1 - in_q.e_hat[0])
                    s2 = wire_sign(in_q.e2 - in_q.e_hat[1])
                    slot1, slot2 = moment_slots(t, N)
                    e_due[slot1] = (0, s1, alpha)
                    e_due[slot2] = (1, s2, alpha)
        max_live_sets = max(max_live_sets, len(out_q.pending))
    return {
        "b_hat": b_hat,
        "d_hat": out_q.d_hat.copy(),
        "e_hat": in_q.e_hat.copy(),
        "d": out_q.d.copy(),
        "i": out_q.i,
        "j": out_q.j,
        "log": log,
        "max_live_sets": max_live_sets,
    }


def replay_estimator(log: ChannelLog, n_taps: int, horizon: int, *, known: tuple[float, float] | None = None,
                     gain: float = 1.0, offset: float = 0.0) -> dict:
    """Estimator trajectory rebuilt from the channel log alone."""
    N = n_taps
    sched = StepSchedule(gain, offset)
    d_hat = np.zeros(N)
    e_hat = np.zeros(2)
    b_hat = np.zeros(N)
    due = {}
    e_due = {}
    i = j = 0
    for t in range(1, horizon + 1):
        data = known is not None or is_data_slot(t, N)
        if known is None and t in e_due:
            which, alpha = e_due.pop(t)
            e_hat[which] += alpha * (1 if log.bit(t, INPUT_LINK) else -1)
        trig = log.bit(t, INPUT_LINK) if data else 0
        if t in due:
            n, alpha = due.pop(t)
            d_hat[n - 1] += alpha * (1 if log.bit(t, OUTPUT_LINK) else -1)
        if trig:
            i += 1
            if i % N == 0:
                j += 1
                if known is not None:
                    b_hat = solve_parameters(build_u(known[1], known[0], N), d_hat)
                else:
                    b_hat = solve_parameters(build_u(e_hat[1], e_hat[0], N), d_hat, strict=False)
                alpha = next_step(sched)
                for n in range(1, N + 1):
                    due[t + n] = (n, alpha)
                if known is None:
                    slot1, slot2 = moment_slots(t, N)
                    e_due[slot1] = (0, alpha)
                    e_due[slot2] = (1, alpha)
    return {"b_hat": b_hat, "d_hat": d_hat, "e_hat": e_hat, "i": i, "j": j}


def conditional_mean_targets(spec: SystemSpec, threshold: float) -> np.ndarray:
    """Limits of the output quantizer's running means, d_n."""
    m = spec.input.expectation()
    a = spec.input.mean_above(threshold)
    b = np.asarray(spec.coefficients)
    return m * b.sum() + (a - m) * b

