"""Identification with computation-free quantizers (Gaussian input and noise).

Two estimators share the same structure. The output quantizer alternates
between a median threshold ``c_y`` (odd slots) and a one-sigma threshold
``ct_y`` (even slots), each driven to its target quantile by a
Robbins-Monro recursion, so ``(ct_y - c_y)**2`` estimates Var[y]. Each
coefficient b_n is then driven towards the root of

    E[1(u_{t-n} > c_u) 1(y_t > c_y)] = F(b_n, Var y)

With known input statistics (:func:`identify_alg1`) the input threshold is
fixed at the input mean. Without them (:func:`identify_alg2`) the input
quantizer also tracks its own median and one-sigma thresholds on an
interleaved slot plan, and coefficient rows are only updated in iterations
where the required input bit was quantized at a known median threshold.

Every run loop is compiled with numba. The Python ``*_step`` functions expose
one iteration at a time and share the compiled update arithmetic, and the
``replay_*`` functions rebuild the estimator's trajectory from a
:class:`~binfir.plant.ChannelLog` alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import numerics
from .exceptions import ConfigError, ProtocolError, UnsupportedError
from .numerics import PAPER_ONE_SIGMA_TAIL, _saturated_corr
from .plant import (
    INPUT_LINK,
    OUTPUT_LINK,
    TO_INPUT_LINK,
    TO_OUTPUT_LINK,
    ChannelLog,
    Gaussian,
    PlantRng,
    SystemSpec,
    log_bit,
    quantize,
    rng_header,
    simulate,
)
from .sa import StepSchedule, TruncationPolicy, _project, next_step
from .trace import RunTrace, validate_checkpoints

_OK, _COLLISION, _STALE_BIT = 0, 1, 2


# -- slot bookkeeping ------------------------------------------------------


@njit(cache=True)
def _residue2(j):
    return j % 2


@njit(cache=True)
def _gate(n, j):
    r = n % 4
    if r == 0 or r == 3:
        return 1 if (2 * j - 1) % 4 == 1 else 0
    return 1 if (2 * j - 1) % 4 == 3 else 0


@njit(cache=True)
def _delayed(n, j):
    jb = j - n // 2
    return jb if jb >= 1 else 1


def residue2(j: int) -> int:
    if j < 1:
        raise ValueError(f"iteration index starts at 1, got {j}")
    return j % 2


def gate_g(n: int, j: int) -> int:
    """1 when the product 1(u_{2j-1-n} > c_u) 1(y_{2j-1} > c_y) can be formed
    from bits the estimator holds in iteration j."""
    if n < 1 or j < 1:
        raise ValueError(f"need n >= 1 and j >= 1, got n={n}, j={j}")
    return int(_gate(n, j))


def delayed_index(n: int, j: int) -> int:
    """Iteration whose input median threshold quantized u_{2j-1-n}."""
    if n < 1 or j < 1:
        raise ValueError(f"need n >= 1 and j >= 1, got n={n}, j={j}")
    return max(j - n // 2, 1)


def input_mean_slot(j: int) -> int:
    return 2 * (j - 1) + j % 2


def input_var_slot(j: int) -> int:
    return 2 * j + j % 2


def alg2_done_slot(j: int) -> int:
    """Last slot whose sample iteration j consumes."""
    return max(2 * j, input_var_slot(j))


@dataclass(frozen=True)
class SlotPlan:
    """Which recursion consumes each slot under the unknown-input scheme.

    Output slots: odd -> median stream, even -> one-sigma stream. Input slots:
    ``2(j-1) + [j]_2`` -> median stream of iteration j, ``2j + [j]_2`` ->
    one-sigma stream of iteration j.
    """

    horizon: int

    def output_stream(self, t: int) -> tuple[str, int]:
        return ("mean", (t + 1) // 2) if t % 2 else ("var", t // 2)

    def input_stream(self, t: int) -> tuple[str, int]:
        # slots 1,2 | 5,6 | ... are median slots; 3,4 | 7,8 | ... one-sigma slots
        q, r = divmod(t - 1, 4)
        if r in (0, 1):
            j = 2 * q + 1 if r == 0 else 2 * q + 2
            return "mean", j
        j = 2 * q + 1 if r == 2 else 2 * q + 2
        return "var", j

    def streams(self) -> dict[str, list[int]]:
        out = {"output_mean": [], "output_var": [], "input_mean": [], "input_var": []}
        for t in range(1, self.horizon + 1):
            kind, _ = self.output_stream(t)
            out[f"output_{kind}"].append(t)
            kind, _ = self.input_stream(t)
            out[f"input_{kind}"].append(t)
        return out

    def constructible_pairs(self, n: int) -> list[tuple[int, int]]:
        """(t, t') with t an output-median slot, t' an input-median slot and
        t - t' = n."""
        pairs = []
        for t in range(1, self.horizon + 1, 2):
            tp = t - n
            if 1 <= tp and self.input_stream(tp)[0] == "mean":
                pairs.append((t, tp))
        return pairs


# -- compiled update arithmetic -------------------------------------------


@njit(cache=True)
def _alg1_candidate(x, yb1, yb2, ubits, alpha, var_u, tail, lo, step, values, glx, glw, cand):
    cand[0] = x[0] + alpha * (yb1 - 0.5)
    cand[1] = x[1] + alpha * (yb2 - tail)
    vy = (x[1] - x[0]) ** 2
    for k in range(x.size - 2):
        b = x[2 + k]
        if vy > 0.0:
            f = _saturated_corr(b, var_u, vy, lo, step, values, glx, glw)
            cand[2 + k] = b + alpha * (ubits[k] * yb1 - f)
        else:
            # c_y == ct_y only after a reset to the origin; the variance
            # estimate is undefined there, so the coefficient rows wait
            cand[2 + k] = b


@njit(cache=True)
def _alg2_candidate(x, j, yb1, yb2, ubm, ubv, ubits, cubar, alpha, tail, lo, step, values, glx, glw, cand):
    cand[0] = x[0] + alpha * (yb1 - 0.5)
    cand[1] = x[1] + alpha * (yb2 - tail)
    cand[2] = x[2] + alpha * (ubm - 0.5)
    cand[3] = x[3] + alpha * (ubv - tail)
    vy = (x[1] - x[0]) ** 2
    for k in range(x.size - 4):
        b = x[4 + k]
        cand[4 + k] = b
        if _gate(k + 1, j) == 0:
            continue
        vu = (x[3] - cubar[k]) ** 2
        if vy > 0.0 and vu > 0.0:
            hval = _saturated_corr(b, vu, vy, lo, step, values, glx, glw)
            cand[4 + k] = b + alpha * (ubits[k] * yb1 - hval)


# -- compiled run loops ----------------------------------------------------


@njit(cache=True)
def _alg1_run(u, y, n_taps, mu, var_u, gain, offset, m0, growth, tail,
              lo, step, values, glx, glw, cps,
              in_bits, out_bits, fb_in, fb_out, rec_j, rec_x, rec_tr):
    first = 1 - n_taps
    T = u.size - n_taps
    n_iter = T // 2
    x = np.zeros(n_taps + 2)
    x[1] = 1.0
    cand = np.zeros(n_taps + 2)
    ubits = np.zeros(n_taps)
    count = 0
    # threshold is fixed at the input mean: one broadcast, then a bit per slot
    fb_in[0] += 1
    for idx in range(u.size):
        in_bits[idx] = 1 if u[idx] > mu else 0
    cp = 0
    while cp < cps.size and cps[cp] < 2:
        rec_j[cp] = 0
        rec_tr[cp] = 0
        rec_x[cp, :] = x
        cp += 1
    for j in range(1, n_iter + 1):
        alpha = gain / (j + offset)
        s1 = 2 * j - 1
        s2 = 2 * j
        i1 = s1 - first
        i2 = s2 - first
        fb_out[i1] += 1
        fb_out[i2] += 1
        yb1 = 1 if y[i1] > x[0] else 0
        yb2 = 1 if y[i2] > x[1] else 0
        out_bits[i1] = yb1
        out_bits[i2] = yb2
        for k in range(n_taps):
            ubits[k] = in_bits[i1 - (k + 1)]
        _alg1_candidate(x, yb1, yb2, ubits, alpha, var_u, tail, lo, step, values, glx, glw, cand)
        if _project(cand, x, m0 * growth**count):
            count += 1
        nxt = 2 * (j + 1)
        while cp < cps.size and cps[cp] < nxt:
            rec_j[cp] = j
            rec_tr[cp] = count
            rec_x[cp, :] = x
            cp += 1
    return _OK, count, n_iter


@njit(cache=True)
def _alg2_done(j):
    r = j % 2
    return 2 * j + r


@njit(cache=True)
def _alg2_run(u, y, n_taps, gain, offset, m0, growth, tail,
              lo, step, values, glx, glw, cps,
              in_bits, thr_j, out_bits, fb_in, fb_out, rec_j, rec_x, rec_tr):
    first = 1 - n_taps
    T = u.size - n_taps
    n_iter = 0
    while _alg2_done(n_iter + 1) <= T:
        n_iter += 1
    x = np.zeros(n_taps + 4)
    x[1] = 1.0
    x[3] = 1.0
    cand = np.zeros(n_taps + 4)
    ubits = np.zeros(n_taps)
    cubar = np.zeros(n_taps)
    depth = n_taps // 2 + 1
    cu_hist = np.zeros(depth)
    cu_hist[1 % depth] = x[2]
    count = 0
    # pre-sample slots are quantized at the initial median threshold c_{u,1}
    for s in range(first, 1):
        idx = s - first
        in_bits[idx] = 1 if u[idx] > x[2] else 0
        thr_j[idx] = 1
        fb_in[idx] += 1
    cp = 0
    while cp < cps.size and cps[cp] < _alg2_done(1):
        rec_j[cp] = 0
        rec_tr[cp] = 0
        rec_x[cp, :] = x
        cp += 1
    for j in range(1, n_iter + 1):
        alpha = gain / (j + offset)
        r = j % 2
        s1 = 2 * j - 1
        s2 = 2 * j
        sm = 2 * (j - 1) + r
        sv = 2 * j + r
        i1 = s1 - first
        i2 = s2 - first
        im = sm - first
        iv = sv - first
        fb_out[i1] += 1
        fb_out[i2] += 1
        yb1 = 1 if y[i1] > x[0] else 0
        yb2 = 1 if y[i2] > x[1] else 0
        out_bits[i1] = yb1
        out_bits[i2] = yb2
        if in_bits[im] >= 0 or in_bits[iv] >= 0:
            return _COLLISION, count, j
        ubm = 1 if u[im] > x[2] else 0
        ubv = 1 if u[iv] > x[3] else 0
        in_bits[im] = ubm
        thr_j[im] = j
        in_bits[iv] = ubv
        thr_j[iv] = -j
        fb_in[im] += 1
        fb_in[iv] += 1
        for k in range(n_taps):
            n = k + 1
            if _gate(n, j) == 0:
                continue
            ip = s1 - n - first
            jb = _delayed(n, j)
            # the bit must exist and must have been quantized at c_{u, jb}
            if in_bits[ip] < 0 or thr_j[ip] != jb:
                return _STALE_BIT, count, j
            ubits[k] = in_bits[ip]
            cubar[k] = cu_hist[jb % depth]
        _alg2_candidate(x, j, yb1, yb2, ubm, ubv, ubits, cubar, alpha, tail,
                        lo, step, values, glx, glw, cand)
        if _project(cand, x, m0 * growth**count):
            count += 1
        cu_hist[(j + 1) % depth] = x[2]
        nxt = _alg2_done(j + 1)
        while cp < cps.size and cps[cp] < nxt:
            rec_j[cp] = j
            rec_tr[cp] = count
            rec_x[cp, :] = x
            cp += 1
    return _OK, count, n_iter


def _check_status(status: int, j: int):
    if status == _COLLISION:
        raise ProtocolError(f"two bits on the input link in one slot (iteration {j})")
    if status == _STALE_BIT:
        raise ProtocolError(f"input bit missing or quantized at the wrong threshold (iteration {j})")


def _as_signal(u, y, n_taps):
    u = np.ascontiguousarray(u, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if u.ndim != 1 or u.shape != y.shape:
        raise ValueError(f"u and y must be 1-D of equal length, got {u.shape} and {y.shape}")
    if u.size < n_taps:
        raise ValueError(f"need at least {n_taps} warm-up samples, got {u.size}")
    return u, y


def identify_alg1(
    u,
    y,
    n_taps: int,
    *,
    mean: float,
    variance: float,
    gain: float = 10.0,
    offset: float = 0.0,
    bound: float = 1000.0,
    growth: float = 2.0,
    tail: float = PAPER_ONE_SIGMA_TAIL,
    table: numerics.CorrelationTable | None | str = "default",
    checkpoints=None,
) -> RunTrace:
    """Known-input estimator on recorded signals.

    The first ``n_taps`` samples are pre-sample slots (numbered ``1 - n_taps
    .. 0``) during which only the input quantizer transmits; the protocol runs
    on the remaining ``len(u) - n_taps`` slots, two per iteration.
    """
    if n_taps < 1:
        raise ConfigError("n_taps must be >= 1", "n_taps")
    if not variance > 0:
        raise ConfigError("input variance must be positive", "input_variance")
    StepSchedule(gain, offset)
    TruncationPolicy(bound, growth)
    u, y = _as_signal(u, y, n_taps)
    horizon = u.size - n_taps
    cps = validate_checkpoints(checkpoints, horizon)
    if table == "default":
        table = numerics.default_table()
    lo, step, values = numerics.kernel_table(table)
    glx, glw = numerics.gl_nodes()
    in_bits = np.full(u.size, -1, np.int8)
    out_bits = np.full(u.size, -1, np.int8)
    fb_in = np.zeros(u.size, np.uint8)
    fb_out = np.zeros(u.size, np.uint8)
    rec_j = np.zeros(cps.size, np.int64)
    rec_x = np.zeros((cps.size, n_taps + 2))
    rec_tr = np.zeros(cps.size, np.int64)
    status, count, n_iter = _alg1_run(
        u, y, n_taps, float(mean), float(variance), float(gain), float(offset), float(bound),
        float(growth), float(tail), lo, step, values, glx, glw, cps,
        in_bits, out_bits, fb_in, fb_out, rec_j, rec_x, rec_tr,
    )
    _check_status(status, n_iter)
    log = ChannelLog.from_arrays(1 - n_taps, in_bits, out_bits, fb_in, fb_out)
    return RunTrace(
        "alg1",
        cps,
        rec_j,
        {
            "c_y": rec_x[:, 0:1],
            "ct_y": rec_x[:, 1:2],
            "b_hat": rec_x[:, 2:],
            "truncations": rec_tr[:, None],
        },
        truncations=int(count),
        channel_log=log,
        horizon=horizon,
        meta={"iterations": int(n_iter), "warmup_slots": n_taps, "slots_per_iteration": 2},
    )


def identify_alg2(
    u,
    y,
    n_taps: int,
    *,
    gain: float = 10.0,
    offset: float = 0.0,
    bound: float = 1000.0,
    growth: float = 2.0,
    tail: float = PAPER_ONE_SIGMA_TAIL,
    table: numerics.CorrelationTable | None | str = "default",
    checkpoints=None,
) -> RunTrace:
    """Unknown-input estimator on recorded signals; pre-sample handling as in
    :func:`identify_alg1`. Iteration j finishes at slot ``2j + [j]_2``."""
    if n_taps < 1:
        raise ConfigError("n_taps must be >= 1", "n_taps")
    StepSchedule(gain, offset)
    TruncationPolicy(bound, growth)
    u, y = _as_signal(u, y, n_taps)
    horizon = u.size - n_taps
    cps = validate_checkpoints(checkpoints, horizon)
    if table == "default":
        table = numerics.default_table()
    lo, step, values = numerics.kernel_table(table)
    glx, glw = numerics.gl_nodes()
    in_bits = np.full(u.size, -1, np.int8)
    thr_j = np.zeros(u.size, np.int64)
    out_bits = np.full(u.size, -1, np.int8)
    fb_in = np.zeros(u.size, np.uint8)
    fb_out = np.zeros(u.size, np.uint8)
    rec_j = np.zeros(cps.size, np.int64)
    rec_x = np.zeros((cps.size, n_taps + 4))
    rec_tr = np.zeros(cps.size, np.int64)
    status, count, n_iter = _alg2_run(
        u, y, n_taps, float(gain), float(offset), float(bound), float(growth), float(tail),
        lo, step, values, glx, glw, cps,
        in_bits, thr_j, out_bits, fb_in, fb_out, rec_j, rec_x, rec_tr,
    )
    _check_status(status, n_iter)
    log = ChannelLog.from_arrays(1 - n_taps, in_bits, out_bits, fb_in, fb_out)
    return RunTrace(
        "alg2",
        cps,
        rec_j,
        {
            "c_y": rec_x[:, 0:1],
            "ct_y": rec_x[:, 1:2],
            "c_u": rec_x[:, 2:3],
            "ct_u": rec_x[:, 3:4],
            "b_hat": rec_x[:, 4:],
            "truncations": rec_tr[:, None],
        },
        truncations=int(count),
        channel_log=log,
        horizon=horizon,
        meta={"iterations": int(n_iter), "warmup_slots": n_taps, "threshold_stamps": thr_j},
    )


def _require_gaussian(spec: SystemSpec):
    if not (isinstance(spec.input, Gaussian) and isinstance(spec.noise, Gaussian)):
        raise UnsupportedError("computation-free schemes need Gaussian input and noise")
    if spec.input.variance <= 0:
        raise UnsupportedError("input variance must be positive")


def run_alg1(spec: SystemSpec, horizon: int, seed: int = 0, replica: int | None = None, **kwargs) -> RunTrace:
    """Simulate ``horizon`` protocol slots (plus pre-sample slots) and run the
    known-input estimator with the true input mean and variance."""
    _require_gaussian(spec)
    rng = PlantRng.from_seed(seed, replica)
    sig = simulate(spec, horizon + spec.order, rng, first_slot=1 - spec.order)
    trace = identify_alg1(sig.u, sig.y, spec.order, mean=spec.input.mean, variance=spec.input.variance, **kwargs)
    trace.meta["rng"] = rng_header(seed, replica)
    return trace


def run_alg2(spec: SystemSpec, horizon: int, seed: int = 0, replica: int | None = None, **kwargs) -> RunTrace:
    _require_gaussian(spec)
    rng = PlantRng.from_seed(seed, replica)
    sig = simulate(spec, horizon + spec.order, rng, first_slot=1 - spec.order)
    trace = identify_alg2(sig.u, sig.y, spec.order, **kwargs)
    trace.meta["rng"] = rng_header(seed, replica)
    return trace


# -- one iteration at a time ----------------------------------------------


@dataclass
class Alg1State:
    c_y: float = 0.0
    ct_y: float = 1.0
    b_hat: np.ndarray = field(default_factory=lambda: np.zeros(1))
    j: int = 1

    @classmethod
    def initial(cls, n_taps: int) -> Alg1State:
        return cls(0.0, 1.0, np.zeros(n_taps), 1)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(([self.c_y, self.ct_y], self.b_hat))

    @property
    def vy(self) -> float:
        return (self.ct_y - self.c_y) ** 2


def _truncate(cand, policy: TruncationPolicy) -> np.ndarray:
    # same arithmetic as the compiled loops, so replays match them bit for bit
    x = np.empty_like(cand)
    if _project(cand, x, policy.current_bound):
        policy.count += 1
    return x


def _kernel_args(table):
    if table == "default":
        table = numerics.default_table()
    lo, step, values = numerics.kernel_table(table)
    glx, glw = numerics.gl_nodes()
    return lo, step, values, glx, glw


def alg1_update(state: Alg1State, out_odd: int, out_even: int, input_bits, alpha: float,
                policy: TruncationPolicy, *, variance: float, tail: float = PAPER_ONE_SIGMA_TAIL,
                table="default") -> Alg1State:
    """Estimator side of one iteration, from bits only.

    ``input_bits[n]`` is 1(u_{2j-1-n} > mean) for n = 0..N; entry 0 (the
    current odd slot) is not used.
    """
    x = state.vector
    n_taps = x.size - 2
    ubits = np.asarray(input_bits, dtype=float)[1 : n_taps + 1]
    if ubits.size != n_taps:
        raise ValueError(f"need {n_taps + 1} input bits, got {len(input_bits)}")
    cand = np.zeros_like(x)
    _alg1_candidate(x, float(out_odd), float(out_even), ubits, alpha, variance, tail, *_kernel_args(table), cand)
    new = _truncate(cand, policy)
    return Alg1State(float(new[0]), float(new[1]), new[2:].copy(), state.j + 1)


def alg1_step(state: Alg1State, y_odd: float, y_even: float, input_bits, sched: StepSchedule,
              policy: TruncationPolicy, *, variance: float,
              tail: float = PAPER_ONE_SIGMA_TAIL, table="default", log: ChannelLog | None = None) -> Alg1State:
    """Quantize the two outputs of iteration j at the current thresholds and
    apply the estimator update. ``input_bits`` come from the input quantizer
    running at the fixed threshold c_u = input mean."""
    j = state.j
    if sched.j != j:
        raise ValueError(f"schedule at j={sched.j} but state at j={j}")
    out_odd = quantize(y_odd, state.c_y)
    out_even = quantize(y_even, state.ct_y)
    if log is not None:
        log_bit(log, 2 * j - 1, OUTPUT_LINK, out_odd)
        log_bit(log, 2 * j, OUTPUT_LINK, out_even)
        log_bit(log, 2 * j - 1, TO_OUTPUT_LINK)
        log_bit(log, 2 * j, TO_OUTPUT_LINK)
    alpha = next_step(sched)
    return alg1_update(state, out_odd, out_even, input_bits, alpha, policy,
                       variance=variance, tail=tail, table=table)


def replay_alg1(log: ChannelLog, n_taps: int, n_iter: int, *, variance: float, gain: float = 10.0,
                offset: float = 0.0, bound: float = 1000.0, growth: float = 2.0,
                tail: float = PAPER_ONE_SIGMA_TAIL, table="default") -> tuple[Alg1State, int]:
    """Re-run the known-input estimator from logged bits; returns the final
    state and the number of truncations."""
    sched = StepSchedule(gain, offset)
    policy = TruncationPolicy(bound, growth)
    state = Alg1State.initial(n_taps)
    for j in range(1, n_iter + 1):
        s1 = 2 * j - 1
        bits = [log.bit(s1 - n, INPUT_LINK) for n in range(n_taps + 1)]
        state = alg1_update(state, log.bit(s1, OUTPUT_LINK), log.bit(s1 + 1, OUTPUT_LINK), bits,
                            next_step(sched), policy, variance=variance, tail=tail, table=table)
    return state, policy.count


@dataclass
class Alg2State:
    c_y: float = 0.0
    ct_y: float = 1.0
    c_u: float = 0.0
    ct_u: float = 1.0
    b_hat: np.ndarray = field(default_factory=lambda: np.zeros(1))
    j: int = 1
    # j -> c_{u,j}, bounded to the last floor(N/2) + 1 iterations
    cu_history: dict = field(default_factory=dict)
    # slot -> (bit, signed threshold iteration), bounded to the last N + 4 slots
    input_bits: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, n_taps: int, presample_inputs=None) -> Alg2State:
        """Start state; ``presample_inputs`` are u at slots 1-N .. 0, which the
        input quantizer sends at the initial median threshold."""
        st = cls(0.0, 1.0, 0.0, 1.0, np.zeros(n_taps), 1, {1: 0.0}, {})
        if presample_inputs is not None:
            pre = np.asarray(presample_inputs, dtype=float)
            for k, s in enumerate(range(1 - pre.size, 1)):
                st.input_bits[s] = (quantize(pre[k], st.c_u), 1)
        return st

    @property
    def n_taps(self) -> int:
        return self.b_hat.size

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(([self.c_y, self.ct_y, self.c_u, self.ct_u], self.b_hat))


def alg2_update(state: Alg2State, out_odd: int, out_even: int, in_mean: int, in_var: int,
                alpha: float, policy: TruncationPolicy, *, tail: float = PAPER_ONE_SIGMA_TAIL,
                table="default") -> Alg2State:
    """Estimator side of iteration j from bits. ``state.input_bits`` must
    already hold the bits of this iteration's median and one-sigma input
    slots."""
    j = state.j
    n_taps = state.n_taps
    ubits = np.zeros(n_taps)
    cubar = np.zeros(n_taps)
    for k in range(n_taps):
        n = k + 1
        if not gate_g(n, j):
            continue
        tp = 2 * j - 1 - n
        jb = delayed_index(n, j)
        if tp not in state.input_bits or state.input_bits[tp][1] != jb:
            raise ProtocolError(f"input bit for slot {tp} not quantized at c_u,{jb}")
        ubits[k] = state.input_bits[tp][0]
        cubar[k] = state.cu_history[jb]
    x = state.vector
    cand = np.zeros_like(x)
    _alg2_candidate(x, j, float(out_odd), float(out_even), float(in_mean), float(in_var), ubits, cubar,
                    alpha, tail, *_kernel_args(table), cand)
    new = _truncate(cand, policy)
    hist = {k: v for k, v in state.cu_history.items() if k > j + 1 - (n_taps // 2 + 1)}
    hist[j + 1] = float(new[2])
    bits = {s: v for s, v in state.input_bits.items() if s > 2 * j - n_taps - 4}
    return Alg2State(float(new[0]), float(new[1]), float(new[2]), float(new[3]), new[4:].copy(), j + 1, hist, bits)


def alg2_step(state: Alg2State, u_mean_slot: float, u_var_slot: float, y_odd: float, y_even: float,
              sched: StepSchedule, policy: TruncationPolicy, *, tail: float = PAPER_ONE_SIGMA_TAIL,
              table="default", log: ChannelLog | None = None) -> Alg2State:
    """One iteration: quantize u at slots ``2(j-1)+[j]_2`` and ``2j+[j]_2`` and
    y at slots ``2j-1`` and ``2j``, then update."""
    j = state.j
    if sched.j != j:
        raise ValueError(f"schedule at j={sched.j} but state at j={j}")
    sm, sv = input_mean_slot(j), input_var_slot(j)
    in_mean = quantize(u_mean_slot, state.c_u)
    in_var = quantize(u_var_slot, state.ct_u)
    out_odd = quantize(y_odd, state.c_y)
    out_even = quantize(y_even, state.ct_y)
    if sm in state.input_bits or sv in state.input_bits:
        raise ProtocolError(f"second input bit in slot {sm} or {sv}")
    state.input_bits[sm] = (in_mean, j)
    state.input_bits[sv] = (in_var, -j)
    if log is not None:
        log_bit(log, sm, INPUT_LINK, in_mean)
        log_bit(log, sv, INPUT_LINK, in_var)
        log_bit(log, 2 * j - 1, OUTPUT_LINK, out_odd)
        log_bit(log, 2 * j, OUTPUT_LINK, out_even)
        for s in (sm, sv):
            log_bit(log, s, TO_INPUT_LINK)
        for s in (2 * j - 1, 2 * j):
            log_bit(log, s, TO_OUTPUT_LINK)
    alpha = next_step(sched)
    return alg2_update(state, out_odd, out_even, in_mean, in_var, alpha, policy, tail=tail, table=table)


def replay_alg2(log: ChannelLog, n_taps: int, n_iter: int, *, gain: float = 10.0, offset: float = 0.0,
                bound: float = 1000.0, growth: float = 2.0, tail: float = PAPER_ONE_SIGMA_TAIL,
                table="default") -> tuple[Alg2State, int]:
    """Re-run the unknown-input estimator from logged bits. The estimator
    knows the slot plan, hence which threshold produced every input bit."""
    sched = StepSchedule(gain, offset)
    policy = TruncationPolicy(bound, growth)
    state = Alg2State.initial(n_taps)
    for s in range(1 - n_taps, 1):
        state.input_bits[s] = (log.bit(s, INPUT_LINK), 1)
    for j in range(1, n_iter + 1):
        sm, sv = input_mean_slot(j), input_var_slot(j)
        in_mean, in_var = log.bit(sm, INPUT_LINK), log.bit(sv, INPUT_LINK)
        state.input_bits[sm] = (in_mean, j)
        state.input_bits[sv] = (in_var, -j)
        state = alg2_update(state, log.bit(2 * j - 1, OUTPUT_LINK), log.bit(2 * j, OUTPUT_LINK),
                            in_mean, in_var, next_step(sched), policy, tail=tail, table=table)
    return state, policy.count
