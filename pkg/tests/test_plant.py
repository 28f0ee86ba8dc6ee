from __future__ import annotations

import math

import numpy as np
import pytest

from binfir.exceptions import ConfigError, DomainError, OutputError, ProtocolError, UnsupportedError
from binfir.plant import (
    INPUT_LINK,
    OUTPUT_LINK,
    PAPER_SYSTEM,
    TO_INPUT_LINK,
    ChannelLog,
    Empirical,
    Gaussian,
    PlantRng,
    PlantState,
    SystemSpec,
    Uniform,
    distribution_from_dict,
    log_bit,
    quantize,
    rng_header,
    simulate,
    stationary_moments,
    step_plant,
    write_signal_dump,
)

S3 = math.sqrt(3.0)


def test_paper_system_moments():
    ey, vy, eu, vu = stationary_moments(PAPER_SYSTEM)
    assert ey == pytest.approx(0.6)
    assert vy == pytest.approx(1.44)
    assert (eu, vu) == (1.0, 1.0)
    # implied output thresholds: median 0.6, one-sigma point 1.8
    assert ey + math.sqrt(vy) == pytest.approx(1.8)


def test_uniform_system_moments():
    spec = SystemSpec((0.2, -0.2, 0.6), Uniform(0, 2 * S3), Uniform(-S3, S3))
    ey, vy, eu, vu = stationary_moments(spec)
    assert eu == pytest.approx(S3)
    assert vu == pytest.approx(1.0)
    assert vy == pytest.approx(1.44)
    assert ey == pytest.approx(0.6 * S3)


def test_simulated_moments_match_closed_form():
    sig = simulate(PAPER_SYSTEM, 400_000, PlantRng.from_seed(1))
    ey, vy, eu, vu = stationary_moments(PAPER_SYSTEM)
    assert sig.y.mean() == pytest.approx(ey, abs=0.01)
    assert sig.y.var() == pytest.approx(vy, rel=0.02)
    assert sig.u.mean() == pytest.approx(eu, abs=0.01)


def test_simulate_matches_stepwise_plant():
    rng_a, rng_b = PlantRng.from_seed(7), PlantRng.from_seed(7)
    sig = simulate(PAPER_SYSTEM, 50, rng_a)
    state = PlantState.initial(PAPER_SYSTEM, rng_b)
    for t in range(50):
        u, y = step_plant(state, PAPER_SYSTEM, rng_b)
        assert u == pytest.approx(sig.u[t], abs=1e-12)
        assert y == pytest.approx(sig.y[t], abs=1e-12)


def test_simulate_matches_stepwise_plant_empirical():
    spec = SystemSpec((0.5, 0.1), Empirical([0.0, 1.0, 3.0]), Empirical([-1.0, 1.0]))
    rng_a, rng_b = PlantRng.from_seed(3), PlantRng.from_seed(3)
    sig = simulate(spec, 30, rng_a)
    state = PlantState.initial(spec, rng_b)
    for t in range(30):
        u, y = step_plant(state, spec, rng_b)
        assert (u, y) == pytest.approx((sig.u[t], sig.y[t]), abs=1e-12)


def test_fir_relation_holds_exactly_without_noise():
    spec = SystemSpec((0.2, -0.2, 0.6), Gaussian(1, 1), Gaussian(0, 0))
    sig = simulate(spec, 200, PlantRng.from_seed(0), first_slot=-2)
    b = np.array(spec.coefficients)
    for k in range(3, 200):
        assert sig.y[k] == pytest.approx(b @ sig.u[k - 3 : k][::-1], abs=1e-12)
    assert sig.first_slot == -2 and sig.last_slot == 197


def test_rng_determinism_and_replicas():
    a = simulate(PAPER_SYSTEM, 100, PlantRng.from_seed(5, 0))
    b = simulate(PAPER_SYSTEM, 100, PlantRng.from_seed(5, 0))
    c = simulate(PAPER_SYSTEM, 100, PlantRng.from_seed(5, 1))
    np.testing.assert_array_equal(a.u, b.u)
    assert not np.array_equal(a.u, c.u)
    assert abs(np.corrcoef(a.u, c.u)[0, 1]) < 0.35
    hdr = rng_header(5, 2)
    assert hdr["bit_generator"] == "PCG64" and hdr["spawn_key"] == [2]


def test_input_and_noise_streams_are_separate():
    # changing the noise law leaves the input draws untouched
    spec2 = SystemSpec(PAPER_SYSTEM.coefficients, PAPER_SYSTEM.input, Gaussian(0, 4))
    a = simulate(PAPER_SYSTEM, 100, PlantRng.from_seed(9))
    b = simulate(spec2, 100, PlantRng.from_seed(9))
    np.testing.assert_array_equal(a.u, b.u)


def test_distributions():
    assert Uniform(0, 2).mean_above(1.0) == 1.5
    assert Uniform(0, 2).mean_above(-1.0) == 1.0
    assert Gaussian(1, 1).mean_above(1.0) == pytest.approx(1 + math.sqrt(2 / math.pi))
    e = Empirical([1.0, 2.0, 3.0, 4.0])
    assert e.expectation() == 2.5 and e.mean_above(2.0) == 3.5
    with pytest.raises(UnsupportedError):
        e.moments()
    with pytest.raises(DomainError):
        Uniform(0, 1).mean_above(2.0)
    with pytest.raises(DomainError):
        Gaussian(0, 0).mean_above(0.0)
    with pytest.raises(ConfigError):
        Uniform(1, 1)
    with pytest.raises(ConfigError):
        Empirical([])


def test_distribution_from_dict_paths():
    assert distribution_from_dict({"kind": "uniform", "low": 0, "high": 1}) == Uniform(0, 1)
    with pytest.raises(ConfigError) as err:
        distribution_from_dict({"kind": "gaussian", "variance": -1}, "system.input")
    assert err.value.path == "system.input.variance"
    with pytest.raises(ConfigError) as err:
        distribution_from_dict({"kind": "cauchy"}, "system.noise")
    assert err.value.path == "system.noise.kind"


def test_noise_must_be_zero_mean():
    with pytest.raises(ConfigError) as err:
        SystemSpec((1.0,), Gaussian(), Gaussian(0.5, 1))
    assert err.value.path == "system.noise.mean"
    with pytest.raises(ConfigError):
        SystemSpec((1.0,), Gaussian(), Uniform(-1, 2))
    with pytest.raises(ConfigError):
        SystemSpec((1.0,), Gaussian(), Empirical([0.0, 1.0]))
    SystemSpec((1.0,), Gaussian(), Empirical([-1.0, 1.0]))


def test_quantize():
    assert quantize(1.0, 1.0) == 0
    assert quantize(1.0 + 1e-12, 1.0) == 1


def test_channel_log_rejects_second_bit():
    log = ChannelLog(1, 4)
    log_bit(log, 1, INPUT_LINK, 1)
    with pytest.raises(ProtocolError):
        log_bit(log, 1, INPUT_LINK, 0)
    with pytest.raises(ProtocolError):
        log_bit(log, 2, OUTPUT_LINK, 2)
    with pytest.raises(ProtocolError):
        log_bit(log, 0, OUTPUT_LINK, 1)
    with pytest.raises(ProtocolError):
        log.bit(2, INPUT_LINK)


def test_channel_log_counts_and_grows():
    log = ChannelLog(-1, 0)
    for t in range(-1, 10):
        log_bit(log, t, INPUT_LINK, t % 2)
        log_bit(log, t, TO_INPUT_LINK)
    assert log.bits_per_link(1, 9)[INPUT_LINK] == 9
    assert log.bits_per_link()[INPUT_LINK] == 11
    assert log.bits_per_link(1, 9)[OUTPUT_LINK] == 0
    assert log.bit(3, INPUT_LINK) == 1
    assert len(list(log.records())) == 22


def test_dumps(tmp_path):
    sig = simulate(PAPER_SYSTEM, 3, PlantRng.from_seed(0))
    log = ChannelLog(1, 3)
    log_bit(log, 2, OUTPUT_LINK, 1)
    write_signal_dump(tmp_path / "s.csv", sig, log)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t,u_t,y_t,input_bit,output_bit"
    assert lines[2].endswith(",,1")
    log.write_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[1] == "2,output->estimator,1"
    with pytest.raises(OutputError):
        log.write_csv(tmp_path / "missing" / "c.csv")


def test_streams_uncorrelated_and_moments_within_three_standard_errors():
    n = 1_000_000
    sig = simulate(PAPER_SYSTEM, n, PlantRng.from_seed(2))
    rng = PlantRng.from_seed(2)
    u = PAPER_SYSTEM.input.sample(rng.input, n)
    w = PAPER_SYSTEM.noise.sample(rng.noise, n)
    assert abs(np.corrcoef(u, w)[0, 1]) < 0.01
    ey, vy, eu, vu = stationary_moments(PAPER_SYSTEM)
    assert abs(sig.u.mean() - eu) < 3 * math.sqrt(vu / n)
    # y is 3-dependent; its mean has variance sum of autocovariances / n
    lagcov = vy + 2 * (0.2 * -0.2 + -0.2 * 0.6 + 0.2 * 0.6)
    assert abs(sig.y.mean() - ey) < 3 * math.sqrt(lagcov / n)
