import csv
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, strategies as st

from feedbacklab import channel
from feedbacklab.errors import ArityError, MessageRangeError, ParameterError
from feedbacklab.mac_codes import build_ozarow_code, ozarow_params
from feedbacklab.su_codes import (ConstantCode, build_sk_code, truncate_to_peak_power)


def test_streams_are_deterministic_and_distinct():
    a = channel.stream_normals(5, channel.STREAM_NOISE, np.arange(10), 8)
    b = channel.stream_normals(5, channel.STREAM_NOISE, np.arange(10), 8)
    c = channel.stream_normals(6, channel.STREAM_NOISE, np.arange(10), 8)
    d = channel.stream_normals(5, channel.STREAM_AUX, np.arange(10), 8)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


@given(st.integers(1, 40), st.integers(0, 40))
def test_noise_prefix_stable(k, extra):
    t = np.arange(3, 9)
    short = channel.stream_normals(1, channel.STREAM_NOISE, t, k)
    longer = channel.stream_normals(1, channel.STREAM_NOISE, t, k + extra)
    assert np.array_equal(short, longer[:, :k])


def test_noise_independent_of_batch_split():
    whole = channel.stream_normals(3, channel.STREAM_NOISE, np.arange(100), 5)
    parts = np.vstack([channel.stream_normals(3, channel.STREAM_NOISE, np.arange(lo, lo + 25), 5)
                       for lo in range(0, 100, 25)])
    assert np.array_equal(whole, parts)


def test_normals_look_standard():
    z = channel.stream_normals(0, channel.STREAM_NOISE, np.arange(50_000), 4).ravel()
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.01
    assert abs(np.mean(z > 1.96) - 0.025) < 0.002


def test_uniform_messages_small_and_large():
    w = channel._uniform_messages(1, np.arange(40_000), 0, 4)
    counts = np.bincount(w, minlength=5)[1:]
    assert counts.min() > 9600 and counts.max() < 10400
    big = 3 ** 70
    wb = channel._uniform_messages(1, np.arange(200), 1, big)
    assert all(1 <= int(v) <= big for v in wb)
    assert len(set(int(v) for v in wb)) == 200


def test_channel_spec_validation():
    with pytest.raises(ParameterError):
        channel.ChannelSpec(0)
    with pytest.raises(ArityError):
        channel.ChannelSpec(3, users=3)
    with pytest.raises(ParameterError):
        channel.ChannelSpec(3, noise_variance=2.0)


def test_channel_law_holds_on_transcripts():
    code = build_sk_code(12, 8, 1.0)
    b = channel.simulate_batch(code, 9, np.arange(50))
    for i in range(50):
        assert channel.channel_law_residual(b.transcript(i)) == 0.0
    mac = build_ozarow_code(ozarow_params(40, 1.0, 1.0, 0.3), 5, 7)
    bm = channel.simulate_batch(mac, 9, np.arange(20))
    assert all(channel.channel_law_residual(bm.transcript(i)) == 0.0 for i in range(20))


@pytest.mark.parametrize("make", [
    lambda: build_sk_code(10, 16, 1.0),
    lambda: truncate_to_peak_power(build_sk_code(10, 16, 1.0), 4.0),
    lambda: build_ozarow_code(ozarow_params(30, 1.0, 2.0, 0.3), 9, 5),
])
def test_inputs_are_causal(make):
    code = make()
    rng = np.random.default_rng(0)
    trials = np.arange(16)
    base = channel.stream_normals(2, channel.STREAM_NOISE, trials, code.n)
    ref = channel.simulate_batch(code, 2, trials, noise=base)
    for k in rng.integers(0, code.n, 8):
        noise = base.copy()
        noise[:, k:] += rng.normal(size=noise[:, k:].shape)
        probe = channel.simulate_batch(code, 2, trials, noise=noise)
        for j in range(len(code.message_counts)):
            assert np.array_equal(probe.messages[j], ref.messages[j])
        assert np.array_equal(probe.x[:, :k + 1], ref.x[:, :k + 1])


def test_fixed_messages_and_range_checks():
    code = build_sk_code(6, 4, 1.0)
    b = channel.simulate_batch(code, 0, np.arange(5), messages=(3,))
    assert np.all(b.messages[0] == 3)
    with pytest.raises(MessageRangeError):
        channel.simulate_batch(code, 0, np.arange(5), messages=(5,))
    with pytest.raises(ArityError):
        channel.simulate_batch(code, 0, np.arange(5), messages=(1, 2))


def test_run_trial_reproducible():
    code = build_sk_code(8, 8, 1.0)
    a = channel.run_trial(code, (5,), 11, 3)
    b = channel.run_trial(code, (5,), 11, 3)
    assert np.array_equal(a.y, b.y) and a.decoded == b.decoded
    batch = channel.simulate_batch(code, 11, [3], messages=(5,))
    assert np.array_equal(batch.transcript(0).x, a.x)


def test_estimates_do_not_depend_on_threads_or_chunks():
    code = build_sk_code(4, 8, 1.0)
    serial = channel.estimate_error(code, 20_000, 4)
    with ThreadPoolExecutor(4) as pool:
        threaded = channel.estimate_error(code, 20_000, 4, executor=pool)
    assert serial == threaded
    red = lambda b: {"e": int(b.errors.sum()), "s": b.energy.sum(axis=0)}
    a = channel.collect(code, 10_000, 4, red)
    b = channel.collect(code, 10_000, 4, red, chunk=1000)
    assert a["e"] == b["e"]
    np.testing.assert_allclose(a["s"], b["s"], rtol=1e-12)


def test_collect_rejects_zero_trials():
    with pytest.raises(ParameterError):
        channel.collect(build_sk_code(3, 2, 1.0), 0, 1, lambda b: {})


def test_constant_code_with_one_message_never_errs():
    code = ConstantCode(5, [0.5], (1,))
    est = channel.estimate_error(code, 1000, 0)
    assert est.p_hat == 0 and est.successes == 0
    pw = channel.estimate_power(code, 1000, 0)[0]
    assert pw.mean == pytest.approx(0.25) and pw.se == pytest.approx(0, abs=1e-12)


def test_mc_estimate_interval():
    e = channel.McEstimate.from_counts(30, 1000, 0)
    lo, hi = e.ci
    assert lo < 0.03 < hi
    assert e.se == pytest.approx(np.sqrt(0.03 * 0.97 / 1000))
    z = channel.McEstimate.from_counts(0, 1000, 0)
    assert z.ci[0] == pytest.approx(0, abs=1e-12) and z.ci[1] > 0


def test_estimate_error_sampler_validation():
    code = build_sk_code(3, 2, 1.0)
    with pytest.raises(ParameterError):
        channel.estimate_error(code, 10, 0, message_sampler="weird")
    with pytest.raises(ParameterError):
        channel.estimate_error(code, 10, 0, message_sampler="fixed")
    fixed = channel.estimate_error(code, 2000, 0, message_sampler="fixed", messages=(1,))
    assert 0 <= fixed.p_hat < 0.5


def test_relabeled_code_keeps_error_rate():
    code = build_sk_code(3, 16, 1.0)
    plain = channel.estimate_error(code, 40_000, 1)
    relab = channel.estimate_error(channel.RelabeledCode(code, 99), 40_000, 1)
    assert abs(plain.p_hat - relab.p_hat) < 4 * np.hypot(plain.se, relab.se)


def test_per_symbol_stats_requires_two_users():
    with pytest.raises(ArityError):
        channel.per_symbol_stats(build_sk_code(3, 2, 1.0), 100, 0)


def test_per_symbol_stats_on_constant_inputs():
    x = [[1.0, -2.0], [0.5, 0.5], [0.0, 1.0]]
    code = ConstantCode(3, x, (1, 1))
    with pytest.warns(UserWarning):
        stats = channel.per_symbol_stats(code, 200, 0)
    np.testing.assert_allclose(stats.p1, [1, 0.25, 0])
    np.testing.assert_allclose(stats.rho[:2], [-1, 1])
    assert stats.degenerate.tolist() == [False, False, True]


def test_transcript_csv(tmp_path):
    code = build_sk_code(4, 4, 1.0)
    b = channel.simulate_batch(code, 0, np.arange(3))
    path = tmp_path / "t.csv"
    assert channel.dump_transcripts_csv(path, [b]) == 12
    rows = list(csv.DictReader(open(path)))
    assert rows[0]["k"] == "1" and rows[0]["x2"] == ""
    assert float(rows[5]["y"]) == pytest.approx(float(rows[5]["x1"]) + float(rows[5]["z"]))
