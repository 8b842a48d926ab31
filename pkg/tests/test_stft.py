from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqmark.ranks import RankSequence
from freqmark.stft import (
    StftConfig,
    detect,
    fft_magnitudes,
    hann_window,
    label_tokens,
    score_windows,
    stft,
    window_frames,
)

PERFECT = [3, 4, 5, 5, 4, 3, 2, 1, 1, 2]


def naive_dft(x):
    n = len(x)
    return [sum(x[t] * complex(math.cos(2 * math.pi * b * t / n), -math.sin(2 * math.pi * b * t / n))
                for t in range(n)) for b in range(n)]


def naive_window_score(frame, b):
    mags = [abs(v) ** 2 for v in naive_dft(frame)][: len(frame) // 2 + 1]
    tot = sum(mags[1:])
    return 0.0 if tot == 0 else mags[b] / tot


def test_hann_values():
    w = hann_window(10)
    assert w[0] == 0.0
    assert w[5] == pytest.approx(1.0, abs=1e-15)
    assert w[2] == pytest.approx(0.5 * (1 - math.cos(0.4 * math.pi)), abs=1e-15)
    assert w[2] == pytest.approx(0.3454915028125263, abs=1e-15)


def test_fft_matches_naive_dft():
    rng = np.random.default_rng(11)
    for n in range(4, 65):
        x = rng.normal(size=n)
        ref = np.abs(naive_dft(list(x)))[: n // 2 + 1]
        assert np.max(np.abs(fft_magnitudes(x) - ref)) <= 1e-9


def test_parseval_per_window():
    rng = np.random.default_rng(5)
    x = rng.integers(1, 7, 80)
    cfg = StftConfig()
    _, frames = window_frames(x, cfg)
    full = np.abs(np.fft.fft(frames, axis=1)) ** 2
    lhs = (frames ** 2).sum(axis=1)
    rhs = full.sum(axis=1) / cfg.window_len
    assert np.all(np.abs(lhs - rhs) <= 1e-9 * np.maximum(lhs, 1e-300))


def test_perfect_signal_peaks_at_bin_one():
    spec = stft(PERFECT * 4, StftConfig())
    assert spec.num_windows == 31
    assert np.all(np.argmax(spec.magnitudes[:, 1:], axis=1) + 1 == 1)
    assert list(spec.bin_frequencies) == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]


def test_window_count_and_constant():
    assert stft(list(range(1, 13)), StftConfig()).num_windows == 3
    spec = stft([4] * 20, StftConfig())
    assert np.all(spec.magnitudes[:, 1:] == 0)
    assert np.all(score_windows(spec, StftConfig()) == 0)


def test_perfect_window_score_against_naive_oracle():
    cfg = StftConfig()
    got = score_windows(stft(PERFECT, cfg), cfg)[0]
    x = np.array(PERFECT, float)
    frame = list((x - x.mean()) * hann_window(10))
    assert got == pytest.approx(naive_window_score(frame, 1), abs=1e-12)
    assert got > 0.8
    assert got == pytest.approx(0.82161777844, abs=1e-10)


def test_uniform_random_window_mean_score():
    cfg = StftConfig()
    x = np.random.default_rng(2024).integers(1, 6, 10_000 * 10)
    spec = stft(x, cfg.replace(hop=10))
    assert spec.num_windows == 10_000
    assert abs(score_windows(spec, cfg).mean() - 0.2) <= 0.05


def test_weighted_detrend_silences_edge_impulse():
    x = [1] + [6] * 9
    assert score_windows(stft(x, StftConfig()), StftConfig())[0] == pytest.approx(1.0)
    w = StftConfig(detrend="weighted")
    assert score_windows(stft(x, w), w)[0] == 0.0


def test_config_validation():
    for bad in ({"window_len": 3}, {"hop": 11}, {"threshold": 1.0}, {"smoothing_len": 4},
                {"target_frequency": 0.01}, {"detrend": "none"}):
        with pytest.raises(ValueError):
            StftConfig(**bad)


def test_csv_header():
    csv = stft(PERFECT * 2, StftConfig()).to_csv().splitlines()
    assert csv[0] == "window_start,f_0.0,f_0.1,f_0.2,f_0.3,f_0.4,f_0.5"
    assert len(csv) == 12


def test_all_watermarked_single_segment():
    res = detect(RankSequence.from_list(PERFECT * 20))
    assert res.segments and len(res.segments) == 1
    assert res.segments[0][:2] == (0, 200)
    assert not res.degraded


def test_boundary_after_greedy_prefix(ref_model, signal10):
    from freqmark.embed import EmbedConfig, embed, generate_unwatermarked

    prompt = ref_model.tokenize("the road")
    greedy = generate_unwatermarked(ref_model, prompt, 100)
    out = embed(ref_model, greedy, EmbedConfig(signal10, 100))
    from freqmark.ranks import extract

    res = detect(extract(ref_model, out.tokens, len(prompt)))
    (start, end, _), = res.segments
    assert abs(start - 100) <= 5
    assert end == 200


def test_short_sequence_degrades():
    res = detect([1, 3, 5, 3, 1])
    assert res.degraded
    assert len(res.token_scores) == 5
    with pytest.raises(ValueError):
        detect([])


def test_phase_invariance():
    base = detect(PERFECT * 10).sequence_score
    for p in range(1, 10):
        rot = PERFECT[p:] + PERFECT[:p]
        assert detect(rot * 10).sequence_score == pytest.approx(base, abs=1e-12)


def test_monotone_degradation():
    rng = np.random.default_rng(9)
    clean = np.array(PERFECT * 20)
    means = []
    for frac in (0.0, 0.1, 0.2, 0.3, 0.5, 0.8):
        vals = []
        for _ in range(100):
            x = clean.copy()
            idx = rng.choice(x.size, int(round(frac * x.size)), replace=False)
            x[idx] = rng.integers(1, 7, idx.size)
            vals.append(detect(x).mean_window_score)
        means.append(np.mean(vals))
    assert all(a >= b - 1e-3 for a, b in zip(means, means[1:]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=120), st.floats(0.05, 0.95))
def test_label_score_consistency(ranks, tau):
    cfg = StftConfig(threshold=tau)
    res = detect(ranks, cfg)
    assert np.all(res.smoothed_scores[res.token_labels] >= tau)
    assert np.all((res.token_scores >= 0) & (res.token_scores <= 1))
    prev_end = -1
    for a, b, _ in res.segments:
        assert b - a >= cfg.min_segment_tokens and a >= prev_end
        prev_end = b
    assert np.array_equal(label_tokens(res.smoothed_scores, tau, 5), res.token_labels)
