"""Sliding-window spectral detection over rank sequences.

Frames of ``window_len`` ranks are mean-removed, Hann-tapered and
transformed; the share of non-DC energy landing in the bin nearest the
watermark frequency is the window score. Token scores average the windows
covering each token, then a median filter and a minimum run length turn them
into labels and segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ranks import RankSequence

_ENERGY_EPS = 1e-20


# "mean" subtracts the plain frame mean. "weighted" subtracts the taper-weighted
# mean so tapered frames carry no DC; plain removal leaves offset * window in
# the frame, which for a Hann window is DC plus bin 1, i.e. the watermark bin.
DETREND_MODES = ("mean", "weighted")


class SequenceTooShort(ValueError):
    pass


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 10
    hop: int = 1
    target_frequency: float = 0.1
    threshold: float = 0.4
    smoothing_len: int = 5
    min_segment_tokens: int = 5
    detrend: str = "mean"

    def __post_init__(self):
        if self.detrend not in DETREND_MODES:
            raise ValueError(f"detrend must be one of {DETREND_MODES}")
        if self.window_len < 4:
            raise ValueError("window_len must be >= 4")
        if not 1 <= self.hop <= self.window_len:
            raise ValueError("hop must be in [1, window_len]")
        if not 0 < self.target_frequency <= 0.5:
            raise ValueError("target_frequency must be in (0, 0.5]")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must be in (0, 1)")
        if self.smoothing_len < 1 or self.smoothing_len % 2 == 0:
            raise ValueError("smoothing_len must be an odd integer >= 1")
        if self.min_segment_tokens < 1:
            raise ValueError("min_segment_tokens must be >= 1")
        if self.target_bin < 1:
            raise ValueError(
                f"target_frequency {self.target_frequency} is below the resolution of a {self.window_len}-point window"
            )

    @property
    def overlap(self) -> int:
        return self.window_len - self.hop

    @property
    def target_bin(self) -> int:
        return _round_half_up(self.target_frequency * self.window_len)

    def replace(self, **changes) -> "StftConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return StftConfig(**d)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-12))


@dataclass
class Spectrogram:
    window_starts: np.ndarray
    magnitudes: np.ndarray  # [num_windows, window_len // 2 + 1]
    bin_frequencies: np.ndarray

    @property
    def num_windows(self) -> int:
        return self.magnitudes.shape[0]

    def to_csv(self) -> str:
        header = ["window_start"] + [f"f_{float(f)!r}" for f in self.bin_frequencies]
        lines = [",".join(header)]
        for s, row in zip(self.window_starts, self.magnitudes):
            lines.append(",".join([str(int(s))] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"


@dataclass
class DetectionResult:
    token_scores: np.ndarray
    smoothed_scores: np.ndarray
    token_labels: np.ndarray
    segments: list[tuple[int, int, float]]
    sequence_score: float
    mean_window_score: float
    window_scores: np.ndarray = field(repr=False)
    degraded: bool = False
    offset: int = 0

    def to_dict(self) -> dict:
        return {
            "token_scores": [float(v) for v in self.token_scores],
            "token_labels": [bool(v) for v in self.token_labels],
            "segments": [{"start": s, "end": e, "mean_score": m} for s, e, m in self.segments],
            "sequence_score": float(self.sequence_score),
            "mean_window_score": float(self.mean_window_score),
            "degraded": self.degraded,
            "offset": self.offset,
        }


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window, ``0.5 * (1 - cos(2*pi*k/n))`` for k in [0, n)."""
    if n < 2:
        raise ValueError("window length must be >= 2")
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def fft_magnitudes(x) -> np.ndarray:
    """|X[b]| for b in 0..len(x)//2."""
    return np.abs(np.fft.rfft(np.asarray(x, dtype=np.float64)))


def _as_array(ranks) -> np.ndarray:
    if isinstance(ranks, RankSequence):
        ranks = ranks.ranks
    return np.asarray(ranks, dtype=np.float64)


def _detrend_taper(frames: np.ndarray, mode: str) -> np.ndarray:
    w = hann_window(frames.shape[-1])
    if mode == "weighted":
        mu = frames @ w / w.sum()
    else:
        mu = frames.mean(axis=-1)
    return (frames - mu[..., None]) * w


def window_frames(ranks, cfg: StftConfig) -> tuple[np.ndarray, np.ndarray]:
    """(starts, frames) with each frame detrended and tapered."""
    x = _as_array(ranks)
    n = cfg.window_len
    if x.shape[0] < n:
        raise SequenceTooShort(f"need at least {n} ranks, got {x.shape[0]}")
    starts = np.arange(0, x.shape[0] - n + 1, cfg.hop)
    frames = np.lib.stride_tricks.sliding_window_view(x, n)[starts]
    return starts, _detrend_taper(frames, cfg.detrend)


def stft(ranks, cfg: StftConfig) -> Spectrogram:
    starts, frames = window_frames(ranks, cfg)
    mags = np.abs(np.fft.rfft(frames, axis=1))
    freqs = np.arange(cfg.window_len // 2 + 1) / cfg.window_len
    return Spectrogram(starts, mags, freqs)


def _band_share(power: np.ndarray, b: int) -> np.ndarray:
    total = power[:, 1:].sum(axis=1)
    out = np.zeros(power.shape[0])
    ok = total > _ENERGY_EPS
    out[ok] = power[ok, b] / total[ok]
    return out


def score_windows(spec: Spectrogram, cfg: StftConfig) -> np.ndarray:
    """Share of non-DC energy in the target bin, per window (0 for silent windows)."""
    if spec.num_windows == 0:
        raise ValueError("spectrogram has no windows")
    return _band_share(spec.magnitudes ** 2, cfg.target_bin)


def _whole_sequence_score(x: np.ndarray, cfg: StftConfig) -> float:
    n = x.shape[0]
    if n < 2:
        return 0.0
    b = _round_half_up(cfg.target_frequency * n)
    if not 1 <= b <= n // 2:
        return 0.0
    frame = _detrend_taper(x, cfg.detrend)
    power = np.abs(np.fft.rfft(frame))[None, :] ** 2
    return float(_band_share(power, b)[0])


def _median_smooth(x: np.ndarray, width: int) -> np.ndarray:
    if width == 1 or x.shape[0] == 0:
        return x.copy()
    half = width // 2
    padded = np.pad(x, half, mode="edge")
    return np.median(np.lib.stride_tricks.sliding_window_view(padded, width), axis=1)


def _runs(labels: np.ndarray) -> list[tuple[int, int, bool]]:
    if labels.shape[0] == 0:
        return []
    edges = np.flatnonzero(np.diff(labels.astype(np.int8))) + 1
    bounds = np.concatenate(([0], edges, [labels.shape[0]]))
    return [(int(a), int(b), bool(labels[a])) for a, b in zip(bounds[:-1], bounds[1:])]


def _drop_short_runs(labels: np.ndarray, min_len: int) -> np.ndarray:
    # Only positive runs are removed; filling short negative gaps would mark
    # tokens whose smoothed score sits below the threshold.
    out = labels.copy()
    for a, b, val in _runs(labels):
        if val and b - a < min_len:
            out[a:b] = False
    return out


def token_scores_from_windows(window_scores: np.ndarray, starts: np.ndarray, length: int, n: int) -> np.ndarray:
    """Average of the window scores covering each token."""
    acc = np.zeros(length + 1)
    cnt = np.zeros(length + 1)
    np.add.at(acc, starts, window_scores)
    np.add.at(acc, np.minimum(starts + n, length), -window_scores)
    np.add.at(cnt, starts, 1.0)
    np.add.at(cnt, np.minimum(starts + n, length), -1.0)
    acc = np.cumsum(acc)[:length]
    cnt = np.cumsum(cnt)[:length]
    scores = np.zeros(length)
    covered = cnt > 0.5
    scores[covered] = acc[covered] / cnt[covered]
    if not covered.all():
        # tail left over when the hop does not divide evenly
        last = np.flatnonzero(covered)[-1]
        scores[last + 1:] = scores[last]
    return scores


def label_tokens(smoothed: np.ndarray, threshold: float, min_segment_tokens: int) -> np.ndarray:
    return _drop_short_runs(np.asarray(smoothed) >= threshold, min_segment_tokens)


def segments_from_labels(labels: np.ndarray, token_scores: np.ndarray) -> list[tuple[int, int, float]]:
    return [(a, b, float(token_scores[a:b].mean())) for a, b, val in _runs(labels) if val]


def detect(ranks, cfg: StftConfig | None = None) -> DetectionResult:
    cfg = cfg or StftConfig()
    x = _as_array(ranks)
    offset = ranks.context_prefix_length if isinstance(ranks, RankSequence) else 0
    L = x.shape[0]
    if L < 1:
        raise ValueError("detect needs at least one rank")
    if L >= cfg.window_len:
        spec = stft(x, cfg)
        ws = score_windows(spec, cfg)
        tok = token_scores_from_windows(ws, spec.window_starts, L, cfg.window_len)
        degraded = False
    else:
        ws = np.array([_whole_sequence_score(x, cfg)])
        tok = np.full(L, ws[0])
        degraded = True
    smooth = _median_smooth(tok, cfg.smoothing_len)
    labels = label_tokens(smooth, cfg.threshold, cfg.min_segment_tokens)
    segments = segments_from_labels(labels, tok)
    return DetectionResult(
        token_scores=tok,
        smoothed_scores=smooth,
        token_labels=labels,
        segments=segments,
        sequence_score=float(ws.max()),
        mean_window_score=float(ws.mean()),
        window_scores=ws,
        degraded=degraded,
        offset=offset,
    )
