"""Periodic guiding signals that fix the candidate rank at each step."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidSignal
from .lm.base import K_MAX


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class GuidingSignal:
    """One period of integer ranks, ``amplitudes[t mod period]`` at step t."""

    amplitudes: tuple[int, ...]
    k_max: int = K_MAX

    def __post_init__(self):
        amps = tuple(int(a) for a in self.amplitudes)
        object.__setattr__(self, "amplitudes", amps)
        if len(amps) < 2:
            raise InvalidSignal("period must be at least 2")
        bad = [a for a in amps if not 1 <= a <= self.k_max]
        if bad:
            raise InvalidSignal(f"amplitudes must lie in [1, {self.k_max}], got {bad}")
        if len(set(amps)) < 2:
            raise InvalidSignal("signal is constant and carries no frequency content")

    @property
    def period(self) -> int:
        return len(self.amplitudes)

    @property
    def base_frequency(self) -> float:
        return 1.0 / self.period

    def amplitude_at(self, t: int) -> int:
        return self.amplitudes[t % self.period]

    def rotated(self, offset: int) -> "GuidingSignal":
        n = self.period
        return GuidingSignal(tuple(self.amplitudes[(i + offset) % n] for i in range(n)), self.k_max)

    def to_dict(self) -> dict:
        return {"period": self.period, "amplitudes": list(self.amplitudes)}

    @classmethod
    def from_dict(cls, d: dict, k_max: int = K_MAX) -> "GuidingSignal":
        if "amplitudes" in d:
            sig = cls(tuple(d["amplitudes"]), k_max)
            if "period" in d and int(d["period"]) != sig.period:
                raise InvalidSignal(f"period {d['period']} does not match {sig.period} amplitudes")
            return sig
        shape = d.get("shape", "sine")
        if shape != "sine":
            raise InvalidSignal(f"unknown signal shape {shape!r}")
        try:
            return sinusoidal_signal(int(d["period"]), int(d["amp_min"]), int(d["amp_max"]), k_max)
        except KeyError as exc:
            raise InvalidSignal(f"signal config is missing {exc.args[0]!r}") from None

    @classmethod
    def load(cls, path: str | Path, k_max: int = K_MAX) -> "GuidingSignal":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), k_max)


def sinusoidal_signal(period_k: int, amp_min: int = 1, amp_max: int = 5, k_max: int = K_MAX) -> GuidingSignal:
    """Quantized sine with one cycle per ``period_k`` steps.

    ``round(c + r*sin(2*pi*t/period_k))`` with centre ``c`` and half-range
    ``r`` taken from the amplitude bounds, rounding half away from zero.

    >>> sinusoidal_signal(10, 1, 5).amplitudes
    (3, 4, 5, 5, 4, 3, 2, 1, 1, 2)
    """
    if period_k < 2:
        raise InvalidSignal("period must be at least 2")
    if not (1 <= amp_min < amp_max <= k_max):
        raise InvalidSignal(f"need 1 <= amp_min < amp_max <= {k_max}, got [{amp_min}, {amp_max}]")
    c = (amp_min + amp_max) / 2
    r = (amp_max - amp_min) / 2
    amps = []
    for t in range(period_k):
        # snap trig rounding noise so exact halves stay exact halves
        x = round(c + r * math.sin(2 * math.pi * t / period_k), 9)
        a = _round_half_away(x)
        amps.append(min(max(a, amp_min), amp_max))
    return GuidingSignal(tuple(amps), k_max)


def amplitude_at(signal: GuidingSignal, t: int) -> int:
    return signal.amplitude_at(t)


DEFAULT_SIGNAL = sinusoidal_signal(10, 1, 5)
