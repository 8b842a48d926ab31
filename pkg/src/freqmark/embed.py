"""Rank-forcing generation: pick the candidate the guiding signal points at."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import InsufficientCandidates
from .lm.base import K_MAX, LanguageModel, Token
from .signal import GuidingSignal


@dataclass(frozen=True)
class EmbedConfig:
    signal: GuidingSignal
    max_tokens: int
    k: int = K_MAX
    phase_offset: int = 0

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.k < max(self.signal.amplitudes):
            raise ValueError(f"k={self.k} is below the signal's largest rank {max(self.signal.amplitudes)}")
        if self.phase_offset < 0:
            raise ValueError("phase_offset must be non-negative")


@dataclass
class WatermarkedOutput:
    tokens: list[Token]
    ranks_used: list[int]
    prompt_length: int
    phase_offset: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def generated(self) -> list[Token]:
        return self.tokens[self.prompt_length:]


def embed(backend: LanguageModel, prompt: Sequence[Token], cfg: EmbedConfig) -> WatermarkedOutput:
    tokens = list(prompt)
    ranks: list[int] = []
    k = min(cfg.k, backend.k_max)
    for i in range(cfg.max_tokens):
        rank = cfg.signal.amplitude_at(cfg.phase_offset + i)
        cands = backend.next_candidates(tokens, k)
        if len(cands) < rank:
            raise InsufficientCandidates(i, rank, len(cands))
        tok = cands.tokens[rank - 1]
        if backend.eos_id is not None and tok.id == backend.eos_id:
            break
        tokens.append(tok)
        ranks.append(rank)
    return WatermarkedOutput(
        tokens, ranks, len(prompt), cfg.phase_offset, {"signal": cfg.signal.to_dict()}
    )


def generate_unwatermarked(backend: LanguageModel, prompt: Sequence[Token], max_tokens: int) -> list[Token]:
    """Greedy continuation; returns prompt plus generated tokens."""
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    tokens = list(prompt)
    for _ in range(max_tokens):
        tok = backend.next_candidates(tokens, 1).tokens[0]
        if backend.eos_id is not None and tok.id == backend.eos_id:
            break
        tokens.append(tok)
    return tokens
