"""Recover the per-token rank waveform from text by re-scoring it."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .lm.base import LanguageModel, Token


@dataclass(frozen=True)
class RankSequence:
    ranks: tuple[int, ...]
    token_spans: tuple[int, ...]
    context_prefix_length: int = 0
    k_max: int = 5

    def __len__(self) -> int:
        return len(self.ranks)

    @property
    def sentinel(self) -> int:
        return self.k_max + 1

    @classmethod
    def from_list(cls, ranks: Sequence[int], k_max: int = 5, context_prefix_length: int = 0) -> "RankSequence":
        ranks = tuple(int(r) for r in ranks)
        bad = [r for r in ranks if not 1 <= r <= k_max + 1]
        if bad:
            raise ValueError(f"ranks must lie in [1, {k_max + 1}], got {bad[:5]}")
        spans = tuple(range(context_prefix_length, context_prefix_length + len(ranks)))
        return cls(ranks, spans, context_prefix_length, k_max)


def extract(
    backend: LanguageModel,
    tokens: Sequence[Token],
    context_prefix_length: int = 0,
    workers: int = 1,
) -> RankSequence:
    """Rank of every token from ``context_prefix_length`` on.

    Each position conditions on the observed text before it, so positions are
    independent and may be scored in parallel. Any backend failure aborts the
    whole sequence.
    """
    if not 0 <= context_prefix_length < len(tokens):
        raise ValueError("context_prefix_length must be in [0, len(tokens))")
    k = backend.k_max
    positions = range(context_prefix_length, len(tokens))

    def rank_at(t: int) -> int:
        r = backend.next_candidates(tokens[:t], k).rank_of(tokens[t])
        return k + 1 if r is None else r

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ranks = list(pool.map(rank_at, positions))
    else:
        ranks = [rank_at(t) for t in positions]
    return RankSequence(tuple(ranks), tuple(positions), context_prefix_length, k)
