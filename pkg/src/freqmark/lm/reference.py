"""Deterministic smoothed n-gram model used as the offline reference backend.

Each context order ``o`` (0 .. order-1 preceding words) contributes counts
smoothed toward the next-lower order::

    p_o(w | h) = (c(h, w) + lam * V * p_{o-1}(w | h')) / (c(h) + lam * V)

with ``p_{-1}`` uniform over the vocabulary, so order 0 is plain add-lambda
smoothing and unseen contexts fall back to the longest seen suffix.
Training text is split into lines; each line starts from a begin-of-sequence
state.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .base import K_MAX, LanguageModel, RankedCandidates, Token, log_softmax, top_k_indices

UNK = "<unk>"
_BOS = -1
TOKENIZER_VERSION = 1


def bundled_corpus_path() -> Path:
    return Path(str(resources.files("freqmark") / "data" / "reference_corpus.txt"))


def bundled_human_path() -> Path:
    return Path(str(resources.files("freqmark") / "data" / "demo_human.txt"))


def split_words(text: str) -> list[str]:
    """Whitespace split, lowercased. Punctuation stays attached."""
    return [w.lower() for w in text.split()]


@dataclass(frozen=True)
class ReferenceLmConfig:
    order: int = 3
    corpus_path: str | None = None
    seed: int = 0
    smoothing: float = 0.01

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not self.smoothing > 0:
            raise ValueError("smoothing must be > 0")


class ReferenceModel(LanguageModel):
    """Smoothed n-gram backend over a plain-text corpus.

    The vocabulary is every distinct lowercased word in the corpus plus
    ``<unk>``; words outside it map to ``<unk>`` but keep their surface text.
    ``seed`` fixes the id assignment (and therefore tie-break order).
    """

    def __init__(self, config: ReferenceLmConfig | None = None, text: str | None = None, k_max: int = K_MAX):
        self.config = config or ReferenceLmConfig()
        self.k_max = k_max
        if text is None:
            path = self.config.corpus_path or bundled_corpus_path()
            text = Path(path).read_text(encoding="utf-8")
        lines = [split_words(line) for line in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines:
            raise ValueError("reference corpus is empty")

        words = sorted({w for ln in lines for w in ln} - {UNK})
        perm = np.random.default_rng(self.config.seed).permutation(len(words))
        self.vocab = (UNK,) + tuple(words[i] for i in perm)
        self._index = {w: i for i, w in enumerate(self.vocab)}
        self._tokens = tuple(Token(i, w) for i, w in enumerate(self.vocab))
        self.unk_id = 0

        n = self.config.order
        tables: list[dict[tuple[int, ...], Counter]] = [defaultdict(Counter) for _ in range(n)]
        for ln in lines:
            seq = [_BOS] * (n - 1) + [self._index[w] for w in ln]
            for i in range(n - 1, len(seq)):
                for o in range(n):
                    tables[o][tuple(seq[i - o : i])][seq[i]] += 1
        # context -> (ids, counts, total)
        self._tables: list[dict[tuple[int, ...], tuple[np.ndarray, np.ndarray, float]]] = []
        for tab in tables:
            frozen = {}
            for h, cnt in tab.items():
                ids = np.fromiter(cnt.keys(), dtype=np.int64, count=len(cnt))
                vals = np.fromiter(cnt.values(), dtype=np.float64, count=len(cnt))
                frozen[h] = (ids, vals, float(vals.sum()))
            self._tables.append(frozen)
        self._candidates = lru_cache(maxsize=1 << 17)(self._candidates_uncached)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def token_from_text(self, text: str) -> Token:
        word = text.lower()
        i = self._index.get(word)
        if i is None:
            return Token(self.unk_id, word)
        return self._tokens[i]

    def tokenize(self, text: str) -> list[Token]:
        return [self.token_from_text(w) for w in text.split()]

    def _history(self, context: Sequence[Token]) -> tuple[int, ...]:
        n = self.config.order
        if n == 1:
            return ()
        ids = [t.id for t in context[-(n - 1):]]
        return tuple([_BOS] * (n - 1 - len(ids)) + ids)

    def full_logprobs(self, context: Sequence[Token]) -> np.ndarray:
        return self._logprobs(self._history(context))

    def _logprobs(self, hist: tuple[int, ...]) -> np.ndarray:
        V = len(self.vocab)
        beta = self.config.smoothing * V
        p = np.full(V, 1.0 / V)
        for o, table in enumerate(self._tables):
            h = hist[len(hist) - o:] if o else ()
            entry = table.get(h)
            if entry is None:
                break
            ids, vals, total = entry
            q = beta * p
            q[ids] += vals
            p = q / (total + beta)
        # p is already normalized; the softmax over log-scores keeps the
        # logits -> probabilities step explicit and guards rounding drift
        return log_softmax(np.log(p))

    def _candidates_uncached(self, hist: tuple[int, ...], k: int) -> tuple[tuple[Token, float], ...]:
        lp = self._logprobs(hist)
        idx = top_k_indices(lp, k)
        return tuple((self._tokens[i], float(lp[i])) for i in idx)

    def next_candidates(self, context: Sequence[Token], k: int) -> RankedCandidates:
        self._check_k(k)
        return RankedCandidates(len(context), self._candidates(self._history(context), k))
