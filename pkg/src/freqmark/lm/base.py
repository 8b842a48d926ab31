"""Common types and the backend interface for ranked next-token candidates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

K_MAX = 5
# Logprob assigned to a token outside the top-k: the k-th candidate's logprob minus this.
OOV_PENALTY = math.log(10.0)


@dataclass(frozen=True)
class Token:
    id: int
    text: str

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"token id must be non-negative, got {self.id}")
        if not self.text:
            raise ValueError("token text must be non-empty")


@dataclass(frozen=True)
class RankedCandidates:
    """Top-k candidates for one position, best first."""

    position: int
    candidates: tuple[tuple[Token, float], ...]

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def tokens(self) -> list[Token]:
        return [tok for tok, _ in self.candidates]

    @property
    def logprobs(self) -> list[float]:
        return [lp for _, lp in self.candidates]

    def rank_of(self, token: Token | int) -> int | None:
        """1-based rank of ``token`` (matched by id), or None if absent."""
        tid = token.id if isinstance(token, Token) else token
        for i, (tok, _) in enumerate(self.candidates):
            if tok.id == tid:
                return i + 1
        return None


class TokenScore(NamedTuple):
    logprob: float
    rank: int
    entropy: float


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    m = z.max()
    return z - (m + np.log(np.exp(z - m).sum()))


def top_k_indices(logprobs: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, ties broken by ascending index."""
    k = min(k, logprobs.shape[0])
    if k < logprobs.shape[0]:
        # partition first, then order the shortlist; ties at the cutoff must
        # still resolve by index, so widen the shortlist to every tied value
        cut = np.partition(-logprobs, k - 1)[k - 1]
        shortlist = np.flatnonzero(-logprobs <= cut)
    else:
        shortlist = np.arange(logprobs.shape[0])
    order = np.lexsort((shortlist, -logprobs[shortlist]))
    return shortlist[order[:k]]


def candidate_entropy(logprobs: Sequence[float]) -> float:
    """Entropy (nats) of the candidate distribution renormalized over the list."""
    lp = log_softmax(np.asarray(logprobs, dtype=np.float64))
    p = np.exp(lp)
    return float(-(p * lp).sum())


class LanguageModel:
    """Interface for autoregressive backends.

    Subclasses implement :meth:`next_candidates`, :meth:`token_from_text` and
    :meth:`tokenize`. Backends are immutable once built.
    """

    k_max: int = K_MAX
    oov_penalty: float = OOV_PENALTY
    eos_id: int | None = None

    def next_candidates(self, context: Sequence[Token], k: int) -> RankedCandidates:
        raise NotImplementedError

    def tokenize(self, text: str) -> list[Token]:
        raise NotImplementedError

    def token_from_text(self, text: str) -> Token:
        raise NotImplementedError

    def detokenize(self, tokens: Sequence[Token]) -> str:
        return " ".join(t.text for t in tokens)

    def tokens_from_texts(self, texts: Sequence[str]) -> list[Token]:
        return [self.token_from_text(t) for t in texts]

    def _check_k(self, k: int) -> None:
        if not 1 <= k <= self.k_max:
            raise ValueError(f"k must be in [1, {self.k_max}], got {k}")

    def score_sequence(self, tokens: Sequence[Token]) -> list[TokenScore]:
        """Per-token (logprob, rank, entropy) under this model.

        Tokens missing from the top ``k_max`` get rank ``k_max + 1`` and the
        last candidate's logprob minus ``oov_penalty``.
        """
        if len(tokens) == 0:
            raise ValueError("score_sequence needs at least one token")
        out = []
        for t, tok in enumerate(tokens):
            cands = self.next_candidates(tokens[:t], self.k_max)
            rank = cands.rank_of(tok)
            lps = cands.logprobs
            if rank is None:
                rank = self.k_max + 1
                lp = lps[-1] - self.oov_penalty
            else:
                lp = lps[rank - 1]
            out.append(TokenScore(float(lp), rank, candidate_entropy(lps)))
        return out


class LogitsModel(LanguageModel):
    """Backend driven by a user function mapping a context to raw logits.

    Handy for small deterministic vocabularies in tests and demos.

    >>> m = LogitsModel(["a", "b", "c"], lambda ctx: [2.0, 1.0, 0.0])
    >>> m.next_candidates([], 1).tokens[0].text
    'a'
    """

    def __init__(
        self,
        vocab: Sequence[str],
        logits_fn: Callable[[tuple[int, ...]], Sequence[float]],
        k_max: int = K_MAX,
        eos: str | None = None,
    ):
        if len(set(vocab)) != len(vocab) or not vocab:
            raise ValueError("vocab must be non-empty and unique")
        self.vocab = tuple(vocab)
        self._index = {w: i for i, w in enumerate(self.vocab)}
        self._tokens = tuple(Token(i, w) for i, w in enumerate(self.vocab))
        self.logits_fn = logits_fn
        self.k_max = k_max
        self.eos_id = self._index[eos] if eos is not None else None

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def token_from_text(self, text: str) -> Token:
        try:
            return self._tokens[self._index[text]]
        except KeyError:
            raise KeyError(f"{text!r} is not in the vocabulary") from None

    def tokenize(self, text: str) -> list[Token]:
        return [self.token_from_text(w) for w in text.split()]

    def full_logprobs(self, context: Sequence[Token]) -> np.ndarray:
        z = np.asarray(self.logits_fn(tuple(t.id for t in context)), dtype=np.float64)
        if z.shape != (len(self.vocab),):
            raise ValueError("logits_fn must return one logit per vocabulary entry")
        return log_softmax(z)

    def next_candidates(self, context: Sequence[Token], k: int) -> RankedCandidates:
        self._check_k(k)
        lp = self.full_logprobs(context)
        idx = top_k_indices(lp, k)
        return RankedCandidates(len(context), tuple((self._tokens[i], float(lp[i])) for i in idx))
