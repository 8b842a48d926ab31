"""Attacks on watermarked text that keep token-level ground truth labels.

Labels mark watermarked model output (True) versus everything else.
"""

from __future__ import annotations

import logging
import math
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embed import WatermarkedOutput
from .errors import HookUnavailable, InputsTooShort, TransformerFailed
from .lm.base import LanguageModel, Token

log = logging.getLogger(__name__)

ATTACK_KINDS = ("copy_paste", "substitution", "paraphrase_hook", "translation_hook")
SENTENCE_END = (".", "!", "?")
# Hook units longer than this are cut into chunks; forced-rank text seldom
# emits terminal punctuation, so a whole sample can otherwise be one sentence.
MAX_HOOK_UNIT = 25


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    rate: float = 0.0
    seed: int = 0
    segment_len_range: tuple[int, int] = (20, 100)

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}; expected one of {ATTACK_KINDS}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("rate must be in [0, 1]")
        lo, hi = self.segment_len_range
        if not 1 <= lo <= hi:
            raise ValueError("segment_len_range must satisfy 1 <= min <= max")

    def provenance(self) -> dict:
        return {"kind": self.kind, "rate": float(self.rate), "seed": int(self.seed)}


@dataclass
class MixedSample:
    tokens: list[Token]
    labels: list[bool]
    provenance: dict = field(default_factory=lambda: {"kind": "none", "rate": 0.0, "seed": 0})

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ValueError("tokens and labels must have equal length")

    @property
    def n_true(self) -> int:
        return sum(self.labels)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _compose(total: int, parts: int, lo: int, hi: int, rng: np.random.Generator) -> list[int]:
    """Random split of ``total`` into ``parts`` sizes, each within [lo, hi]."""
    sizes = np.full(parts, lo)
    room = np.full(parts, hi - lo)
    rest = total - parts * lo
    while rest > 0:
        open_ = np.flatnonzero(room > 0)
        # hand out the remainder in random chunks so sizes spread over the range
        i = open_[rng.integers(open_.shape[0])]
        step = int(min(room[i], rest, rng.integers(1, max(2, (hi - lo) // 4 + 1))))
        sizes[i] += step
        room[i] -= step
        rest -= step
    return [int(s) for s in sizes]


def _feasible_counts(total: int, lo: int, hi: int) -> range:
    return range(-(-total // hi), total // lo + 1)


def copy_paste(human: Sequence[Token], watermarked: WatermarkedOutput | Sequence[Token], cfg: AttackConfig) -> MixedSample:
    """Interleave human and watermarked segments.

    Segment sizes fall in ``cfg.segment_len_range``; human text is cut so that
    watermarked tokens are never outnumbered. Segments alternate and human text
    leads whenever the sizes allow it.
    """
    wm = list(watermarked.generated if isinstance(watermarked, WatermarkedOutput) else watermarked)
    human = list(human)
    lo, hi = cfg.segment_len_range
    if not human or not wm:
        raise InputsTooShort("copy_paste needs non-empty human and watermarked inputs")
    human = human[: len(wm)]
    H, W = len(human), len(wm)
    if H < lo or W < lo:
        raise InputsTooShort(f"inputs of {H} human / {W} watermarked tokens cannot form {lo}-token segments")
    rng = np.random.default_rng([cfg.seed, 0xC0])
    pairs = [(a, b) for a in _feasible_counts(H, lo, hi) for b in _feasible_counts(W, lo, hi) if abs(a - b) <= 1]
    if not pairs:
        raise InputsTooShort(f"no alternating layout of {H} human and {W} watermarked tokens fits {cfg.segment_len_range}")
    human_first = [p for p in pairs if p[0] >= p[1]]
    pool = human_first or pairs
    m_h, m_w = pool[rng.integers(len(pool))]
    h_sizes = _compose(H, m_h, lo, hi, rng)
    w_sizes = _compose(W, m_w, lo, hi, rng)

    order = ["h", "w"] if m_h >= m_w else ["w", "h"]
    tokens: list[Token] = []
    labels: list[bool] = []
    hi_, wi_ = 0, 0
    queues = {"h": list(h_sizes), "w": list(w_sizes)}
    turn = 0
    while queues["h"] or queues["w"]:
        src = order[turn % 2]
        turn += 1
        if not queues[src]:
            continue
        n = queues[src].pop(0)
        if src == "h":
            tokens += human[hi_:hi_ + n]
            hi_ += n
        else:
            tokens += wm[wi_:wi_ + n]
            wi_ += n
        labels += [src == "w"] * n
    return MixedSample(tokens, labels, cfg.provenance())


def substitute(sample: MixedSample, backend: LanguageModel, cfg: AttackConfig) -> MixedSample:
    """Replace a fraction of the watermarked tokens with other top-k candidates.

    Positions are drawn uniformly without replacement among True labels and
    edited left to right, each replacement conditioned on the already edited
    prefix. Labels are unchanged.
    """
    tokens = list(sample.tokens)
    positive = np.flatnonzero(np.asarray(sample.labels, dtype=bool))
    n_sub = round_half_up(cfg.rate * positive.shape[0])
    prov = dict(sample.provenance)
    prov.update(cfg.provenance())
    if n_sub == 0:
        return MixedSample(tokens, list(sample.labels), prov)
    rng = np.random.default_rng([cfg.seed, 0x5B])
    chosen = np.sort(rng.choice(positive, size=n_sub, replace=False))
    for p in chosen:
        p = int(p)
        cands = [t for t in backend.next_candidates(tokens[:p], backend.k_max).tokens if t.id != tokens[p].id]
        if not cands:
            raise InputsTooShort(f"no alternative candidate at position {p}")
        tokens[p] = cands[int(rng.integers(len(cands)))]
    return MixedSample(tokens, list(sample.labels), prov)


def _split_at_labels(spans: list[tuple[int, int]], labels: Sequence[bool]) -> list[tuple[int, int]]:
    out = []
    for a, b in spans:
        start = a
        for i in range(a + 1, b):
            if labels[i] != labels[i - 1]:
                out.append((start, i))
                start = i
        out.append((start, b))
    return out


def sentence_spans(tokens: Sequence[Token]) -> list[tuple[int, int]]:
    spans = []
    start = 0
    for i, tok in enumerate(tokens):
        if tok.text.rstrip().endswith(SENTENCE_END):
            spans.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        spans.append((start, len(tokens)))
    return spans


def _run_hook(command: Sequence[str], lines: list[str], timeout: float) -> list[str]:
    payload = "".join(line.replace("\n", " ") + "\n" for line in lines)
    try:
        proc = subprocess.run(
            list(command), input=payload, capture_output=True, text=True, timeout=timeout, check=False
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise TransformerFailed(f"transformer could not run: {exc}") from exc
    if proc.returncode != 0:
        raise TransformerFailed(f"transformer exited with {proc.returncode}: {proc.stderr.strip()[:200]}")
    out = proc.stdout.splitlines()
    if len(out) != len(lines):
        raise TransformerFailed(f"transformer returned {len(out)} lines for {len(lines)} sentences")
    return out


def transform_hook(
    sample: MixedSample,
    command: str | Sequence[str] | None,
    cfg: AttackConfig,
    backend: LanguageModel,
    timeout: float = 120.0,
) -> MixedSample:
    """Pipe whole watermarked sentences through an external rewriter.

    Sentences are split where labels change and cut to at most
    ``MAX_HOOK_UNIT`` tokens; the all-watermarked units are picked in seeded
    random order until ``rate`` of the watermarked tokens is covered. The
    rewritten units are re-tokenized and labelled True.
    """
    if command is None or command == "" or command == []:
        raise HookUnavailable(f"no transformer configured for {cfg.kind}")
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    prov = dict(sample.provenance)
    prov.update(cfg.provenance())
    labels = list(sample.labels)
    units = sentence_spans(sample.tokens)
    units = [(a, min(a + MAX_HOOK_UNIT, b)) for s, b in _split_at_labels(units, labels)
             for a in range(s, b, MAX_HOOK_UNIT)]
    spans = [(a, b) for a, b in units if labels[a]]
    target = round_half_up(cfg.rate * sum(labels))
    if target == 0 or not spans:
        return MixedSample(list(sample.tokens), labels, prov)

    rng = np.random.default_rng([cfg.seed, 0x7F])
    picked, covered = [], 0
    for i in rng.permutation(len(spans)):
        if covered >= target:
            break
        a, b = spans[int(i)]
        picked.append((a, b))
        covered += b - a
    picked.sort()
    lines = [backend.detokenize(sample.tokens[a:b]) for a, b in picked]
    rewritten = _run_hook(argv, lines, timeout)

    tokens: list[Token] = []
    new_labels: list[bool] = []
    cursor = 0
    for (a, b), text in zip(picked, rewritten):
        tokens += sample.tokens[cursor:a]
        new_labels += labels[cursor:a]
        new = backend.tokenize(text)
        tokens += new
        new_labels += [True] * len(new)
        cursor = b
    tokens += sample.tokens[cursor:]
    new_labels += labels[cursor:]
    return MixedSample(tokens, new_labels, prov)
