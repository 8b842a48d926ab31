"""Labelled evaluation datasets and the report computed over them.

Dataset records are dicts::

    {"id": str, "tokens": [str], "labels": [bool],
     "attack": {"kind": str, "rate": float, "seed": int},
     "source": "human" | "greedy" | "watermarked" | "mixed",
     "split": "calibration" | "test", "context_prefix_length": int}

Labels are True on watermarked model output. The leading
``context_prefix_length`` tokens are the prompt and are never scored.
"""

from __future__ import annotations

import hashlib
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .attacks import AttackConfig, MixedSample, copy_paste, substitute, transform_hook
from .embed import EmbedConfig, embed, generate_unwatermarked
from .errors import CorpusTooSmall, EmptyClass, FreqmarkError, TransformerFailed
from .io import dumps
from .lm.base import LanguageModel, Token
from .ranks import extract
from .signal import GuidingSignal
from .stft import StftConfig, detect, label_tokens

BASELINES = ("log_p", "entropy", "rank", "logrank")
TAU_GRID = tuple(round(0.05 + 0.01 * i, 2) for i in range(91))


@dataclass(frozen=True)
class BaselineScore:
    method: str
    per_sample_score: float


def baseline_scores(backend: LanguageModel, tokens: Sequence[Token], start: int = 0) -> dict[str, float]:
    """Zero-shot statistics over ``tokens[start:]``, oriented so larger means more model-like.

    log_p: mean logprob. entropy: negated mean candidate entropy.
    rank: negated mean rank. logrank: negated mean log rank.
    """
    scores = backend.score_sequence(tokens)[start:]
    if not scores:
        raise ValueError("nothing to score")
    lp = np.array([s.logprob for s in scores])
    rk = np.array([s.rank for s in scores], dtype=np.float64)
    ent = np.array([s.entropy for s in scores])
    return {
        "log_p": float(lp.mean()),
        "entropy": float(-ent.mean()),
        "rank": float(-rk.mean()),
        "logrank": float(-np.log(rk).mean()),
    }


def run_baselines(backend: LanguageModel, records: Iterable[dict]) -> list[dict[str, BaselineScore]]:
    out = []
    for rec in records:
        toks = backend.tokens_from_texts(rec["tokens"])
        s = baseline_scores(backend, toks, int(rec.get("context_prefix_length", 0)))
        out.append({m: BaselineScore(m, v) for m, v in s.items()})
    return out


def perplexity_proxy(backend: LanguageModel, tokens: Sequence[Token], start: int = 0) -> float:
    """exp(-mean logprob) of ``tokens[start:]`` under the scoring backend."""
    scores = backend.score_sequence(tokens)[start:]
    if not scores:
        raise ValueError("nothing to score")
    return float(math.exp(-np.mean([s.logprob for s in scores])))


# ---------------------------------------------------------------- corpus


@dataclass(frozen=True)
class CorpusSpec:
    n_pure: int = 50
    sample_tokens: int = 200
    prompt_tokens: int = 5
    negatives: str = "human"
    substitution_rates: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    n_copy_paste: int = 50
    segment_len_range: tuple[int, int] = (20, 100)
    hook_commands: dict = field(default_factory=dict)
    hook_rates: tuple[float, ...] = (0.2,)
    calibration_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.negatives not in ("human", "greedy"):
            raise ValueError("negatives must be 'human' or 'greedy'")
        if self.sample_tokens < 1 or self.n_pure < 0 or self.n_copy_paste < 0:
            raise ValueError("sample sizes must be positive")


def assign_split(sample_id: str, seed: int, calibration_fraction: float) -> str:
    h = hashlib.sha256(f"{seed}:{sample_id}".encode()).digest()
    u = int.from_bytes(h[:8], "big") / 2.0 ** 64
    return "calibration" if u < calibration_fraction else "test"


def make_record(sample_id: str, tokens: Sequence[Token], labels: Sequence[bool], source: str,
                attack: dict | None = None, prefix: int = 0, split: str | None = None, **extra) -> dict:
    rec = {
        "id": sample_id,
        "tokens": [t.text for t in tokens],
        "labels": [bool(v) for v in labels],
        "attack": attack or {"kind": "none", "rate": 0.0, "seed": 0},
        "source": source,
        "context_prefix_length": int(prefix),
    }
    if split is not None:
        rec["split"] = split
    rec.update(extra)
    return rec


def build_corpus(backend: LanguageModel, human_text: str, signal: GuidingSignal, spec: CorpusSpec) -> list[dict]:
    """Labelled records from ``human_text`` and the backend, assigned to splits by id hash."""
    words = backend.tokenize(human_text)
    need = spec.sample_tokens + spec.prompt_tokens
    if len(words) < need or len(words) < spec.segment_len_range[0]:
        raise CorpusTooSmall(f"human text has {len(words)} tokens, at least {need} required")
    rng = np.random.default_rng([spec.seed, 0xB0])

    def human_slice(n: int) -> list[Token]:
        start = int(rng.integers(0, len(words) - n + 1))
        return words[start:start + n]

    ecfg = EmbedConfig(signal, spec.sample_tokens)
    records: list[dict] = []

    def add(rec: dict) -> None:
        rec["split"] = assign_split(rec["id"], spec.seed, spec.calibration_fraction)
        records.append(rec)

    for i in range(spec.n_pure):
        if spec.negatives == "human":
            toks = human_slice(spec.sample_tokens)
            add(make_record(f"human-{i:04d}", toks, [False] * len(toks), "human"))
        else:
            prompt = human_slice(spec.prompt_tokens)
            toks = generate_unwatermarked(backend, prompt, spec.sample_tokens)
            add(make_record(f"greedy-{i:04d}", toks, [False] * len(toks), "greedy", prefix=len(prompt)))

    watermarked = []
    for i in range(spec.n_pure):
        prompt = human_slice(spec.prompt_tokens)
        out = embed(backend, prompt, ecfg)
        labels = [False] * out.prompt_length + [True] * len(out.ranks_used)
        sample = MixedSample(out.tokens, labels)
        watermarked.append((i, sample, out.prompt_length))
        add(make_record(f"wm-{i:04d}", out.tokens, labels, "watermarked", prefix=out.prompt_length))

    for rate in spec.substitution_rates:
        for i, sample, prefix in watermarked:
            acfg = AttackConfig("substitution", rate, spec.seed * 1_000_003 + i)
            att = substitute(sample, backend, acfg)
            add(make_record(f"sub{rate:.2f}-{i:04d}", att.tokens, att.labels, "watermarked",
                            attack=att.provenance, prefix=prefix))

    for kind, command in sorted(spec.hook_commands.items()):
        for rate in spec.hook_rates:
            for i, sample, prefix in watermarked:
                acfg = AttackConfig(kind, rate, spec.seed * 1_000_003 + i)
                try:
                    att = transform_hook(sample, command, acfg, backend)
                except TransformerFailed:
                    continue
                add(make_record(f"{kind}{rate:.2f}-{i:04d}", att.tokens, att.labels, "watermarked",
                                attack=att.provenance, prefix=prefix))

    lo, _ = spec.segment_len_range
    for i in range(spec.n_copy_paste):
        prompt = human_slice(spec.prompt_tokens)
        out = embed(backend, prompt, ecfg)
        n_h = int(rng.integers(lo, max(lo, len(out.ranks_used)) + 1))
        human = human_slice(min(n_h, len(words)))
        acfg = AttackConfig("copy_paste", 0.0, spec.seed * 1_000_003 + i, spec.segment_len_range)
        mixed = copy_paste(human, out, acfg)
        add(make_record(f"mix-{i:04d}", mixed.tokens, mixed.labels, "mixed", attack=mixed.provenance))
    return records


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class EvalConfig:
    stft: StftConfig = StftConfig()
    sample_score: str = "sequence"
    calibrate: bool = True
    baselines: bool = True
    boundary_tolerance: int = 5
    workers: int = 1

    def __post_init__(self):
        if self.sample_score not in ("sequence", "mean_window"):
            raise ValueError("sample_score must be 'sequence' or 'mean_window'")


@dataclass
class AttackRow:
    kind: str
    rate: float
    auc: float | None
    perplexity_proxy: float
    n: int


@dataclass
class EvalReport:
    auc: float | None
    fpr: float | None
    fnr: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    per_attack_rows: list[AttackRow]
    n_samples: int
    tau: float
    sample_score: str
    level: str
    boundary_accuracy: float | None = None
    baselines: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return dumps(_rounded(self.to_dict())) + "\n"

    def curves_csv(self) -> str:
        buf = io.StringIO()
        buf.write("attack,rate,auc,perplexity_proxy\n")
        for r in self.per_attack_rows:
            auc_s = "" if r.auc is None else f"{r.auc:.6f}"
            buf.write(f"{r.kind},{r.rate:.4f},{auc_s},{r.perplexity_proxy:.6f}\n")
        return buf.getvalue()


def _rounded(obj, digits: int = 10):
    if isinstance(obj, float):
        return round(obj, digits)
    if isinstance(obj, dict):
        return {k: _rounded(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v, digits) for v in obj]
    return obj


@dataclass
class ScoredSample:
    record: dict
    truth: np.ndarray
    token_scores: np.ndarray
    smoothed: np.ndarray
    sample_score: float
    perplexity: float
    baselines: dict[str, float] | None

    @property
    def positive(self) -> bool:
        return bool(self.truth.any())

    @property
    def attack_kind(self) -> str:
        return self.record.get("attack", {}).get("kind", "none")

    @property
    def attack_rate(self) -> float:
        return float(self.record.get("attack", {}).get("rate", 0.0))

    @property
    def split(self) -> str:
        return self.record.get("split", "test")

    @property
    def pure(self) -> bool:
        return self.record.get("source") != "mixed" and (self.truth.all() or not self.truth.any())


def score_record(backend: LanguageModel, rec: dict, cfg: EvalConfig, with_baselines: bool) -> ScoredSample:
    toks = backend.tokens_from_texts(rec["tokens"])
    prefix = int(rec.get("context_prefix_length", 0))
    truth = np.asarray(rec["labels"][prefix:], dtype=bool)
    ranks = extract(backend, toks, prefix)
    det = detect(ranks, cfg.stft)
    s = det.sequence_score if cfg.sample_score == "sequence" else det.mean_window_score
    base = baseline_scores(backend, toks, prefix) if with_baselines else None
    return ScoredSample(rec, truth, det.token_scores, det.smoothed_scores, s,
                        perplexity_proxy(backend, toks, prefix), base)


def _token_counts(samples: Sequence[ScoredSample], tau: float, min_seg: int) -> tuple[int, int, int, int]:
    tp = fp = fn = tn = 0
    for s in samples:
        pred = label_tokens(s.smoothed, tau, min_seg)
        a, b, c, d = metrics.confusion(s.truth, pred)
        tp, fp, fn, tn = tp + a, fp + b, fn + c, tn + d
    return tp, fp, fn, tn


def _f1_or_zero(counts) -> float:
    try:
        return metrics.metrics_from_counts(*counts).f1
    except FreqmarkError:
        return 0.0


def calibrate_threshold(samples: Sequence[ScoredSample], cfg: StftConfig, grid: Sequence[float] = TAU_GRID) -> float:
    """Threshold maximizing F1 on the given samples; ties go to the smallest tau.

    Token-level F1 when mixed samples are present, sample-level otherwise.
    """
    mixed = [s for s in samples if not s.pure]
    if mixed:
        scores = [_f1_or_zero(_token_counts(mixed, t, cfg.min_segment_tokens)) for t in grid]
    else:
        y = [s.positive for s in samples]
        v = np.array([s.sample_score for s in samples])
        scores = [_f1_or_zero(metrics.confusion(y, v >= t)) for t in grid]
    if not samples or max(scores) == 0.0:
        return cfg.threshold
    return float(grid[int(np.argmax(scores))])


def score_dataset(backend: LanguageModel, records: Sequence[dict], cfg: EvalConfig) -> list[ScoredSample]:
    def one(rec):
        with_base = cfg.baselines and rec.get("attack", {}).get("kind", "none") == "none" and rec.get("source") != "mixed"
        return score_record(backend, rec, cfg, with_base)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(one, records))
    return [one(r) for r in records]


def evaluate(backend: LanguageModel, records: Sequence[dict], cfg: EvalConfig | None = None) -> EvalReport:
    cfg = cfg or EvalConfig()
    if not records:
        raise EmptyClass("dataset is empty")
    scored = score_dataset(backend, records, cfg)
    return report_from_scores(scored, cfg)


def report_from_scores(scored: Sequence[ScoredSample], cfg: EvalConfig) -> EvalReport:
    calib = [s for s in scored if s.split == "calibration"]
    test = [s for s in scored if s.split != "calibration"]
    tau = calibrate_threshold(calib, cfg.stft) if (cfg.calibrate and calib) else cfg.stft.threshold
    min_seg = cfg.stft.min_segment_tokens

    clean = [s for s in test if s.pure and s.attack_kind == "none"]
    pos = [s for s in clean if s.positive]
    neg = [s for s in clean if not s.positive]

    auc = fpr = fnr = None
    baselines: dict[str, float] = {}
    if pos and neg:
        auc = metrics.auc([s.sample_score for s in pos], [s.sample_score for s in neg])
        m = metrics.classification_metrics(
            [s.positive for s in clean], [s.sample_score >= tau for s in clean]
        )
        fpr, fnr = m.fpr, m.fnr
        if all(s.baselines is not None for s in clean):
            for name in BASELINES:
                baselines[name] = metrics.auc([s.baselines[name] for s in pos], [s.baselines[name] for s in neg])

    mixed = [s for s in test if not s.pure]
    precision = recall = f1 = boundary = None
    level = "token"
    if mixed:
        counts = _token_counts(mixed, tau, min_seg)
        try:
            m = metrics.metrics_from_counts(*counts)
            precision, recall, f1 = m.precision, m.recall, m.f1
        except FreqmarkError:
            pass
        hits = total = 0
        for s in mixed:
            h, t = metrics.boundary_hits(s.truth, label_tokens(s.smoothed, tau, min_seg), cfg.boundary_tolerance)
            hits, total = hits + h, total + t
        boundary = hits / total if total else None
    elif pos and neg:
        level = "sample"
        m = metrics.classification_metrics(
            [s.positive for s in clean], [s.sample_score >= tau for s in clean]
        )
        precision, recall, f1 = m.precision, m.recall, m.f1

    groups: dict[tuple[str, float], list[ScoredSample]] = {}
    for s in test:
        if s.positive:
            groups.setdefault((s.attack_kind, s.attack_rate), []).append(s)
    rows = []
    for (kind, rate), members in sorted(groups.items()):
        row_auc = metrics.auc([s.sample_score for s in members], [s.sample_score for s in neg]) if neg else None
        rows.append(AttackRow(kind, rate, row_auc, float(np.mean([s.perplexity for s in members])), len(members)))

    return EvalReport(
        auc=auc, fpr=fpr, fnr=fnr, precision=precision, recall=recall, f1=f1,
        per_attack_rows=rows, n_samples=len(scored), tau=tau, sample_score=cfg.sample_score,
        level=level, boundary_accuracy=boundary, baselines=baselines,
    )
