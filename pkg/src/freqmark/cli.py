"""Command line entry point.

Each subcommand reads and writes JSONL so pipeline stages chain through files::

    freqmark generate --prompt-file p.txt --signal s.json --out wm.jsonl
    freqmark attack --kind substitution --rate 0.3 --in wm.jsonl --out att.jsonl
    freqmark detect --in att.jsonl --signal s.json --out det.jsonl
    freqmark eval --dataset d.jsonl --signal s.json --report r.json --curves c.csv

Exit codes: 0 success, 1 domain error, 2 usage error or unreadable input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import ATTACK_KINDS, AttackConfig, MixedSample, copy_paste, substitute, transform_hook
from .embed import EmbedConfig, embed, generate_unwatermarked
from .errors import FreqmarkError
from .evaluation import CorpusSpec, EvalConfig, build_corpus, evaluate, make_record
from .io import dumps, read_jsonl, write_jsonl, write_text
from .lm.base import LanguageModel
from .lm.reference import ReferenceLmConfig, ReferenceModel, bundled_human_path
from .ranks import RankSequence, extract
from .signal import GuidingSignal
from .stft import StftConfig, detect, stft

log = logging.getLogger("freqmark")


class UsageError(Exception):
    """Bad input the caller must fix; maps to exit code 2."""


# ---------------------------------------------------------------- helpers


def make_backend(args) -> LanguageModel:
    if args.backend == "remote":
        from .lm.remote import RemoteModel

        if not args.model:
            raise UsageError("--model is required with --backend remote")
        return RemoteModel(args.model)
    cfg = ReferenceLmConfig(order=args.lm_order, corpus_path=args.lm_corpus, seed=args.lm_seed)
    return ReferenceModel(cfg)


def load_records(path: str) -> list[dict]:
    try:
        return read_jsonl(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def read_file(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def load_signal(path: str) -> GuidingSignal:
    try:
        return GuidingSignal.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad signal file {path}: {exc}") from None


def stft_config(args, signal: GuidingSignal | None = None) -> StftConfig:
    kw = {"window_len": args.window, "hop": args.hop, "detrend": args.detrend}
    if signal is not None:
        kw["target_frequency"] = signal.base_frequency
    if getattr(args, "tau", None) is not None:
        kw["threshold"] = args.tau
    return StftConfig(**kw)


def record_tokens(backend: LanguageModel, rec: dict):
    if "tokens" in rec:
        return backend.tokens_from_texts(rec["tokens"])
    if "text" in rec:
        return backend.tokenize(rec["text"])
    raise UsageError(f"record {rec.get('id', '?')} has neither 'tokens' nor 'text'")


def record_id(rec: dict, i: int) -> str:
    return str(rec.get("id", f"{i:06d}"))


def emit(path: str | None, text: str) -> None:
    if path:
        write_text(path, text)
    else:
        sys.stdout.write(text)


def emit_jsonl(path: str | None, records: list[dict]) -> None:
    if path:
        write_jsonl(path, records)
    else:
        for r in records:
            sys.stdout.write(dumps(r) + "\n")


def rank_sequence(backend: LanguageModel, rec: dict, workers: int) -> RankSequence:
    prefix = int(rec.get("context_prefix_length", 0))
    if "ranks" in rec:
        return RankSequence.from_list(rec["ranks"], backend.k_max, prefix)
    return extract(backend, record_tokens(backend, rec), prefix, workers)


def spectrogram_csv(items: list[tuple[str, RankSequence]], cfg: StftConfig) -> str:
    rows = []
    header = None
    for rid, seq in items:
        if len(seq) < cfg.window_len:
            log.warning("%s: %d ranks is shorter than one window, skipped", rid, len(seq))
            continue
        lines = stft(np.asarray(seq.ranks, dtype=np.float64), cfg).to_csv().splitlines()
        header = header or "id," + lines[0]
        rows += [f"{rid},{ln}" for ln in lines[1:]]
    if header is None:
        raise UsageError("no sequence is long enough for a spectrogram")
    return "\n".join([header] + rows) + "\n"


# ---------------------------------------------------------------- subcommands


def cmd_generate(args) -> int:
    backend = make_backend(args)
    signal = load_signal(args.signal)
    prompts = [ln.strip() for ln in read_file(args.prompt_file).splitlines() if ln.strip()]
    if not prompts:
        raise UsageError(f"{args.prompt_file} has no prompts")
    cfg = EmbedConfig(signal, args.max_tokens, phase_offset=args.phase_offset)
    out = []
    for i, text in enumerate(prompts):
        prompt = backend.tokenize(text)
        rid = f"gen-{i:06d}"
        if args.unwatermarked:
            toks = generate_unwatermarked(backend, prompt, args.max_tokens)
            out.append(make_record(rid, toks, [False] * len(toks), "greedy", prefix=len(prompt)))
        else:
            wm = embed(backend, prompt, cfg)
            labels = [False] * wm.prompt_length + [True] * len(wm.ranks_used)
            out.append(make_record(rid, wm.tokens, labels, "watermarked", prefix=wm.prompt_length,
                                   ranks_used=list(wm.ranks_used), phase_offset=wm.phase_offset))
        log.info("generated %s", rid)
    emit_jsonl(args.out, out)
    return 0


def cmd_ranks(args) -> int:
    backend = make_backend(args)
    out = []
    for i, rec in enumerate(load_records(args.inp)):
        seq = rank_sequence(backend, rec, args.workers)
        out.append({"id": record_id(rec, i), "ranks": list(seq.ranks),
                    "context_prefix_length": seq.context_prefix_length})
    emit_jsonl(args.out, out)
    return 0


def cmd_detect(args) -> int:
    backend = make_backend(args)
    cfg = stft_config(args, load_signal(args.signal))
    out, seqs = [], []
    for i, rec in enumerate(load_records(args.inp)):
        rid = record_id(rec, i)
        seq = rank_sequence(backend, rec, args.workers)
        res = detect(seq, cfg)
        if res.degraded:
            log.warning("%s: shorter than one window, whole-sequence score used", rid)
        out.append({"id": rid, "tau": cfg.threshold, **res.to_dict()})
        seqs.append((rid, seq))
    emit_jsonl(args.out, out)
    if args.spectrogram_csv:
        write_text(args.spectrogram_csv, spectrogram_csv(seqs, cfg))
    return 0


def cmd_spectrogram(args) -> int:
    backend = make_backend(args)
    signal = load_signal(args.signal) if args.signal else None
    cfg = stft_config(args, signal)
    seqs = [(record_id(r, i), rank_sequence(backend, r, args.workers)) for i, r in enumerate(load_records(args.inp))]
    emit(args.out, spectrogram_csv(seqs, cfg))
    return 0


def cmd_attack(args) -> int:
    backend = make_backend(args)
    records = load_records(args.inp)
    human = backend.tokenize(read_file(args.human_file)) if args.kind == "copy_paste" else []
    rng = np.random.default_rng([args.seed, 0xA7])
    out = []
    for i, rec in enumerate(records):
        rid = record_id(rec, i)
        toks = record_tokens(backend, rec)
        prefix = int(rec.get("context_prefix_length", 0))
        labels = rec.get("labels") or [False] * prefix + [True] * (len(toks) - prefix)
        if len(labels) != len(toks):
            raise UsageError(f"record {rid}: {len(labels)} labels for {len(toks)} tokens")
        acfg = AttackConfig(args.kind, args.rate, args.seed * 1_000_003 + i,
                            (args.segment_min, args.segment_max))
        sample = MixedSample(toks, list(labels))
        if args.kind == "copy_paste":
            wm = [t for t, lab in zip(toks, labels) if lab]
            n = min(len(wm), len(human))
            start = int(rng.integers(0, len(human) - n + 1))
            att = copy_paste(human[start:start + n], wm, acfg)
            prefix = 0
        elif args.kind == "substitution":
            att = substitute(sample, backend, acfg)
        else:
            att = transform_hook(sample, args.hook_command, acfg, backend)
        out.append(make_record(rid, att.tokens, att.labels,
                               "mixed" if args.kind == "copy_paste" else rec.get("source", "watermarked"),
                               attack=att.provenance, prefix=prefix))
    emit_jsonl(args.out, out)
    return 0


def cmd_eval(args) -> int:
    backend = make_backend(args)
    cfg = EvalConfig(stft=stft_config(args, load_signal(args.signal)), sample_score=args.sample_score,
                     calibrate=args.tau is None, workers=args.workers)
    records = sorted(load_records(args.dataset), key=lambda r: str(r.get("id", "")))
    report = evaluate(backend, records, cfg)
    emit(args.report, report.to_json())
    if args.curves:
        write_text(args.curves, report.curves_csv())
    return 0


def cmd_build_corpus(args) -> int:
    backend = make_backend(args)
    hooks = {}
    for item in args.hook or []:
        kind, _, command = item.partition("=")
        if kind not in ATTACK_KINDS[2:] or not command:
            raise UsageError(f"--hook expects KIND=COMMAND with KIND in {ATTACK_KINDS[2:]}, got {item!r}")
        hooks[kind] = command
    spec = CorpusSpec(
        n_pure=args.n_pure, sample_tokens=args.sample_tokens, negatives=args.negatives,
        substitution_rates=tuple(args.rates), n_copy_paste=args.n_copy_paste,
        segment_len_range=(args.segment_min, args.segment_max), hook_commands=hooks,
        calibration_fraction=args.calibration_fraction, seed=args.seed,
    )
    records = build_corpus(backend, read_file(args.human_file), load_signal(args.signal), spec)
    emit_jsonl(args.out, records)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("backend and global options")
    g.add_argument("--backend", choices=("reference", "remote"), default="reference")
    g.add_argument("--model", help="model name for the remote backend")
    g.add_argument("--lm-corpus", help="training text for the reference backend (default: bundled)")
    g.add_argument("--lm-order", type=int, default=3)
    g.add_argument("--lm-seed", type=int, default=0, help="vocabulary id seed of the reference backend")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("-v", "--verbose", action="count", default=0)

    stft_opts = argparse.ArgumentParser(add_help=False)
    s = stft_opts.add_argument_group("transform options")
    s.add_argument("--window", type=int, default=10)
    s.add_argument("--hop", type=int, default=1)
    s.add_argument("--detrend", choices=("mean", "weighted"), default="mean",
                   help="per-window offset removal before tapering")

    p = argparse.ArgumentParser(prog="freqmark", description="Rank-steering text watermarks with STFT detection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    q = sub.add_parser("generate", parents=[common], help="generate watermarked text")
    q.add_argument("--prompt-file", required=True, help="one prompt per line")
    q.add_argument("--signal", required=True)
    q.add_argument("--max-tokens", type=int, default=200)
    q.add_argument("--phase-offset", type=int, default=0)
    q.add_argument("--unwatermarked", action="store_true", help="greedy decoding without a watermark")
    q.add_argument("--out")
    q.set_defaults(func=cmd_generate)

    q = sub.add_parser("ranks", parents=[common], help="recover rank sequences")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_ranks)

    q = sub.add_parser("detect", parents=[common, stft_opts], help="score and localize watermarks")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--signal", required=True)
    q.add_argument("--tau", type=float, default=0.4)
    q.add_argument("--out")
    q.add_argument("--spectrogram-csv")
    q.set_defaults(func=cmd_detect)

    q = sub.add_parser("spectrogram", parents=[common, stft_opts], help="export STFT magnitudes as CSV")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--signal")
    q.add_argument("--out")
    q.set_defaults(func=cmd_spectrogram)

    q = sub.add_parser("attack", parents=[common], help="perturb watermarked samples")
    q.add_argument("--kind", choices=ATTACK_KINDS, required=True)
    q.add_argument("--rate", type=float, default=0.0)
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--out")
    q.add_argument("--human-file", default=str(bundled_human_path()), help="human text for copy_paste")
    q.add_argument("--hook-command", help="rewriter command for hook attacks")
    q.add_argument("--segment-min", type=int, default=20)
    q.add_argument("--segment-max", type=int, default=100)
    q.set_defaults(func=cmd_attack)

    q = sub.add_parser("eval", parents=[common, stft_opts], help="evaluate a labelled dataset")
    q.add_argument("--dataset", required=True)
    q.add_argument("--signal", required=True)
    q.add_argument("--report")
    q.add_argument("--curves")
    q.add_argument("--tau", type=float, help="fixed threshold; skips calibration")
    q.add_argument("--sample-score", choices=("sequence", "mean_window"), default="sequence")
    q.set_defaults(func=cmd_eval)

    q = sub.add_parser("build-corpus", parents=[common], help="build a labelled evaluation dataset")
    q.add_argument("--signal", required=True)
    q.add_argument("--out")
    q.add_argument("--human-file", default=str(bundled_human_path()))
    q.add_argument("--n-pure", type=int, default=50)
    q.add_argument("--sample-tokens", type=int, default=200)
    q.add_argument("--negatives", choices=("human", "greedy"), default="human")
    q.add_argument("--rates", type=float, nargs="*", default=[0.1, 0.2, 0.3, 0.4, 0.5])
    q.add_argument("--n-copy-paste", type=int, default=50)
    q.add_argument("--segment-min", type=int, default=20)
    q.add_argument("--segment-max", type=int, default=100)
    q.add_argument("--calibration-fraction", type=float, default=0.5)
    q.add_argument("--hook", action="append", metavar="KIND=COMMAND")
    q.set_defaults(func=cmd_build_corpus)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="freqmark: %(levelname)s: %(message)s",
    )
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"freqmark: error: {exc}", file=sys.stderr)
        return 2
    except (FreqmarkError, ValueError) as exc:
        print(f"freqmark: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"freqmark: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
