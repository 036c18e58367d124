"""Single command-line entry point: bpe-train, data-prepare, train, evaluate,
generate, serve.

Config files are JSON with model/train/sampling sections plus a vocab path;
flat dotted overrides (--set train.lr=1e-4) are applied on top, and the
merged result is echoed into the run directory so reruns reproduce exactly.
EMPT_LOG=debug|info|warn controls verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import corpus as corpus_mod
from .bpe import Vocabulary, train_bpe
from .decoder import SamplingParams, generate
from .evaluator import evaluate_model, write_report
from .model import ModelConfig, load_model, predict_emotion
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

_LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING}


def _setup_logging():
    level = os.environ.get("EMPT_LOG", "warn").lower()
    logging.basicConfig(
        level=_LOG_LEVELS.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_config_file(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _apply_overrides(config, overrides):
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config


def _build_run_config(args):
    cfg = _load_config_file(getattr(args, "config", None))
    cfg.setdefault("model", {})
    cfg.setdefault("train", {})
    cfg.setdefault("sampling", {})
    _apply_overrides(cfg, getattr(args, "set", None))
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_bpe_train(args):
    def lines():
        with open(args.corpus, encoding="utf-8") as f:
            for line in f:
                yield line.replace(corpus_mod.UTTERANCE_SEP, " ")

    vocab = train_bpe(lines(), args.vocab_size)
    vocab.save(args.out)
    print(json.dumps({"vocab": args.out, "size": len(vocab), "merges": len(vocab.merges)}))
    return 0


def cmd_data_prepare(args):
    if args.jsonl:
        conversations = corpus_mod.load_corpus_jsonl(args.jsonl)
    else:
        d = args.data_dir
        conversations = corpus_mod.load_corpus(
            os.path.join(d, "dialogues_text.txt"),
            os.path.join(d, "dialogues_emotion.txt"),
            os.path.join(d, "dialogues_act.txt"),
            os.path.join(d, "dialogues_topic.txt"),
        )
    samples = corpus_mod.build_samples(
        conversations,
        history_window=args.window,
        n_utt_distractors=args.utterance_distractors,
        n_emo_distractors=args.emotion_distractors,
        rng_seed=args.seed,
    )
    corpus_mod.save_sample_cache(
        args.out,
        conversations,
        samples,
        {
            "window": args.window,
            "seed": args.seed,
            "n_utt_distractors": args.utterance_distractors,
            "n_emo_distractors": args.emotion_distractors,
        },
    )
    counts = {
        "conversations": len(conversations),
        "samples": len(samples),
        "reference_train_size": corpus_mod.REFERENCE_SPLIT_SIZES["train"],
        "reference_validation_size": corpus_mod.REFERENCE_SPLIT_SIZES["validation"],
    }
    log.info("prepared %s", counts)
    print(json.dumps({"cache": args.out, **counts}))
    return 0


def cmd_train(args):
    run_cfg = _build_run_config(args)
    vocab_path = run_cfg.get("vocab")
    if not vocab_path:
        raise ValueError("config must name a vocab file (key: vocab)")
    vocab = Vocabulary.load(vocab_path)
    manifest, conversations, samples = corpus_mod.load_sample_cache(args.data)
    model_cfg = ModelConfig(vocab_size=len(vocab), **run_cfg["model"])
    train_cfg = TrainConfig(**run_cfg["train"])

    os.makedirs(args.out, exist_ok=True)
    effective = {
        "model": {k: v for k, v in model_cfg.to_json().items() if k != "vocab_size"},
        "train": train_cfg.to_json(),
        "sampling": run_cfg.get("sampling", {}),
        "vocab": vocab_path,
        "data": args.data,
    }
    with open(os.path.join(args.out, "effective-config.json"), "w", encoding="utf-8") as f:
        json.dump(effective, f, indent=2, sort_keys=True)
        f.write("\n")

    summary = train(
        conversations,
        samples,
        vocab,
        model_cfg,
        train_cfg,
        args.out,
        resume=args.resume,
        vocab_path=vocab_path,
        history_window=manifest.get("window"),
    )
    print(json.dumps(summary))
    return 1 if summary["halted"] else 0


def cmd_evaluate(args):
    params, config, sidecar = load_model(args.ckpt)
    vocab = Vocabulary.load(args.vocab or sidecar.get("vocab_path"))
    manifest, conversations, _ = corpus_mod.load_sample_cache(args.data)
    sampling = SamplingParams(p=args.p, temperature=args.temp, rng_seed=args.seed,
                              max_new_tokens=args.max_new_tokens)
    report, meta = evaluate_model(
        params,
        config,
        vocab,
        conversations,
        history_window=manifest.get("window", 2),
        n_distractors=args.distractors,
        seed=args.seed,
        sampling=sampling,
        exclude_no_emotion=args.exclude_no_emotion,
        micro=args.micro,
        max_generation_positions=args.max_gen_positions,
    )
    write_report(args.out, report, meta)
    print(json.dumps({"report": args.out, "hit_at_1": report.hit_at_1, "ppl": report.ppl,
                      "bleu": report.bleu, "token_f1": report.token_f1,
                      "emotion_f1": report.emotion_f1}))
    return 0


def _parse_history(value):
    """History from a JSON-lines file, or inline utterances split on '||'."""
    entries = []
    if value and os.path.exists(value):
        with open(value, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    entries.append(json.loads(line))
    elif value:
        for i, piece in enumerate(p.strip() for p in value.split("||")):
            if piece:
                entries.append({"speaker": 1 if i % 2 == 0 else 2, "text": piece})
    history = []
    for e in entries:
        utt = corpus_mod.Utterance(
            e["text"], e.get("emotion", "no-emotion"), e.get("act", "inform")
        )
        history.append((e.get("speaker", 1), utt))
    return history


def cmd_generate(args):
    params, config, sidecar = load_model(args.ckpt)
    vocab = Vocabulary.load(args.vocab or sidecar.get("vocab_path"))
    history = _parse_history(args.history)
    sampling = SamplingParams(
        p=args.p, temperature=args.temp, max_new_tokens=args.max_new_tokens,
        rng_seed=args.seed,
    )
    emotion = args.emotion
    scores = None
    if emotion == "auto":
        ranked = predict_emotion(history, args.topic, params, vocab, config)
        emotion = ranked[0][0]
        scores = {label: round(s, 6) for label, s in ranked}
    elif emotion == "none":
        emotion = None
    text, ids = generate(
        history, args.topic, params, vocab, config, sampling, candidate_emotion=emotion
    )
    out = {"reply": text, "emotion": emotion, "token_count": len(ids)}
    if scores is not None:
        out["emotion_scores"] = scores
    print(json.dumps(out))
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(args.ckpt, vocab_path=args.vocab, static_dir=args.static)
    host, _, port = args.addr.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="empchat",
        description="Desk-scale empathetic dialog transformer workflows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bpe-train", help="train a BPE vocabulary from a text corpus")
    p.add_argument("--corpus", required=True, help="plain-text corpus file")
    p.add_argument("--vocab-size", type=int, default=4000)
    p.add_argument("--out", required=True, help="output vocabulary JSON path")
    p.set_defaults(func=cmd_bpe_train)

    p = sub.add_parser("data-prepare", help="build the training sample cache")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data-dir", help="directory with the four parallel dialog files")
    src.add_argument("--jsonl", help="JSON-lines corpus file")
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--utterance-distractors", type=int, default=1)
    p.add_argument("--emotion-distractors", type=int, default=1)
    p.add_argument("--out", required=True, help="output sample cache path")
    p.set_defaults(func=cmd_data_prepare)

    p = sub.add_parser("train", help="run the optimization loop")
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--data", required=True, help="sample cache from data-prepare")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a dotted config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compute all metrics over a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="sample cache providing corpus and window")
    p.add_argument("--vocab", help="vocabulary path (default: checkpoint sidecar)")
    p.add_argument("--distractors", type=int, default=19)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--temp", type=float, default=0.7)
    p.add_argument("--max-new-tokens", type=int, default=48)
    p.add_argument("--max-gen-positions", type=int, default=None,
                   help="cap generation-based metrics to this many positions")
    p.add_argument("--exclude-no-emotion", action="store_true")
    p.add_argument("--micro", action="store_true")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="sample one reply")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", help="vocabulary path (default: checkpoint sidecar)")
    p.add_argument("--topic", required=True)
    p.add_argument("--history", default="", help="JSON-lines file or inline 'a || b'")
    p.add_argument("--emotion", default="auto",
                   help="candidate emotion: auto, none, or a label")
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--temp", type=float, default=0.7)
    p.add_argument("--max-new-tokens", type=int, default=48)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("serve", help="run the chat HTTP service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", help="vocabulary path (default: checkpoint sidecar)")
    p.add_argument("--addr", default="127.0.0.1:8080")
    p.add_argument("--static", help="directory of built UI assets to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def dispatch(argv):
    """Parse argv and run the chosen subcommand; returns an exit code."""
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface one machine-parsable line, exit 1
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1


def main(argv=None):
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
