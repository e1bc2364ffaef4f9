"""Command-line entry point: preprocess, train, eval, generate, chat,
serve-eval, verify.

Configuration precedence is defaults < config file < command-line flags;
the config file is plain "key = value" text with '#' comments. Relative
input paths are also looked up under $MIRROR_DATA_DIR. The corpus names
"toy" and "toy8" refer to the bundled corpora.
"""

import argparse
import json
import os
import sys

from . import verify as verify_mod
from .checkpoint import load_checkpoint
from .corpus import (
    Vocabulary,
    WindowReport,
    build_vocabulary,
    import_dailydialog,
    import_tsv_triples,
    load_jsonl_corpus,
    save_jsonl_corpus,
    tokenize,
    window_dialogues,
)
from .data import BUILTIN, builtin_corpus_path
from .evalsession import EvalSession, load_model_outputs
from .inference import ChatSession, DecodeRequest, chat_turn, generate_response
from .metrics import distinct_n, perplexity
from .objective import TrainConfig, fit
from .params import config_for_profile

DEFAULT_SEED = 13


def _resolve(path):
    """Literal path, else relative to $MIRROR_DATA_DIR, else builtin name."""
    if path is None:
        return None
    if path in BUILTIN:
        return builtin_corpus_path(path)
    if os.path.exists(path):
        return path
    root = os.environ.get("MIRROR_DATA_DIR")
    if root and not os.path.isabs(path):
        candidate = os.path.join(root, path)
        if os.path.exists(candidate):
            return candidate
    return path


def _load_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merge_config(args, defaults):
    """Fill None attrs from the config file, then from defaults."""
    file_values = _load_config_file(args.config) if getattr(args, "config", None) else {}
    for key, default in defaults.items():
        if getattr(args, key, None) is not None:
            continue
        if key in file_values:
            raw = file_values[key]
            caster = type(default) if default is not None else str
            setattr(args, key, caster(raw))
        else:
            setattr(args, key, default)
    return args


def _load_dialogues(path, dataset):
    path = _resolve(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"corpus not found: {path}")
    if dataset == "dailydialog":
        return import_dailydialog(path)
    if dataset == "movietriples":
        return import_tsv_triples(path)
    return load_jsonl_corpus(path)


def _load_triples(path, dataset, window, stride, report=None):
    dialogues = _load_dialogues(path, dataset)
    return window_dialogues(dialogues, window=window, stride=stride, report=report)


def _add_common(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=None)


def _add_decode_flags(p):
    p.add_argument("--strategy", choices=["greedy", "beam", "sample"], default=None)
    p.add_argument("--k", type=int, default=None, help="beam width")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--z-mode", dest="z_mode", choices=["mean", "sample"], default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)


def _request_for(args, triple, index):
    return DecodeRequest(
        context=triple.context,
        query=triple.query,
        strategy=args.strategy,
        beam_width=args.k,
        temperature=args.temperature,
        z_mode="prior-mean" if args.z_mode == "mean" else "prior-sample",
        max_len=args.max_len,
        seed=args.seed * 100003 + index,
    )


DECODE_DEFAULTS = {"strategy": "greedy", "k": 1, "temperature": 1.0,
                   "z_mode": "mean", "max_len": 50, "seed": DEFAULT_SEED}


# ---------------------------------------------------------------------------
# Subcommands


def cmd_preprocess(args):
    _merge_config(args, {"window": 3, "stride": 1, "max_vocab": 20000,
                         "seed": DEFAULT_SEED, "dataset": "custom"})
    report = WindowReport()
    dialogues = _load_dialogues(args.input, args.dataset)
    triples = window_dialogues(dialogues, window=args.window, stride=args.stride, report=report)
    if not triples:
        print("no triples produced (all dialogues shorter than the window)", file=sys.stderr)
        return 1
    vocab = build_vocabulary(triples, max_size=args.max_vocab)
    os.makedirs(args.output_dir, exist_ok=True)
    save_jsonl_corpus(dialogues, os.path.join(args.output_dir, "corpus.jsonl"))
    vocab.save(os.path.join(args.output_dir, "vocab.txt"))
    summary = {
        "dialogues": report.dialogues,
        "skipped_short": report.skipped_short,
        "triples": report.triples,
        "vocab_size": len(vocab),
        "window": args.window,
        "stride": args.stride,
    }
    with open(os.path.join(args.output_dir, "preprocess_report.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_train(args):
    _merge_config(args, {
        "window": 3, "stride": 1, "max_vocab": 20000, "seed": DEFAULT_SEED,
        "dataset": "custom", "profile": "desk", "mode": "mirror", "lr": 0.001,
        "lr_decay": 0.5, "patience": 1, "batch_size": 32, "epochs": 20,
        "kl_anneal": 10000, "max_len": 50,
    })
    train_triples = _load_triples(args.train, args.dataset, args.window, args.stride)
    valid_path = args.valid or args.train
    valid_triples = _load_triples(valid_path, args.dataset, args.window, args.stride)
    if args.vocab:
        vocab = Vocabulary.load(_resolve(args.vocab))
    else:
        vocab = build_vocabulary(train_triples, max_size=args.max_vocab)
    cfg = config_for_profile(args.profile, len(vocab), args.dataset)
    tc = TrainConfig(mode=args.mode, lr=args.lr, lr_decay=args.lr_decay,
                     patience=args.patience, kl_anneal_steps=args.kl_anneal,
                     batch_size=args.batch_size, max_epochs=args.epochs,
                     seed=args.seed, profile=args.profile, max_len=args.max_len)
    result = fit(train_triples, valid_triples, vocab, cfg, tc,
                 checkpoint_path=args.checkpoint, report_path=args.report,
                 log=lambda msg: print(msg, file=sys.stderr))
    if result.diverged:
        print("training diverged; last good checkpoint kept", file=sys.stderr)
        return 1
    print(json.dumps({"best_epoch": result.best_epoch,
                      "best_valid_loss": result.best_valid_loss}, sort_keys=True))
    return 0


def _generate_all(args, triples, params, cfg, vocab, checkpoint_id):
    records = []
    for i, triple in enumerate(triples):
        result = generate_response(_request_for(args, triple, i), params, cfg, vocab)
        records.append({
            "dialogue_index": i,
            "response_text": " ".join(result.tokens),
            "decode_strategy": args.strategy if args.strategy != "beam"
            else f"beam{args.k}",
            "checkpoint_id": checkpoint_id,
        })
    return records


def cmd_generate(args):
    _merge_config(args, dict(DECODE_DEFAULTS, dataset="custom", window=3, stride=1))
    ckpt = load_checkpoint(_resolve(args.checkpoint))
    triples = _load_triples(args.test, args.dataset, args.window, args.stride)
    records = _generate_all(args, triples, ckpt.params, ckpt.config, ckpt.vocab,
                            os.path.basename(args.checkpoint))
    with open(args.output, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"wrote {len(records)} responses to {args.output}", file=sys.stderr)
    return 0


def cmd_eval(args):
    _merge_config(args, dict(DECODE_DEFAULTS, dataset="custom", window=3, stride=1,
                             batch_size=32))
    ckpt = load_checkpoint(_resolve(args.checkpoint))
    triples = _load_triples(args.test, args.dataset, args.window, args.stride)
    records = _generate_all(args, triples, ckpt.params, ckpt.config, ckpt.vocab,
                            os.path.basename(args.checkpoint))
    responses = [rec["response_text"].split() for rec in records]
    metrics = {
        "perplexity": perplexity(triples, ckpt.params, ckpt.config, ckpt.vocab,
                                 direction="forward", batch_size=args.batch_size,
                                 max_len=args.max_len),
        "perplexity_backward": perplexity(triples, ckpt.params, ckpt.config, ckpt.vocab,
                                          direction="backward", batch_size=args.batch_size,
                                          max_len=args.max_len),
        "distinct_1": distinct_n(responses, 1),
        "distinct_2": distinct_n(responses, 2),
        "n_triples": len(triples),
    }
    payload = json.dumps(metrics, sort_keys=True, indent=2)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(payload + "\n")
    print(payload)
    return 0


def cmd_chat(args):
    _merge_config(args, dict(DECODE_DEFAULTS, context_turns=1))
    ckpt = load_checkpoint(_resolve(args.checkpoint))
    session = ChatSession(context_turns=args.context_turns,
                          checkpoint_id=os.path.basename(args.checkpoint))
    seed = args.seed
    print("chat ready (:reset, :seed N, :quit)", file=sys.stderr)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        if line == ":quit":
            break
        if line == ":reset":
            session.reset()
            print("(history cleared)", file=sys.stderr)
            continue
        if line.startswith(":seed"):
            seed = int(line.split()[1])
            print(f"(seed set to {seed})", file=sys.stderr)
            continue
        tokens = chat_turn(session, tokenize(line), ckpt.params, ckpt.config, ckpt.vocab,
                           strategy=args.strategy, beam_width=args.k,
                           temperature=args.temperature,
                           z_mode="prior-mean" if args.z_mode == "mean" else "prior-sample",
                           max_len=args.max_len, seed=seed)
        print(" ".join(tokens))
    return 0


def cmd_serve_eval(args):
    _merge_config(args, {"seed": DEFAULT_SEED, "port": 8642, "n_pairs": 200,
                         "dataset": "custom", "window": 3, "stride": 1})
    os.makedirs(args.sessions_root, exist_ok=True)
    if args.new_session:
        triples = _load_triples(args.test, args.dataset, args.window, args.stride)
        session = EvalSession.create(
            triples,
            load_model_outputs(_resolve(args.outputs_a)),
            load_model_outputs(_resolve(args.outputs_b)),
            session_dir=os.path.join(args.sessions_root, args.new_session),
            n_pairs=args.n_pairs,
            seed=args.seed,
            session_id=args.new_session,
        )
        print(f"created session {session.session_id} with {len(session.pair_order)} pairs",
              file=sys.stderr)
        if args.create_only:
            return 0
    from .server import serve_forever
    serve_forever(args.sessions_root, args.port, args.ui_dir,
                  log=lambda msg: print(msg, file=sys.stderr))
    return 0


def cmd_verify(args):
    _merge_config(args, {"seed": DEFAULT_SEED})
    ok, results = verify_mod.run_verification(log=print, quick=args.quick)
    if not ok:
        first = next(name for name, passed, _ in results if not passed)
        print(f"verification failed: {first}", file=sys.stderr)
        return 1
    print("all properties pass")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="mirror", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("preprocess", help="import a corpus, window it, build the vocabulary")
    _add_common(p)
    p.add_argument("--dataset", choices=["dailydialog", "movietriples", "custom"], default=None)
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", dest="output_dir", required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--max-vocab", dest="max_vocab", type=int, default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model, writing checkpoint and report")
    _add_common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--vocab")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--report")
    p.add_argument("--dataset", choices=["dailydialog", "movietriples", "custom"], default=None)
    p.add_argument("--profile", choices=["paper", "desk"], default=None)
    p.add_argument("--mode", choices=["mirror", "forward", "backward", "cvae"], default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lr-decay", dest="lr_decay", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--kl-anneal", dest="kl_anneal", type=int, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--max-vocab", dest="max_vocab", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode responses for a test corpus")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--dataset", choices=["dailydialog", "movietriples", "custom"], default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    _add_decode_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="perplexity and distinct-n metrics")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--output")
    p.add_argument("--dataset", choices=["dailydialog", "movietriples", "custom"], default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    _add_decode_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("chat", help="interactive REPL against a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--context-turns", dest="context_turns", type=int, default=None)
    _add_decode_flags(p)
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("serve-eval", help="serve annotation sessions over HTTP")
    _add_common(p)
    p.add_argument("--sessions-root", dest="sessions_root", required=True)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--ui-dir", dest="ui_dir")
    p.add_argument("--new-session", dest="new_session",
                   help="create this session before serving")
    p.add_argument("--create-only", dest="create_only", action="store_true")
    p.add_argument("--test", help="test corpus for --new-session")
    p.add_argument("--outputs-a", dest="outputs_a", help="focal model outputs (JSONL)")
    p.add_argument("--outputs-b", dest="outputs_b", help="comparator outputs (JSONL)")
    p.add_argument("--n-pairs", dest="n_pairs", type=int, default=None)
    p.add_argument("--dataset", choices=["dailydialog", "movietriples", "custom"], default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.set_defaults(func=cmd_serve_eval)

    p = sub.add_parser("verify", help="run the property-verification suite")
    _add_common(p)
    p.add_argument("--quick", action="store_true", help="smaller sample sizes")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
