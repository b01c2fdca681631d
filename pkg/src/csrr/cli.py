"""Command-line entry point: prepare, train, generate, evaluate, chat, serve.

Defaults mirror the reference hyperparameters (hidden 1000, embedding 500,
latent 100, pad length 15, max conversation length 10, 8:1:1 split); every
run at desk scale overrides the dims through the train config file.
Errors print a single machine-parsable line to stderr and exit nonzero.
Log level comes from CSRR_LOG_LEVEL (debug|info|warn|error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from .inference import GenerationOptions, Session, batch_generate, generate_response
from .model import DialogueModel, ModelConfig
from .training import (
    TrainConfig,
    file_sha256,
    load_model_for_inference,
    train,
)

log = logging.getLogger("csrr")

MODEL_CONFIG_KEYS = ("hidden_dim", "embed_dim", "latent_dim")


def _setup_logging() -> None:
    level_name = os.environ.get("CSRR_LOG_LEVEL", "info").lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING, "error": logging.ERROR}
    if level_name not in levels:
        raise ValueError(f"CSRR_LOG_LEVEL must be one of {sorted(levels)}, got {level_name!r}")
    logging.basicConfig(level=levels[level_name], format="%(levelname)s %(name)s: %(message)s")


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ValueError("ratios must be three comma-separated numbers, e.g. 0.8,0.1,0.1")
    return parts[0], parts[1], parts[2]


def _read_kv_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path} line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _train_configs(path) -> tuple[TrainConfig, dict[str, int]]:
    """Parse the flat key=value config into TrainConfig plus model-dim overrides."""
    raw = _read_kv_config(path) if path else {}
    train_fields = TrainConfig.__dataclass_fields__
    train_kwargs = {}
    model_overrides: dict[str, int] = {}
    for key, value in raw.items():
        if key in train_fields:
            typ = train_fields[key].type
            train_kwargs[key] = int(value) if typ == "int" else float(value)
        elif key in MODEL_CONFIG_KEYS:
            model_overrides[key] = int(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    return TrainConfig(**train_kwargs), model_overrides


def _load_manifest(data_dir) -> dict:
    path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no manifest.json in {data_dir}; run 'csrr prepare' first")
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _load_split(data_dir, split: str, vocabulary, pad_length: int, max_conv: int):
    path = os.path.join(data_dir, f"{split}.jsonl")
    raw = corpus_mod.load_corpus(path, max_conversation_length=max_conv)
    return [corpus_mod.encode_conversation(c, vocabulary, pad_length) for c in raw]


# -- subcommands ----------------------------------------------------------------


def cmd_prepare(args) -> int:
    out_dir = args.output_dir
    if os.path.exists(out_dir) and os.listdir(out_dir) and not args.force:
        raise FileExistsError(f"output dir {out_dir} is not empty (use --force to overwrite)")
    os.makedirs(out_dir, exist_ok=True)
    ratios = _parse_ratios(args.ratios)
    conversations = corpus_mod.load_corpus(args.input, max_conversation_length=args.max_conv_length)
    train_set, valid_set, test_set = corpus_mod.split_corpus(conversations, ratios, seed=args.seed)
    vocabulary = corpus_mod.build_vocabulary(train_set, max_size=args.vocab_size, min_count=args.min_count)
    for name, split in (("train", train_set), ("valid", valid_set), ("test", test_set)):
        corpus_mod.write_corpus(os.path.join(out_dir, f"{name}.jsonl"), split)
    vocab_path = os.path.join(out_dir, "vocab.txt")
    vocabulary.save(vocab_path)
    manifest = {
        "input": str(args.input),
        "seed": args.seed,
        "ratios": list(ratios),
        "counts": {"train": len(train_set), "valid": len(valid_set), "test": len(test_set)},
        "vocab_size": vocabulary.vocab_size,
        "pad_length": args.pad_length,
        "max_conv_length": args.max_conv_length,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    log.info("prepared %s: %s", out_dir, manifest["counts"])
    print(json.dumps(manifest["counts"]))
    return 0


def cmd_train(args) -> int:
    manifest = _load_manifest(args.data_dir)
    vocab_path = os.path.join(args.data_dir, "vocab.txt")
    if not os.path.exists(vocab_path):
        raise FileNotFoundError(f"missing vocabulary file {vocab_path}")
    vocabulary = corpus_mod.Vocabulary.load(vocab_path)
    train_config, model_overrides = _train_configs(args.config)
    model_config = ModelConfig(
        vocab_size=vocabulary.vocab_size,
        pad_length=manifest["pad_length"],
        max_conv_length=manifest["max_conv_length"],
        mode=args.mode,
        **model_overrides,
    )
    pad, max_conv = manifest["pad_length"], manifest["max_conv_length"]
    train_set = _load_split(args.data_dir, "train", vocabulary, pad, max_conv)
    valid_set = _load_split(args.data_dir, "valid", vocabulary, pad, max_conv)

    run_dir = os.path.join(args.data_dir, f"run_{args.mode}")
    os.makedirs(run_dir, exist_ok=True)
    run_vocab = os.path.join(run_dir, "vocab.txt")
    if not os.path.exists(run_vocab):
        shutil.copyfile(vocab_path, run_vocab)

    resume_from = None
    if args.resume:
        resume_from = os.path.join(run_dir, "last.ckpt")
        if not os.path.exists(resume_from):
            raise FileNotFoundError(f"--resume given but {resume_from} does not exist")

    model = DialogueModel(model_config, seed=train_config.seed)
    result = train(
        model,
        train_set,
        valid_set,
        train_config,
        run_dir,
        resume_from=resume_from,
        vocab_hash=file_sha256(vocab_path),
    )
    log.info("trained %d steps, last loss %.4f", result.steps_run, result.last_loss)
    print(json.dumps({"steps": result.steps_run, "last_loss": result.last_loss,
                      "checkpoint": result.final_checkpoint, "metrics": result.metrics_path}))
    return 0


def cmd_generate(args) -> int:
    model, vocabulary, _ = load_model_for_inference(
        args.checkpoint, os.path.join(args.data_dir, "vocab.txt")
    )
    manifest = _load_manifest(args.data_dir)
    conversations = _load_split(
        args.data_dir, args.split, vocabulary, manifest["pad_length"], manifest["max_conv_length"]
    )
    opts = GenerationOptions(
        strategy=args.strategy,
        temperature=args.temperature,
        latent_mode=args.latent_mode,
        seed=args.seed,
    )
    responses, references = batch_generate(conversations, model, vocabulary, opts)
    with open(args.out, "w", encoding="utf-8") as f:
        f.writelines(line + "\n" for line in responses)
    refs_path = str(args.out) + ".refs"
    with open(refs_path, "w", encoding="utf-8") as f:
        f.writelines(line + "\n" for line in references)
    log.info("wrote %d responses to %s (references: %s)", len(responses), args.out, refs_path)
    print(json.dumps({"responses": str(args.out), "references": refs_path, "count": len(responses)}))
    return 0


def cmd_evaluate(args) -> int:
    table = metrics_mod.load_embeddings(args.embeddings)
    report = metrics_mod.evaluate(args.responses, args.references, table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
    print(report.format_table())
    return 0


def cmd_chat(args) -> int:
    model, vocabulary, _ = load_model_for_inference(args.checkpoint)
    session = Session(vocabulary=vocabulary, max_conv_length=model.config.max_conv_length)
    opts = GenerationOptions(
        strategy=args.strategy,
        temperature=args.temperature,
        latent_mode=args.latent_mode,
        seed=args.seed,
    )
    turn = 0
    print("csrr chat: /reset clears history, /quit exits", flush=True)
    for line in sys.stdin:
        text = line.strip()
        if not text:
            continue
        if text == "/quit":
            break
        if text == "/reset":
            session.history.clear()
            print("(history cleared)", flush=True)
            continue
        session.append("user", corpus_mod.encode_utterance_text(text, vocabulary, model.config.pad_length))
        per_turn = GenerationOptions(
            strategy=opts.strategy,
            temperature=opts.temperature,
            latent_mode=opts.latent_mode,
            seed=None if opts.seed is None else opts.seed + turn,
        )
        reply = generate_response(session.utterances(), model, vocabulary, per_turn)[0]
        session.append("model", corpus_mod.encode_utterance_text(reply.text, vocabulary, model.config.pad_length))
        print(reply.text, flush=True)
        turn += 1
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceRuntime, create_app

    runtime = ServiceRuntime.from_checkpoint(args.checkpoint)
    app = create_app(runtime)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csrr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="filter, split, and index a dialog corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=20000)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--pad-length", type=int, default=15)
    p.add_argument("--max-conv-length", type=int, default=10)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared data dir")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--config", default=None, help="flat key=value training config file")
    p.add_argument("--mode", choices=["csrr", "hred"], default="csrr")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate responses for a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=["greedy", "sample"], default="greedy")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent-mode", choices=["sample", "mean"], default="mean")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score responses against references")
    p.add_argument("--responses", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("chat", help="interactive terminal chat")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--latent-mode", choices=["sample", "mean"], default="sample")
    p.add_argument("--strategy", choices=["greedy", "sample"], default="greedy")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("serve", help="run the chat HTTP service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except Exception as exc:
        print(f"csrr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
