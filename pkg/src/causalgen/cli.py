"""Command-line entry point: prepare, train, sample, bench, plot."""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys

import numpy as np

from .bench import run_scaling
from .checkpoint import load_checkpoint
from .config import parse_config
from .data import CharTokenizer, load_store, prepare
from .errors import CausalGenError
from .model import generate
from .svg import PlotSpec, plot_loss_curves
from .tensor import set_default_dtype
from .training import train


def cmd_prepare(args):
    store = prepare(args.input, args.out)
    print(
        f"prepared vocab={store.vocab_size} train_tokens={len(store.train_ids)} "
        f"val_tokens={len(store.val_ids)} out={args.out}"
    )
    return 0


def cmd_train(args):
    overrides = list(args.set or [])
    if args.out:
        overrides.append(f"out_dir={args.out}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.deterministic:
        overrides.append("deterministic=true")
    cfg = parse_config(args.config, overrides)
    set_default_dtype(np.float64 if cfg.precision == 64 else np.float32)
    store = load_store(cfg.data_dir)
    if not cfg.vocab_size:
        cfg.vocab_size = store.vocab_size
    model_cfg = cfg.model_config()
    cfg.write_resolved(cfg.out_dir)
    shutil.copyfile(os.path.join(cfg.data_dir, "vocab.json"), os.path.join(cfg.out_dir, "vocab.json"))
    result = train(model_cfg, cfg.train_config(), cfg.out_dir, store, resume=args.resume,
                   echo=lambda line: print(line, flush=True))
    print(f"done iters={result.iterations} final_val={result.final_val:.4f} best_val={result.best_val:.4f}")
    return 0


def _tokenizer_for(ckpt_path, data_dir):
    candidates = [os.path.join(os.path.dirname(os.path.abspath(ckpt_path)), "vocab.json")]
    if data_dir:
        candidates.insert(0, os.path.join(data_dir, "vocab.json"))
    for path in candidates:
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                return CharTokenizer(json.load(fh)["chars"])
    raise CausalGenError(f"no vocab.json next to {ckpt_path}; pass --data-dir")


def cmd_sample(args):
    model = load_checkpoint(args.ckpt)
    tok = _tokenizer_for(args.ckpt, args.data_dir)
    newline = tok.stoi.get("\n", 0)
    ids = generate(model, tok.encode(args.prompt), args.num, temperature=args.temperature,
                   top_k=args.top_k, seed=args.seed, empty_id=newline)
    sys.stdout.write(tok.decode(ids) + "\n")
    return 0


def _int_list(text):
    return [int(t) for t in text.split(",") if t]


def cmd_bench(args):
    report = run_scaling(args.mixers.split(","), _int_list(args.T), d=args.d, repetitions=args.reps,
                         seed=args.seed, n_head=args.n_head, batch=args.batch)
    os.makedirs(args.out, exist_ok=True)
    report.write_csv(os.path.join(args.out, "scaling.csv"))
    report.write_svg(os.path.join(args.out, "scaling.svg"))
    for note in report.notes:
        print(f"note: {note}")
    for kind, slope in report.slopes.items():
        print(f"mixer={kind} slope={slope:.3f}")
    return 0


def cmd_plot(args):
    inputs = []
    for item in args.csv:
        path, sep, label = item.partition(":")
        if not sep:
            label = os.path.basename(os.path.dirname(os.path.abspath(path))) or path
        inputs.append((path, label))
    plot_loss_curves(PlotSpec(inputs, args.out, split=args.split, title=args.title or ""))
    print(f"wrote {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="causalgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="encode a text corpus into the binary token cache")
    p.add_argument("--input", required=True, help="path or http(s) URL of a UTF-8 text file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model from a config file or bundled preset")
    p.add_argument("--config", help="config path or preset name (e.g. small_attention)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--out", help="run directory (overrides out_dir)")
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true", help="write zero timings so logs are byte-stable")
    p.add_argument("--resume", action="store_true", help="continue from ckpt_last.bin in the run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate text from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--num", type=int, default=200, help="number of new characters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prompt", default="")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--data-dir", default=None, help="where vocab.json lives if not next to the checkpoint")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bench", help="measure mixer time versus sequence length")
    p.add_argument("--mixers", default="attention,causal_max,causal_max_context")
    p.add_argument("--T", default="64,128,256,512,1024")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--n-head", type=int, default=4)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="draw loss curves from loss.csv files as SVG")
    p.add_argument("--csv", action="append", required=True, metavar="PATH[:LABEL]")
    p.add_argument("--split", default="val", choices=["train", "val"])
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CausalGenError, OSError, IndexError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
