"""Command-line entry points: preprocess, synth, train, evaluate, recommend.

Flag precedence: explicit CLI flags > values from a JSON --config file >
built-in defaults.  Every command exits 0 on success and 1 with a one-line
diagnostic otherwise.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Dict

import numpy as np

from . import data, evaluate as eval_mod, train as train_mod
from .graph import SessionRecord, build_session_graph
from .model import forward_session, score_items

log = logging.getLogger(__name__)

TEST_WINDOW_DAYS = {"yoochoose": 1.0, "diginetica": 7.0, "generic": 1.0}


def _merged(args: argparse.Namespace, defaults: Dict) -> Dict:
    """defaults <- config file <- explicitly passed flags (None means unset)."""
    merged = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path, encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def cmd_preprocess(args) -> int:
    opts = _merged(args, {
        "min_session_len": 2,
        "min_item_freq": 5,
        "test_window_days": TEST_WINDOW_DAYS[args.format],
    })
    events = data.parse_clicklog(args.input, args.format)
    fraction = float(Fraction(args.fraction)) if args.fraction else None
    split = data.preprocess(
        events,
        min_session_len=opts["min_session_len"],
        min_item_freq=opts["min_item_freq"],
        test_window_seconds=int(opts["test_window_days"] * 86400),
        fraction=fraction,
    )
    data.save_split(split, args.outdir)
    print(f"items={len(split.item_vocabulary)} "
          f"train_sessions={len(split.train)} test_sessions={len(split.test)} "
          f"-> {args.outdir}")
    return 0


def cmd_synth(args) -> int:
    synth = data.generate_synthetic(
        args.items, args.sessions, args.seed, interval_signal=args.interval_signal
    )
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    with open(outdir / "clicks.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["session_id", "item_id", "timestamp"])
        for rec in synth.records:
            for item, ts in rec.events:
                w.writerow([rec.session_id, item, ts])
    np.savetxt(outdir / "transitions.csv", synth.transition, delimiter=",")

    # ready-to-train split: most recent 20% of sessions held out
    ordered = sorted(synth.records, key=lambda r: (r.events[-1][1], r.session_id))
    n_test = max(1, len(ordered) // 5)
    split = data.DatasetSplit(
        train=ordered[:-n_test],
        test=ordered[-n_test:],
        item_vocabulary={it: i for i, it in enumerate(synth.items)},
    )
    split.test = [r for r in split.test
                  if all(it in split.item_vocabulary for it, _ in r.events)]
    data.save_split(split, outdir)
    print(f"items={args.items} sessions={args.sessions} "
          f"(train={len(split.train)} test={len(split.test)}) -> {outdir}")
    return 0


TRAIN_DEFAULTS = {
    "dim": 60, "lr": 0.01, "epochs": 30, "batch": 64,
    "lambda_s": 0.1, "lambda_v": 0.1, "layers": 1, "attention_sign": "+1",
    "seed": 0, "tau": 60.0, "cap": 86400.0, "neighborhood": "in",
    "retraction": "project", "augment_prefixes": False,
    "margin_negatives": False, "margin": 1.0,
}


def _config_from(opts: Dict) -> train_mod.TrainConfig:
    return train_mod.TrainConfig(
        dim=opts["dim"],
        learning_rate=opts["lr"],
        epochs=opts["epochs"],
        batch_size=opts["batch"],
        lambda_s=opts["lambda_s"],
        lambda_v=opts["lambda_v"],
        seed=opts["seed"],
        attention_sign=float(opts["attention_sign"]),
        layers=opts["layers"],
        tau=opts["tau"],
        cap=opts["cap"],
        neighborhood=opts["neighborhood"],
        retraction=opts["retraction"],
        augment_prefixes=opts["augment_prefixes"],
        margin_negatives=opts["margin_negatives"],
        margin=opts["margin"],
    )


def cmd_train(args) -> int:
    opts = _merged(args, TRAIN_DEFAULTS)
    config = _config_from(opts)
    split = data.load_split(args.data)
    examples = train_mod.examples_from_records(
        split.train, config.normalizer(), augment_prefixes=config.augment_prefixes
    )
    if not examples:
        raise ValueError(f"no trainable sessions in {args.data}")
    vocab = sorted(split.item_vocabulary, key=split.item_vocabulary.get)
    result = train_mod.fit(examples, config, vocab=vocab,
                           categories=split.category_map)
    train_mod.save_checkpoint(args.checkpoint, result.params, config)
    print(f"examples={len(examples)} epochs={config.epochs} "
          f"first_loss={result.epoch_losses[0]:.6f} "
          f"final_loss={result.epoch_losses[-1]:.6f} -> {args.checkpoint}")
    return 0


def cmd_evaluate(args) -> int:
    opts = _merged(args, {"k": 20})
    params, config = train_mod.load_checkpoint(args.checkpoint)
    split = data.load_split(args.data)
    report = eval_mod.evaluate(params, split.test, opts["k"], config.normalizer())

    print(f"{'metric':<12}{'value':>12}")
    print(f"{'-' * 24}")
    print(f"{'MRR@' + str(report.k):<12}{report.mrr_at_k:>12.4f}")
    print(f"{'P@' + str(report.k):<12}{report.p_at_k:>12.4f}")
    print(f"{'n_test':<12}{report.n_test:>12d}")
    print(f"{'skipped':<12}{report.skipped:>12d}")
    print(f"{'wall_time_s':<12}{report.wall_time:>12.2f}")

    if args.report:
        with open(args.report, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["field", "value"])
            w.writerows(report.csv_rows())
        print(f"report -> {args.report}")
    return 0


def _parse_session(text: str) -> SessionRecord:
    events = []
    for part in text.split(","):
        item, _, ts = part.strip().rpartition(":")
        if not item:
            raise ValueError(f"bad session event {part!r}, expected item:timestamp")
        events.append((item, int(ts)))
    return SessionRecord("query", events)


def cmd_recommend(args) -> int:
    opts = _merged(args, {"k": 20})
    params, config = train_mod.load_checkpoint(args.checkpoint)
    record = _parse_session(args.session)
    unknown = [it for it, _ in record.events if it not in params.item_index]
    if unknown:
        raise ValueError(f"unknown items: {unknown}")
    if args.at_time < record.events[-1][1]:
        raise ValueError("--at-time precedes the session's last event")

    norm = config.normalizer()
    g = build_session_graph(record, norm, min_events=1)
    t_norm = norm(args.at_time - record.events[-1][1])
    fw = forward_session(g, t_norm, params)
    ranking = score_items(fw.item_future, params, k=opts["k"])

    print(f"{'rank':<6}{'item':<16}{'distance':>12}")
    print("-" * 34)
    for pos, (item, dist) in enumerate(ranking.entries, start=1):
        print(f"{pos:<6}{item:<16}{dist:>12.6f}")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "item_id", "distance"])
            for pos, (item, dist) in enumerate(ranking.entries, start=1):
                w.writerow([pos, item, repr(dist)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypersess",
        description="Time-aware hyperbolic session recommendation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter and split a click log")
    p.add_argument("--format", required=True, choices=data.FORMATS)
    p.add_argument("--input", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--fraction", choices=["1/64", "1/4"], default=None)
    p.add_argument("--min-session-len", dest="min_session_len", type=int)
    p.add_argument("--min-item-freq", dest="min_item_freq", type=int)
    p.add_argument("--test-window-days", dest="test_window_days", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="generate a planted synthetic dataset")
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--sessions", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--interval-signal", dest="interval_signal", action="store_true")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model on a preprocessed split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lambda-s", dest="lambda_s", type=float)
    p.add_argument("--lambda-v", dest="lambda_v", type=float)
    p.add_argument("--layers", type=int)
    p.add_argument("--attention-sign", dest="attention_sign", choices=["+1", "-1"])
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--cap", type=float)
    p.add_argument("--neighborhood", choices=["in", "out", "both"])
    p.add_argument("--retraction", choices=["project", "exp"])
    p.add_argument("--augment-prefixes", dest="augment_prefixes",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--margin-negatives", dest="margin_negatives",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--margin", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--report")
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("recommend", help="rank items for a live session query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--session", required=True,
                   help='comma-separated "item:timestamp" events')
    p.add_argument("--at-time", dest="at_time", type=int, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--csv")
    p.add_argument("--config")
    p.set_defaults(func=cmd_recommend)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
