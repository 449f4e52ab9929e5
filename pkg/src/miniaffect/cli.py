"""Command-line entry point.

Every command resolves its configuration (flags > config file > preset
defaults), runs, and writes a ``manifest.json`` next to its outputs recording
the resolved config, input file hashes, output paths, seeds and wall time, so
any reported number can be traced back to its inputs and reproduced.

Exit codes: 0 success, 1 data/validation error, 2 usage error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .augment import AugmentationSpec, balanced_augment, random_augment
from .data import class_histogram, load_pool_tsv, load_task_tsv, save_dataset
from .ensemble import ensemble_classification, ensemble_regression
from .errors import ValidationError
from .metrics import build_report, confusion_csv, histogram_csv
from .predictions import (
    ClassificationPredictions,
    RegressionPredictions,
    read_predictions,
    write_predictions,
)
from .text import build_vocab, load_vocab, save_vocab
from .train import (
    load_checkpoint,
    make_config,
    predict,
    save_checkpoint,
    seed_sweep,
    train,
)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


class _Run:
    """Collects manifest fields while a command executes."""

    def __init__(self, args, command: str):
        self.command = command
        self.out_dir = Path(args.out)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.quiet = args.quiet
        self.started = time.perf_counter()
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.config: dict = {}
        self.seeds: list[int] = []
        self.seed_defaulted = False
        self.notes: dict = {}

    def add_input(self, path) -> Path:
        path = Path(path)
        self.inputs[str(path)] = _sha256(path)
        return path

    def out_path(self, name: str) -> Path:
        path = self.out_dir / name
        self.outputs.append(str(path))
        return path

    def say(self, message: str) -> None:
        if not self.quiet:
            print(message)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seeds": self.seeds,
            "seed_defaulted": self.seed_defaulted,
            "notes": self.notes,
            "wall_time_s": time.perf_counter() - self.started,
        }
        _write_text(self.out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _resolve_seed(run: _Run, seed: int | None, fallback: int = 0) -> int:
    if seed is None:
        run.seed_defaulted = True
        return fallback
    return seed


def cmd_ingest(args) -> None:
    run = _Run(args, "ingest")
    path = run.add_input(args.input)
    dataset = load_task_tsv(path, args.split)
    save_dataset(dataset, run.out_path("dataset.tsv"))
    run.config = {"split": args.split, "records": len(dataset)}
    if all(r.emotion is not None for r in dataset.records):
        hist = class_histogram(dataset)
        _write_text(run.out_path("histogram.csv"), histogram_csv(dataset))
        run.notes["histogram"] = hist
        run.say(f"{len(dataset)} records; histogram: {hist}")
    else:
        run.notes["histogram"] = "skipped: not all records carry emotion labels"
        run.say(f"{len(dataset)} records (no full emotion labeling, histogram skipped)")
    run.finish()


def cmd_augment(args) -> None:
    run = _Run(args, "augment")
    base = load_task_tsv(run.add_input(args.base), "train")
    pool = load_pool_tsv(run.add_input(args.pool))
    seed = _resolve_seed(run, args.seed)
    run.seeds = [seed]
    if args.scheme == "ba":
        if args.total is None:
            raise ValidationError("--scheme ba requires --total")
        spec = AugmentationSpec(scheme="ba", total_target=args.total, seed=seed)
        out = balanced_augment(base, pool, spec)
    else:
        if args.count is None:
            raise ValidationError("--scheme ra requires --count")
        spec = AugmentationSpec(scheme="ra", sample_count=args.count, seed=seed)
        out = random_augment(base, pool, spec)
    save_dataset(out, run.out_path("augmented.tsv"))
    run.config = {"scheme": args.scheme, "total": args.total, "count": args.count, "seed": seed}
    run.notes.update(out.meta)
    run.notes["records"] = len(out)
    run.say(f"wrote {len(out)} records ({args.scheme}, seed {seed})")
    run.finish()


def _load_file_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            loaded = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(loaded, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return loaded


def _resolve_train_config(args, run: _Run):
    file_cfg = _load_file_config(args.config)
    if args.config:
        run.add_input(args.config)

    def pick(flag, key, default=None):
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    task = pick(args.task, "task")
    epochs = pick(args.epochs, "epochs")
    if task is None or epochs is None:
        raise ValidationError("task and epochs are required (flag or config file)")
    seed = args.seed if args.seed is not None else file_cfg.get("seed")
    seed = _resolve_seed(run, seed)
    shuffle = file_cfg.get("shuffle", True)
    if args.no_shuffle:
        shuffle = False
    return make_config(
        task=task,
        epochs=epochs,
        preset=pick(args.preset, "preset", "desk_scale"),
        seed=seed,
        batch_size=pick(args.batch_size, "batch_size"),
        shuffle=shuffle,
        snapshot_metric=pick(args.snapshot_metric, "snapshot_metric"),
        optimizer=file_cfg.get("optimizer"),
        encoder=file_cfg.get("encoder"),
        vocab_max_size=file_cfg.get("vocab_max_size", 8000),
        vocab_min_freq=file_cfg.get("vocab_min_freq", 1),
    )


def cmd_train(args) -> None:
    run = _Run(args, "train")
    cfg = _resolve_train_config(args, run)
    train_set = load_task_tsv(run.add_input(args.train), "train")
    dev_set = load_task_tsv(run.add_input(args.dev), "dev")
    vocab = build_vocab(train_set, cfg.vocab_max_size, cfg.vocab_min_freq)
    ckpt, report = train(train_set, dev_set, vocab, cfg)
    save_checkpoint(ckpt, run.out_path("model.ckpt"))
    save_vocab(vocab, run.out_path("vocab.tsv"))
    _write_text(run.out_path("train_report.json"), json.dumps(report.to_dict(), indent=2) + "\n")
    run.config = ckpt.config.to_dict()
    run.seeds = [cfg.seed]
    best = "n/a" if report.best_metric is None else f"{report.best_metric:.4f}"
    run.say(f"trained {cfg.epochs} epochs; best {cfg.snapshot_metric} {best} at epoch {report.best_epoch}")
    run.finish()


def cmd_predict(args) -> None:
    run = _Run(args, "predict")
    ckpt = load_checkpoint(run.add_input(args.model))
    vocab = load_vocab(run.add_input(args.vocab))
    dataset = load_task_tsv(run.add_input(args.input), args.split)
    preds = predict(ckpt, dataset, vocab, clamp=args.clamp)
    write_predictions(preds, run.out_path("predictions.tsv"))
    run.config = {"task": ckpt.config.task, "clamp": args.clamp, "records": len(dataset)}
    run.say(f"wrote predictions for {len(dataset)} records ({ckpt.config.task})")
    run.finish()


def cmd_ensemble(args) -> None:
    run = _Run(args, "ensemble")
    members = [read_predictions(run.add_input(p)) for p in args.files]
    if args.task == "regression":
        if not all(isinstance(m, RegressionPredictions) for m in members):
            raise ValidationError("regression ensemble requires regression prediction files")
        merged = ensemble_regression(members)
        write_predictions(merged, run.out_path("ensemble.tsv"))
    else:
        if not all(isinstance(m, ClassificationPredictions) for m in members):
            raise ValidationError("classification ensemble requires classification prediction files")
        combined = ensemble_classification(members, score_space=args.space)
        write_predictions(
            ClassificationPredictions(ids=combined.ids, scores=combined.normalized, labels=combined.labels),
            run.out_path("ensemble.tsv"),
        )
        write_predictions(
            ClassificationPredictions(ids=combined.ids, scores=combined.summed, labels=combined.labels),
            run.out_path("ensemble_summed.tsv"),
        )
    run.config = {"task": args.task, "space": args.space, "members": len(members)}
    run.say(f"combined {len(members)} member files")
    run.finish()


def cmd_eval(args) -> None:
    run = _Run(args, "eval")
    preds = read_predictions(run.add_input(args.pred))
    gold = load_task_tsv(run.add_input(args.gold), args.split)
    report = build_report(args.task, preds, gold)
    _write_text(run.out_path("report.json"), report.to_json())
    if args.task == "classification":
        _write_text(run.out_path("confusion.csv"), confusion_csv(report.confusion))
        _write_text(run.out_path("confusion_normalized.csv"), confusion_csv(report.confusion_normalized))
        _write_text(run.out_path("histogram.csv"), histogram_csv(gold))
    run.config = {"task": args.task, "n": report.n}
    summary = {k: v for k, v in report.to_dict().items() if isinstance(v, float)}
    run.say(f"eval over {report.n} records: " + json.dumps(summary, sort_keys=True))
    run.finish()


def cmd_seed_sweep(args) -> None:
    run = _Run(args, "seed-sweep")
    cfg = _resolve_train_config(args, run)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    except ValueError:
        raise ValidationError(f"--seeds must be a comma-separated integer list, got {args.seeds!r}") from None
    train_set = load_task_tsv(run.add_input(args.train), "train")
    dev_set = load_task_tsv(run.add_input(args.dev), "dev")
    vocab = build_vocab(train_set, cfg.vocab_max_size, cfg.vocab_min_freq)
    report = seed_sweep(train_set, dev_set, vocab, cfg, seeds)
    _write_text(run.out_path("sweep.json"), json.dumps(report.to_dict(), indent=2) + "\n")
    run.config = cfg.to_dict()
    run.seeds = seeds
    run.say(
        f"swept {len(seeds)} seeds: mean {report.mean:.4f} std {report.std:.4f}"
        f" min {report.min:.4f} max {report.max:.4f}"
    )
    run.finish()


_REPORT_COLUMNS = ("pearson_empathy", "pearson_distress", "pearson_avg", "accuracy", "macro_f1")


def cmd_report(args) -> None:
    run = _Run(args, "report")
    rows = []
    for path in args.files:
        payload = json.loads(Path(run.add_input(path)).read_text(encoding="utf-8"))
        rows.append((Path(path).stem, payload))
    columns = [c for c in _REPORT_COLUMNS if any(c in payload for _, payload in rows)]
    lines = ["| run | task | n | " + " | ".join(columns) + " |"]
    lines.append("|" + "---|" * (len(columns) + 3))
    for name, payload in rows:
        cells = [name, str(payload.get("task", "?")), str(payload.get("n", "?"))]
        for c in columns:
            value = payload.get(c)
            cells.append("-" if value is None else f"{value:.4f}")
        lines.append("| " + " | ".join(cells) + " |")
    table = "\n".join(lines) + "\n"
    _write_text(run.out_path("report.md"), table)
    run.config = {"reports": len(rows)}
    run.say(table.rstrip("\n"))
    run.finish()


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0, noted in the manifest)")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", required=True, help="training TSV")
    p.add_argument("--dev", required=True, help="development TSV")
    p.add_argument("--task", choices=["empathy", "distress", "multitask", "emotion"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--preset", choices=["paper_faithful", "desk_scale"], default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--snapshot-metric", default=None)
    p.add_argument("--no-shuffle", action="store_true", help="disable per-epoch shuffling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miniaffect", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"miniaffect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a TSV and emit its class histogram")
    p.add_argument("--input", required=True)
    p.add_argument("--split", choices=["train", "dev", "test", "derived"], default="train")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("augment", help="combine a base set with an external pool")
    p.add_argument("--scheme", choices=["ba", "ra"], required=True, help="ba: balanced top-up, ra: random draw")
    p.add_argument("--base", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--total", type=int, default=None, help="balanced output size (ba)")
    p.add_argument("--count", type=int, default=None, help="number of pool records to append (ra)")
    _add_common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train a model and keep the best-on-dev snapshot")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run a checkpoint over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--split", choices=["train", "dev", "test", "derived"], default="test")
    p.add_argument("--clamp", action="store_true", help="clip regression outputs into [1, 7]")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ensemble", help="combine member prediction files")
    p.add_argument("--task", choices=["regression", "classification"], required=True)
    p.add_argument("--space", choices=["probability", "logit"], default="probability")
    p.add_argument("files", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--task", choices=["regression", "classification"], required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--split", choices=["train", "dev", "test", "derived"], default="dev")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("seed-sweep", help="train across seeds and summarize metric spread")
    _add_train_flags(p)
    p.add_argument("--seeds", required=True, help="comma-separated seed list")
    _add_common(p)
    p.set_defaults(func=cmd_seed_sweep)

    p = sub.add_parser("report", help="tabulate one or more eval report JSONs")
    p.add_argument("files", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    try:
        args.func(args)
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
