"""``trifuse`` command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 adapter error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, flag_name, leaves, load_config
from .data import read_manifest, segment_records, split_records, write_manifest
from .errors import AdapterError, DataError, TrifuseError, UsageError
from .experiments import run_fusion_comparison, run_modality_ablation
from .fusion import Modality, Strategy, load_checkpoint, parse_modalities, save_checkpoint
from .ingest import FeatureConfig, Resolver, extract_all, write_jsonl
from .metrics import EvalReport
from .plotting import plot_confusion, plot_experiment, plot_loss, plot_run
from .summarize import MockCaptioner, SubprocessCaptioner, pipeline_run
from .synthetic import MediaSpec, SynthSpec, synth_dataset, synth_media
from .training import TrainConfig, evaluate, train

log = logging.getLogger("trifuse")

COMMANDS = ("segment", "extract", "train", "eval", "compare", "ablate", "run", "synth")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file (flags override it)")
    for dotted, default, kind in leaves():
        extra = {}
        if dotted == "strategy":
            extra["choices"] = [s.value for s in Strategy]
        shown = ",".join(map(str, default)) if kind is list else default
        p.add_argument(
            flag_name(dotted),
            dest="opt:" + dotted,
            default=argparse.SUPPRESS,
            metavar=kind.__name__.upper(),
            help=f"default: {shown!r}" if shown != "" else None,
            **extra,
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trifuse", description="Tri-modal explicit-segment classification and summarisation.")
    parser.add_argument("--version", action="version", version=f"trifuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "segment": "cut source videos into <= max_len_s segments",
        "extract": "write one feature file per (segment, modality)",
        "train": "train a fusion model on the train split",
        "eval": "score a checkpoint on the test split",
        "compare": "compare the three fusion strategies over seeds",
        "ablate": "concatenation models on every modality subset",
        "run": "classify segments and summarise the explicit ones",
        "synth": "emit the synthetic dataset (features, or media with --synth.media true)",
    }
    for name in COMMANDS:
        _add_config_flags(sub.add_parser(name, help=helps[name], description=helps[name]))
    return parser


def resolve_config(args) -> RunConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("opt:")}
    return load_config(args.config, overrides)


# -- helpers -----------------------------------------------------------------


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def _echo_config(cfg: RunConfig, out: Path, command: str):
    doc = {"command": command, "config": cfg.to_dict()}
    _write(out / f"{command}.config.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _require(value, flag):
    if not value:
        raise UsageError(f"{flag} is required for this command")
    return value


def _feature_config(cfg: RunConfig) -> FeatureConfig:
    f = cfg.features
    return FeatureConfig(f.n_fft, f.hop, f.n_mels, f.fmin, f.fmax, f.text_dim, f.frame_rate)


def _train_config(cfg: RunConfig, **over) -> TrainConfig:
    kw = dict(
        strategy=Strategy.parse(cfg.strategy),
        modalities=parse_modalities(cfg.modalities),
        epochs=cfg.train.epochs,
        lr=cfg.train.lr,
        momentum=cfg.train.momentum,
        seed=cfg.seed,
        d=cfg.model.d,
        h=cfg.model.h,
        standardize=cfg.train.standardize,
    )
    kw.update(over)
    return TrainConfig(**kw)


def _synth_spec(cfg: RunConfig) -> SynthSpec:
    s = cfg.synth
    return SynthSpec(
        n_train=s.n_train,
        n_test=s.n_test,
        explicit_prior=s.explicit_prior,
        widths={"video": s.width_video, "audio": s.width_audio, "language": s.width_language},
        separation={"video": s.sep_video, "audio": s.sep_audio, "language": s.sep_language},
        mode=s.mode,
    )


def _load_split(cfg, split, modalities, resolver=None):
    records = split_records(read_manifest(_require(cfg.manifest, "--manifest")), split)
    if not records:
        raise DataError(f"manifest {cfg.manifest} has no rows in the {split!r} split")
    resolver = resolver or Resolver(_feature_config(cfg))
    for r in records:
        resolver.attach(r, modalities)
    return records


def _dataset(cfg: RunConfig, modalities):
    if cfg.manifest:
        resolver = Resolver(_feature_config(cfg))
        fixed = (_load_split(cfg, "train", modalities, resolver), _load_split(cfg, "test", modalities, resolver))
        return fixed, "manifest"
    spec = _synth_spec(cfg)
    return (lambda seed: synth_dataset(spec, seed)), "synthetic (one draw per seed)"


# -- commands ------------------------------------------------------------------


def cmd_synth(cfg: RunConfig) -> int:
    out = _out(cfg)
    if cfg.synth.media:
        path = synth_media(out, MediaSpec(n_sources=cfg.synth.n_sources), cfg.seed)
        print(f"wrote {path}")
        return 0
    train_set, test_set = synth_dataset(_synth_spec(cfg), cfg.seed)
    records = train_set + test_set
    for m in Modality:
        path = write_jsonl(
            out / "features" / f"{m.value}.jsonl",
            [
                {"segment_id": r.segment_id, "modality": m.value, "dim": len(r.features[m]), "values": r.features[m].tolist()}
                for r in records
            ],
        )
        for r in records:
            r.refs[m] = str(path)
    path = write_manifest(out / "manifest.csv", records)
    print(f"wrote {path} ({len(train_set)} train / {len(test_set)} test segments)")
    return 0


def _read_durations(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"durations file not found: {p}") from None
    if p.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"{p}: invalid JSON ({exc.msg})") from None
        if not isinstance(doc, dict):
            raise DataError(f"{p}: expected an object mapping source_id to seconds")
        items = doc.items()
    else:
        rows = list(csv.reader(io.StringIO(text)))
        if rows and rows[0] and rows[0][0] == "source_id":
            rows = rows[1:]
        items = [(r[0], r[1]) for r in rows if r]
    out = {}
    for k, v in items:
        try:
            out[str(k)] = float(v)
        except (TypeError, ValueError):
            raise DataError(f"{p}: duration for {k!r} is not a number") from None
    return out


def cmd_segment(cfg: RunConfig) -> int:
    out = _out(cfg)
    sources = read_manifest(_require(cfg.manifest, "--manifest"))
    durations = _read_durations(cfg.durations) if cfg.durations else None
    records = segment_records(sources, cfg.segment.max_len_s, cfg.segment.min_tail_s, durations)
    path = write_manifest(out / "segments.csv", records)
    print(f"wrote {path} ({len(records)} segments from {len(sources)} sources)")
    return 0


def cmd_extract(cfg: RunConfig) -> int:
    out = _out(cfg)
    records = read_manifest(_require(cfg.manifest, "--manifest"))
    updated, outcome = extract_all(records, out / "features", _feature_config(cfg))
    path = write_manifest(out / "features.csv", updated)
    _write(out / "extract_summary.json", json.dumps(outcome.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(outcome.written)} feature files; manifest {path}")
    for f in outcome.failures:
        print(f"FAILED {f['segment_id']} [{f['modality']}]: {f['error']}", file=sys.stderr)
    return DataError.exit_code if outcome.failures else 0


def cmd_train(cfg: RunConfig) -> int:
    out = _out(cfg)
    tc = _train_config(cfg)
    records = _load_split(cfg, "train", tc.modalities)
    result = train(tc, records)
    save_checkpoint(result.model, out / "model.json")
    log_doc = {
        "strategy": tc.strategy.value,
        "modalities": [m.value for m in tc.modalities],
        "seed": tc.seed,
        "n_train": len(records),
        "initial_loss": result.initial_loss,
        "loss_trace": result.loss_trace,
    }
    _write(out / "train_log.json", json.dumps(log_doc, indent=2, sort_keys=True) + "\n")
    _write(out / "train_loss.csv", "epoch,mean_loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(result.loss_trace, 1)))
    plot_loss(result.loss_trace, out / "train_loss.png", result.initial_loss, f"{tc.strategy.label} (seed {tc.seed})")
    print(f"wrote {out / 'model.json'} (final mean loss {result.loss_trace[-1]:.6f})")
    return 0


def _eval_text(rep: EvalReport, n: int, strategy: str) -> str:
    cm = rep.confusion
    lines = [
        f"held-out evaluation: {strategy}, {n} segments",
        "",
        f"{'metric':<12}{'value':>8}",
        f"{'F1-Micro':<12}{rep.f1_micro:>8.4f}",
        f"{'F1-Macro':<12}{rep.f1_macro:>8.4f}",
        f"{'F1-Weighted':<12}{rep.f1_weighted:>8.4f}",
        "",
        f"{'class':<14}{'precision':>10}{'recall':>8}{'f1':>8}{'support':>9}",
    ]
    for name, s in zip(("non-explicit", "explicit"), rep.per_class):
        lines.append(f"{name:<14}{s.precision:>10.4f}{s.recall:>8.4f}{s.f1:>8.4f}{s.support:>9d}")
    lines += ["", "confusion [true][pred]:", f"  {cm[0][0]:>5d} {cm[0][1]:>5d}", f"  {cm[1][0]:>5d} {cm[1][1]:>5d}"]
    return "\n".join(lines) + "\n"


def cmd_eval(cfg: RunConfig) -> int:
    out = _out(cfg)
    model = load_checkpoint(_require(cfg.checkpoint, "--checkpoint"))
    records = _load_split(cfg, "test", model.modalities)
    rep = evaluate(model, records)
    doc = {"split": "held-out", "strategy": model.strategy.value, "n": len(records), **rep.to_dict()}
    _write(out / "eval.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write(out / "eval.txt", _eval_text(rep, len(records), model.strategy.label))
    _write(
        out / "eval.csv",
        "metric,value\n" + "".join(f"{m},{getattr(rep, m)!r}\n" for m in ("f1_micro", "f1_macro", "f1_weighted")),
    )
    plot_confusion(rep.confusion, out / "confusion.png")
    print(_eval_text(rep, len(records), model.strategy.label), end="")
    return 0


def _emit_experiment(report, out: Path, stem: str, source: str):
    report.config["data"] = source
    _write(out / f"{stem}.json", report.to_json())
    _write(out / f"{stem}.txt", report.to_text())
    _write(out / f"{stem}.csv", report.to_csv())
    plot_experiment(report, out / f"{stem}.png")
    print(report.to_text(), end="")


def cmd_compare(cfg: RunConfig) -> int:
    out = _out(cfg)
    tc = _train_config(cfg, strategy=Strategy.CONCATENATION)
    dataset, source = _dataset(cfg, tc.modalities)
    strategies = [s for s in Strategy if s is not Strategy.COMBINATORIAL or len(tc.modalities) >= 2]
    report = run_fusion_comparison(dataset, cfg.train.seeds, tc, strategies)
    _emit_experiment(report, out, "compare", source)
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    out = _out(cfg)
    tc = _train_config(cfg, strategy=Strategy.CONCATENATION, modalities=tuple(Modality))
    dataset, source = _dataset(cfg, tuple(Modality))
    report = run_modality_ablation(dataset, cfg.train.seeds, tc)
    _emit_experiment(report, out, "ablate", source)
    return 0


def _captioner(cfg: RunConfig):
    s = cfg.summarize
    return SubprocessCaptioner(s.captioner_cmd, s.timeout_s) if s.captioner_cmd.strip() else MockCaptioner()


def _run_text(doc) -> str:
    rows = doc["segments"]
    w = max([len("segment")] + [len(r["segment_id"]) for r in rows])
    lines = [
        f"pipeline run: {doc['strategy']} on {', '.join(doc['modalities'])}",
        f"{doc['n_segments']} segments, {doc['n_explicit']} explicit, {doc['captioner_calls']} captioner calls, {doc['n_errors']} errors",
        "",
        f"{'segment':<{w}}  {'start':>8}  {'end':>8}  {'p_explicit':>10}  prediction",
    ]
    for r in rows:
        p = "-" if r["p_explicit"] is None else f"{r['p_explicit']:.4f}"
        pred = r["prediction"] or "error"
        lines.append(f"{r['segment_id']:<{w}}  {r['start_s']:>8.2f}  {r['end_s']:>8.2f}  {p:>10}  {pred}")
    summaries = [r for r in rows if r["summary"] is not None]
    if summaries:
        lines += ["", "summaries:"]
        for r in summaries:
            lines.append(f"  {r['segment_id']} [{r['start_s']:.2f}, {r['end_s']:.2f}): {r['summary']}")
    errors = [r for r in rows if "error" in r]
    if errors:
        lines += ["", "errors:"]
        for r in errors:
            lines.append(f"  {r['segment_id']}: {r['error']['kind']}: {r['error']['message']}")
    return "\n".join(lines) + "\n"


def cmd_run(cfg: RunConfig) -> int:
    out = _out(cfg)
    model = load_checkpoint(_require(cfg.checkpoint, "--checkpoint"))
    records = read_manifest(_require(cfg.manifest, "--manifest"))
    captioner = _captioner(cfg)
    results = pipeline_run(
        records,
        model,
        captioner,
        chunk_len_s=cfg.summarize.chunk_len_s,
        workers=cfg.summarize.workers,
        resolver=Resolver(_feature_config(cfg)),
    )
    rows = [r.to_dict() for r in results]
    doc = {
        "strategy": model.strategy.value,
        "modalities": [m.value for m in model.modalities],
        "chunk_len_s": cfg.summarize.chunk_len_s,
        "captioner": "subprocess" if cfg.summarize.captioner_cmd.strip() else "mock",
        "captioner_calls": captioner.calls,
        "n_segments": len(rows),
        "n_explicit": sum(r.explicit for r in results),
        "n_errors": sum(r.error is not None for r in results),
        "segments": rows,
    }
    _write(out / "run.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write(out / "run.txt", _run_text(doc))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["segment_id", "source_id", "start_s", "end_s", "prediction", "p_explicit", "summary", "error"])
    for r in rows:
        wr.writerow(
            [
                r["segment_id"],
                r["source_id"],
                repr(r["start_s"]),
                repr(r["end_s"]),
                r["prediction"] or "",
                "" if r["p_explicit"] is None else repr(r["p_explicit"]),
                r["summary"] or "",
                r["error"]["message"] if "error" in r else "",
            ]
        )
    _write(out / "run.csv", buf.getvalue())
    plot_run(results, out / "run.png")
    print(_run_text(doc), end="")
    kinds = {r.error_kind for r in results if r.error is not None}
    if "AdapterError" in kinds:
        return AdapterError.exit_code
    return DataError.exit_code if kinds else 0


HANDLERS = {
    "segment": cmd_segment,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "ablate": cmd_ablate,
    "run": cmd_run,
    "synth": cmd_synth,
}


def _setup_logging():
    level = os.environ.get("TRIFUSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else 0
    try:
        cfg = resolve_config(args)
        out = _out(cfg)
        _echo_config(cfg, out, args.command)
        return HANDLERS[args.command](cfg)
    except TrifuseError as exc:
        print(f"trifuse {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
