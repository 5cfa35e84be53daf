"""Command-line entry point: ``uafd <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import SuiteConfig, load_config
from .errors import UafdError
from .models import Architecture, ModelSpec, TrainConfig, build, save_checkpoint, train
from .noise import NoiseKind, NoiseSpec
from .signal import (build_dataset, generate_synthetic, load_dataset, load_directory, save_dataset,
                     synthetic_series, write_series)
from .verify import TOL_64, model_check, primitive_checks

log = logging.getLogger("uafd")


def _config(path) -> SuiteConfig:
    return load_config(path) if path else SuiteConfig()


def cmd_synth(args) -> int:
    if args.series_dir:
        for s in synthetic_series(args.classes, args.length, args.seed):
            write_series(s, args.series_dir, args.format)
        print(f"wrote {args.classes} series to {args.series_dir}")
    if args.out:
        ds = generate_synthetic(args.classes, args.per_class, args.window, args.seed)
        save_dataset(ds, args.out)
        print(f"wrote {len(ds)} bursts ({args.classes} classes) to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    series = load_directory(args.dir)
    ds = build_dataset(series, args.window, args.shift, args.per_class, args.classes)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} bursts, class counts {list(ds.class_counts)} to {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    spec = ModelSpec(Architecture.parse(args.model), ds.num_classes, args.scale)
    model, losses = train(build(spec, args.seed), ds,
                          TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed))
    save_checkpoint(model, args.out)
    print(f"{spec.architecture_id.value}: final loss {losses[-1]:.4f}, "
          f"train accuracy {model.accuracy_history[-1]:.4f}; saved {args.out}")
    return 0


def _write(suite, cfg, out_dir) -> None:
    for path in pipeline.write_outputs(suite, out_dir, cfg.output.formats):
        print(f"wrote {path}")
    c = suite.conservativeness
    print(f"tau1 <= tau2 in {c['n_tau1_le_tau2']} of {c['n_scenarios']} scenarios "
          f"({c['fraction_tau1_le_tau2']:.4f})")


def cmd_scenario(args) -> int:
    cfg = _config(args.config)
    out_dir = Path(args.out or cfg.output.directory)
    if args.holdout is not None:
        spec = pipeline.ScenarioSpec(pipeline.EPISTEMIC, args.model, holdout_class=args.holdout,
                                     seed=cfg.seed, scale=cfg.models.scale)
    elif args.noise and args.snr is not None:
        noise = NoiseSpec(NoiseKind.parse(args.noise), args.snr, cfg.noise.impulse_p, cfg.noise.weibull_k)
        spec = pipeline.ScenarioSpec(pipeline.ALEATORIC, args.model, noise=noise,
                                     seed=cfg.seed, scale=cfg.models.scale)
    else:
        print("scenario needs --holdout, or --noise together with --snr", file=sys.stderr)
        return 2
    hist = out_dir / "histograms" if cfg.output.histograms else None
    ctx = pipeline.make_context(cfg, pipeline.load_corpus(cfg), hist)
    report = pipeline.run_scenario(spec, ctx)
    suite = pipeline.SuiteReport(cfg.experiment_dict(), [report], timing=cfg.output.timing == "wall")
    _write(suite, cfg, out_dir)
    return 0


def cmd_suite(args) -> int:
    cfg = _config(args.config)
    out_dir = Path(args.out or cfg.output.directory)
    suite = pipeline.run_suite(cfg, out_dir=out_dir)
    _write(suite, cfg, out_dir)
    failures = sum(not r.ok for r in suite.reports)
    if failures:
        print(f"{failures} scenario(s) failed; see report.json", file=sys.stderr)
    return 1 if failures else 0


def cmd_report(args) -> int:
    suite = pipeline.suite_from_dict(json.loads(Path(args.json).read_text()))
    text = pipeline.render(suite, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for name, results in primitive_checks(args.seed).items():
        err = max(r.rel_error for r in results)
        worst = max(worst, err)
        print(f"{name:24s} {err:.3e}")
    for arch in args.models:
        graphs, _ = model_check(arch, scale=args.scale, batch=2, seed=args.seed)
        for g in graphs:
            worst = max(worst, g.rel_error)
            print(f"{g.name:24s} {g.rel_error:.3e}  ({g.n_checked} coordinates)")
    ok = worst <= args.tol
    print(f"worst relative error {worst:.3e}: {'PASS' if ok else 'FAIL'} (tolerance {args.tol:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uafd", description="Uncertainty-aware fault diagnosis toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--per-class", type=int, default=200)
    s.add_argument("--window", type=int, default=512)
    s.add_argument("--length", type=int, default=40_000, help="samples per raw series (with --series-dir)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="write a burst dataset (.npz)")
    s.add_argument("--series-dir", help="write one raw series file per class")
    s.add_argument("--format", choices=("f32le", "csv"), default="f32le")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="cut raw series files into a burst dataset")
    s.add_argument("--dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--window", type=int, default=512)
    s.add_argument("--shift", type=int, default=200)
    s.add_argument("--per-class", type=int, default=None)
    s.add_argument("--classes", type=int, default=None)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="train one model on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True, choices=[a.value for a in Architecture])
    s.add_argument("--scale", type=float, default=0.25)
    s.add_argument("--epochs", type=int, default=25)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="checkpoint path (.json)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("scenario", help="run one scenario")
    s.add_argument("--config")
    s.add_argument("--model", required=True, choices=[a.value for a in Architecture])
    s.add_argument("--holdout", type=int, help="epistemic: class to hold out")
    s.add_argument("--noise", choices=[k.value for k in NoiseKind], help="aleatoric: noise kind")
    s.add_argument("--snr", type=float, help="aleatoric: SNR in dB")
    s.add_argument("--out")
    s.set_defaults(func=cmd_scenario)

    s = sub.add_parser("suite", help="run the full scenario x model grid")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_suite)

    s = sub.add_parser("report", help="re-emit a JSON report in another format")
    s.add_argument("--json", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    s.add_argument("--scale", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=TOL_64)
    s.add_argument("--models", nargs="*", default=[a.value for a in Architecture])
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UafdError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
