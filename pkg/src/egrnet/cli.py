"""Command-line driver for the whole pipeline.

Exit codes: 0 success, 1 check/assertion failure, 2 usage or input error.
Progress goes to stderr; machine-readable results go to files only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _cap_threads():
    """EGRNET_THREADS caps numpy BLAS worker threads; must run before numpy loads."""
    cap = os.environ.get("EGRNET_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


_cap_threads()

from .errors import EgrnetError  # noqa: E402
from . import dataset, gradsuite, harness, signal_core  # noqa: E402
from .harness import ExperimentConfig  # noqa: E402
from .model import NetworkVariant, load_model, save_model  # noqa: E402


def _log(msg):
    print(msg, file=sys.stderr)


def _load_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config) as f:
            doc = json.load(f)
    overrides = {
        "manifest_path": args.manifest,
        "variant": args.variant,
        "snr_db": args.snr_db,
        "trials": args.trials,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "initial_lr": args.initial_lr,
        "rng_seed": args.seed,
        "train_fraction": args.train_fraction,
        "dtype": args.dtype,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "no_timing", False):
        doc["record_timing"] = False
    return ExperimentConfig.from_dict(doc)


def _add_config_flags(p, require_out=True):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--manifest", help="dataset manifest path")
    p.add_argument("--variant", choices=[v.value for v in NetworkVariant])
    p.add_argument("--snr-db", dest="snr_db",
                   type=lambda s: tuple(float(v) for v in s.split(",")),
                   help="comma-separated SNR list in dB")
    p.add_argument("--trials", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--initial-lr", dest="initial_lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--dtype", choices=["float32", "float64"])
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall-clock seconds from results.csv (deterministic output)")
    if require_out:
        p.add_argument("--out", required=True, help="output directory")


def cmd_synth(args) -> int:
    with open(args.spec) as f:
        doc = json.load(f)
    classes = [dataset.FaultClassSpec(**c) for c in doc["classes"]]
    spec = dataset.SyntheticFaultSpec(
        classes=classes, sample_rate_hz=doc["sample_rate_hz"],
        sample_length=doc["sample_length"],
        samples_per_class=doc["samples_per_class"],
        rng_seed=doc.get("rng_seed", 0))
    manifest = dataset.generate_synthetic(spec, args.out)
    _log(f"wrote {manifest.num_classes} classes x {spec.samples_per_class} samples "
         f"of length {spec.sample_length} to {args.out}")
    return 0


def cmd_convert(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    samples = dataset.load_samples(manifest, args.class_id)
    if not (0 <= args.sample_index < len(samples)):
        raise EgrnetError(
            f"sample index {args.sample_index} out of range for class "
            f"{args.class_id} ({len(samples)} samples)")
    sig = samples[args.sample_index]
    if args.snr is not None:
        sig = signal_core.add_noise_snr(sig, signal_core.NoiseSpec(args.snr, args.seed or 0))
    sig = signal_core.normalize_sample(sig)
    cfg = signal_core.suggest_dims(manifest.sample_length)
    rsm = signal_core.build_rsm(sig, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sample_id = f"class{args.class_id}_s{args.sample_index}"
    if args.emit in ("rsm", "both"):
        signal_core.write_pgm(rsm.values, out / f"{sample_id}_rsm.pgm")
        signal_core.write_matrix_csv(rsm.values, out / f"{sample_id}_rsm.csv")
    if args.emit in ("egr", "both"):
        egr = signal_core.gram(rsm)
        signal_core.write_pgm(egr.values, out / f"{sample_id}_egr.pgm")
        signal_core.write_matrix_csv(egr.values, out / f"{sample_id}_egr.csv")
        profile = signal_core.stripe_profile(egr)
        signal_core.write_matrix_csv(profile.lag_means[None, :],
                                     out / f"{sample_id}_stripe_profile.csv")
    _log(f"wrote {args.emit} dumps for {sample_id} to {out}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, result = harness.train(config)
    save_model(model, out / "model.json", out / "model.egrn")
    harness._write_csv(out / "curves.csv", ["epoch", "loss", "accuracy_pct"],
                       [[e, f"{l:.12g}", f"{a:.6f}"] for e, (l, a) in
                        enumerate(zip(result.train_loss, result.train_accuracy))])
    doc = {"test_accuracy_pct": result.test_accuracy_pct,
           "confusion": result.confusion.tolist(),
           "config": config.to_dict()}
    if config.record_timing:
        doc["seconds"] = result.seconds
    with open(out / "result.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    _log(f"test accuracy {result.test_accuracy_pct:.2f}%")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    model = load_model(args.arch, args.weights)
    manifest = dataset.load_manifest(config.manifest_path)
    cfg = signal_core.suggest_dims(manifest.sample_length)
    _, test_sigs = harness._load_split(manifest, config.train_fraction)
    rsm_b, egr_b, labels = harness._noisy_batches(
        test_sigs, config.snr_db[0], config.rng_seed + args.trial_index, 1, cfg,
        config.normalize_divisor, config.np_dtype)
    result = harness.evaluate(model, rsm_b, egr_b, labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval.json", "w") as f:
        json.dump({"test_accuracy_pct": result.test_accuracy_pct,
                   "confusion": result.confusion.tolist()}, f, indent=2)
        f.write("\n")
    _log(f"test accuracy {result.test_accuracy_pct:.2f}%")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    summary = harness.run_snr_sweep(config, args.out)
    for snr, stats in summary["snr_db"].items():
        _log(f"SNR {snr} dB: {stats['mean_accuracy_pct']:.2f} "
             f"± {stats['std_accuracy_pct']:.2f} %")
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    summary = harness.run_ablation(config, args.out)
    for variant, per_snr in summary["variants"].items():
        for snr, stats in per_snr.items():
            _log(f"{variant} @ {snr} dB: {stats['mean_accuracy_pct']:.2f} "
                 f"± {stats['std_accuracy_pct']:.2f} %")
    return 0


def cmd_separability(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    report = harness.separability_report(manifest, args.snr, args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "separability.json", "w") as f:
        json.dump({
            "rsm": {"silhouette": report.rsm_silhouette,
                    "knn_accuracy_pct": report.rsm_knn_accuracy},
            "egr": {"silhouette": report.egr_silhouette,
                    "knn_accuracy_pct": report.egr_knn_accuracy},
            "snr_db": args.snr,
        }, f, indent=2)
        f.write("\n")
    _log(f"silhouette rsm={report.rsm_silhouette:.3f} egr={report.egr_silhouette:.3f}; "
         f"1-NN rsm={report.rsm_knn_accuracy:.2f}% egr={report.egr_knn_accuracy:.2f}%")
    return 0


def cmd_gradcheck(args) -> int:
    reports = gradsuite.run_suite(args.scope, tolerance=args.tolerance,
                                  corrupt=args.inject_bug)
    ok = True
    for name, report in reports:
        ok &= report.passed
        if args.scope == "layer" or not report.passed:
            _log(f"{name}: max rel error {report.max_rel_error:.3e} "
                 f"({'pass' if report.passed else 'FAIL'})")
        else:
            _log(f"{name}: pass (max rel error {report.max_rel_error:.3e})")
    return 0 if ok else 1


def cmd_inspect(args) -> int:
    if args.manifest:
        manifest = dataset.load_manifest(args.manifest)
        _log(f"{manifest.num_classes} classes, sample length "
             f"{manifest.sample_length}, rate {manifest.sample_rate_hz} Hz")
        for c in manifest.classes:
            _log(f"  [{c.label_id}] {c.name}: {c.sample_count} samples ({c.file_path})")
    if args.arch and args.weights:
        model = load_model(args.arch, args.weights)
        x_chs, g_chs = model.channel_trace()
        _log(f"variant {model.variant.value}, {model.num_classes} classes, "
             f"input {model.input_side}x{model.input_side}")
        _log(f"channels rsm-branch {x_chs}, egr-branch {g_chs}, "
             f"spatial {model.spatial_trace()}")
        _log(f"parameters {model.param_count()}, analytic FLOPs {model.flop_count()}")
    if not args.manifest and not (args.arch and args.weights):
        raise EgrnetError("nothing to inspect: pass --manifest and/or --arch + --weights")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egrnet",
        description="Embedding Gramian representation pipeline: synthesize, "
                    "convert, train, evaluate, sweep, ablate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic vibration dataset")
    p.add_argument("--spec", required=True, help="synthesis spec JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="dump RSM/EGR images and CSVs for one sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--class-id", dest="class_id", type=int, required=True)
    p.add_argument("--sample-index", dest="sample_index", type=int, default=0)
    p.add_argument("--emit", choices=["rsm", "egr", "both"], default="both")
    p.add_argument("--snr", type=float, help="add noise at this SNR (dB) first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train one model")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint on the test split")
    _add_config_flags(p)
    p.add_argument("--arch", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--trial-index", dest="trial_index", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="repeated trials over an SNR list")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="compare the three network variants")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("separability", help="silhouette and 1-NN report for RSM vs EGR")
    p.add_argument("--manifest", required=True)
    p.add_argument("--snr", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_separability)

    p = sub.add_parser("gradcheck", help="finite-difference checks of all backward passes")
    p.add_argument("--scope", choices=["layer", "block", "net"], default="net")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--inject-bug", dest="inject_bug", action="store_true",
                   help=argparse.SUPPRESS)  # negative-control test hook
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="describe a dataset manifest or a checkpoint")
    p.add_argument("--manifest")
    p.add_argument("--arch")
    p.add_argument("--weights")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (EgrnetError, OSError, json.JSONDecodeError, KeyError, ValueError) as e:
        _log(f"error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
