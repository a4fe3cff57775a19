"""Training loop, SNR sweeps, ablations, separability and cost reports."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, SplitSpec, load_manifest, load_samples, split
from .errors import ConfigError
from .model import (
    EgrNetModel,
    GcbSpec,
    CANONICAL_BLOCKS,
    NetworkVariant,
    build_network,
    save_model,
    signals_to_batches,
)
from .signal_core import NoiseSpec, RsmConfig, add_noise_snr, suggest_dims
from .tensornd import Adam, one_hot, softmax_cross_entropy


@dataclass(frozen=True)
class ExperimentConfig:
    manifest_path: str
    variant: NetworkVariant = NetworkVariant.EgrNet
    snr_db: tuple = (0.0,)
    trials: int = 1
    epochs: int = 50
    batch_size: int = 32
    initial_lr: float = 1e-4
    lr_decay_factor: float = 0.1
    lr_decay_every_epochs: int = 15
    rng_seed: int = 0
    train_fraction: float = 0.5
    blocks: tuple = CANONICAL_BLOCKS
    normalize_divisor: str = "variance"
    dtype: str = "float32"
    record_timing: bool = True

    def __post_init__(self):
        if min(self.epochs, self.trials, self.batch_size) < 0 or \
                self.trials < 1 or self.batch_size < 1:
            raise ConfigError("epochs >= 0, trials and batch_size >= 1 required")

    def learning_rate(self, epoch: int) -> float:
        """lr(epoch) = initial * factor^floor(epoch/every), epochs 0-based."""
        return self.initial_lr * self.lr_decay_factor ** (epoch // self.lr_decay_every_epochs)

    @property
    def np_dtype(self):
        return {"float32": np.float32, "float64": np.float64}[self.dtype]

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["variant"] = self.variant.value
        d["snr_db"] = list(self.snr_db)
        d["blocks"] = [[b.kernel_size, b.out_channels, b.stride] for b in self.blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "variant" in d:
            d["variant"] = NetworkVariant(d["variant"])
        if "snr_db" in d:
            d["snr_db"] = tuple(float(v) for v in (
                d["snr_db"] if isinstance(d["snr_db"], (list, tuple)) else [d["snr_db"]]))
        if "blocks" in d:
            d["blocks"] = tuple(GcbSpec(*b) for b in d["blocks"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrialResult:
    train_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    test_accuracy_pct: float = 0.0
    confusion: np.ndarray | None = None
    seconds: float = 0.0


@dataclass(frozen=True)
class SeparabilityReport:
    rsm_silhouette: float
    rsm_knn_accuracy: float
    egr_silhouette: float
    egr_knn_accuracy: float


def accuracy_from_confusion(confusion: np.ndarray) -> float:
    """Percent accuracy; for multiclass counts this is trace/total, which
    reduces to (TP+TN)/(TP+TN+FP+FN) in the binary case."""
    total = confusion.sum()
    if total == 0:
        raise ConfigError("empty confusion matrix")
    return float(np.trace(confusion)) / float(total) * 100.0


def confusion_matrix(true_labels, pred_labels, num_classes) -> np.ndarray:
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (np.asarray(true_labels), np.asarray(pred_labels)), 1)
    return conf


# -- data pipeline -----------------------------------------------------------

def _load_split(manifest: DatasetManifest, train_fraction: float):
    spec = SplitSpec(train_fraction)
    train, test = [], []
    for entry in manifest.classes:
        tr, te = split(load_samples(manifest, entry.label_id), spec)
        train.extend(tr)
        test.extend(te)
    return train, test


def _noisy_batches(signals, snr_db, trial_seed, stage, cfg: RsmConfig,
                   divisor, dtype):
    """Noise -> normalize -> RSM/EGR for a list of signals.

    Per-sample noise seeds are drawn from a SeedSequence keyed on
    (trial_seed, stage) so train/test and different trials get
    independent, reproducible streams."""
    seeds = np.random.SeedSequence([trial_seed, stage]).generate_state(len(signals))
    noisy = [add_noise_snr(s, NoiseSpec(snr_db, int(seed)))
             for s, seed in zip(signals, seeds)]
    rsm_b, egr_b = signals_to_batches(noisy, cfg, normalize=True,
                                      divisor=divisor, dtype=dtype)
    labels = np.array([s.label for s in signals], dtype=np.int64)
    return rsm_b, egr_b, labels


def evaluate(model: EgrNetModel, rsm_b, egr_b, labels, batch_size=64) -> TrialResult:
    """Inference over a prepared test set; accuracy from confusion counts."""
    start = time.perf_counter()
    preds = np.concatenate([
        model.predict_arrays(rsm_b[i:i + batch_size],
                             None if egr_b is None else egr_b[i:i + batch_size])
        for i in range(0, rsm_b.shape[0], batch_size)])
    conf = confusion_matrix(labels, preds, model.num_classes)
    return TrialResult(test_accuracy_pct=accuracy_from_confusion(conf),
                       confusion=conf, seconds=time.perf_counter() - start)


def train(config: ExperimentConfig, manifest: DatasetManifest | None = None,
          snr_db: float | None = None, trial_index: int = 0,
          variant: NetworkVariant | None = None):
    """One training run. Returns (model, TrialResult).

    Pipeline per trial: add noise -> normalize -> RSM/EGR -> minibatch Adam
    with the stepped learning-rate schedule. Deterministic given the config
    seed and trial index.
    """
    start = time.perf_counter()
    manifest = manifest or load_manifest(config.manifest_path)
    snr = config.snr_db[0] if snr_db is None else snr_db
    variant = variant or config.variant
    trial_seed = config.rng_seed + trial_index
    cfg = suggest_dims(manifest.sample_length)
    dtype = config.np_dtype

    train_sigs, test_sigs = _load_split(manifest, config.train_fraction)
    rsm_tr, egr_tr, y_tr = _noisy_batches(train_sigs, snr, trial_seed, 0, cfg,
                                          config.normalize_divisor, dtype)
    rsm_te, egr_te, y_te = _noisy_batches(test_sigs, snr, trial_seed, 1, cfg,
                                          config.normalize_divisor, dtype)

    model = build_network(manifest.num_classes, variant, cfg.n,
                          config.blocks, seed=trial_seed, dtype=dtype)
    optimizer = Adam(model.parameters(), lr=config.initial_lr)
    targets = one_hot(y_tr, manifest.num_classes).astype(dtype)
    shuffle_rng = np.random.default_rng(trial_seed)
    result = TrialResult()
    n = rsm_tr.shape[0]

    for epoch in range(config.epochs):
        optimizer.lr = config.learning_rate(epoch)
        order = shuffle_rng.permutation(n)
        losses, correct = [], 0
        for lo in range(0, n, config.batch_size):
            idx = order[lo: lo + config.batch_size]
            logits, probs = model.forward(rsm_tr[idx], egr_tr[idx], training=True)
            loss, _, dlogits = softmax_cross_entropy(logits, targets[idx])
            model.zero_grad()
            model.backward(dlogits.astype(dtype))
            optimizer.step()
            losses.append(loss)
            correct += int((np.argmax(probs, axis=1) == y_tr[idx]).sum())
        result.train_loss.append(float(np.mean(losses)))
        result.train_accuracy.append(100.0 * correct / n)

    test_result = evaluate(model, rsm_te, egr_te, y_te)
    result.test_accuracy_pct = test_result.test_accuracy_pct
    result.confusion = test_result.confusion
    result.seconds = time.perf_counter() - start
    return model, result


# -- experiment drivers -------------------------------------------------------

def _mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (n-1 denominator; 0 when n < 2)."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def run_snr_sweep(config: ExperimentConfig, out_dir) -> dict:
    """Train `trials` models per SNR; emit results.csv, curves.csv,
    confusion.csv, summary.json, and per-run checkpoints."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(config.manifest_path)
    results_rows, curve_rows, conf_rows = [], [], []
    summary = {"snr_db": {}, "config": config.to_dict()}
    for snr in config.snr_db:
        accs = []
        for trial in range(config.trials):
            model, res = train(config, manifest, snr_db=snr, trial_index=trial)
            accs.append(res.test_accuracy_pct)
            seconds = f"{res.seconds:.3f}" if config.record_timing else ""
            results_rows.append([f"{snr:g}", trial, f"{res.test_accuracy_pct:.6f}", seconds])
            for epoch, (loss, acc) in enumerate(zip(res.train_loss, res.train_accuracy)):
                curve_rows.append([f"{snr:g}", trial, epoch, f"{loss:.12g}", f"{acc:.6f}"])
            for i, row in enumerate(res.confusion):
                conf_rows.append([f"{snr:g}", trial, i] + row.tolist())
            tag = f"snr{snr:g}_trial{trial}"
            save_model(model, out / f"model_{tag}.json", out / f"model_{tag}.egrn")
        mean, std = _mean_std(accs)
        summary["snr_db"][f"{snr:g}"] = {"mean_accuracy_pct": mean,
                                         "std_accuracy_pct": std,
                                         "accuracies_pct": accs}
    _write_csv(out / "results.csv", ["snr_db", "trial", "accuracy_pct", "seconds"], results_rows)
    _write_csv(out / "curves.csv", ["snr_db", "trial", "epoch", "loss", "accuracy_pct"], curve_rows)
    _write_csv(out / "confusion.csv",
               ["snr_db", "trial", "true_class"] +
               [f"pred_{i}" for i in range(manifest.num_classes)], conf_rows)
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


ABLATION_VARIANTS = (NetworkVariant.EgrNet, NetworkVariant.EgrNetNoBc,
                     NetworkVariant.CnnRsm)


def run_ablation(config: ExperimentConfig, out_dir) -> dict:
    """Same data and seeds across the three variants."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(config.manifest_path)
    rows, curve_rows = [], []
    summary = {"variants": {}, "config": config.to_dict()}
    for variant in ABLATION_VARIANTS:
        per_snr = {}
        for snr in config.snr_db:
            accs = []
            for trial in range(config.trials):
                _, res = train(config, manifest, snr_db=snr, trial_index=trial,
                               variant=variant)
                accs.append(res.test_accuracy_pct)
                rows.append([variant.value, f"{snr:g}", trial,
                             f"{res.test_accuracy_pct:.6f}"])
                for epoch, (loss, acc) in enumerate(zip(res.train_loss,
                                                        res.train_accuracy)):
                    curve_rows.append([variant.value, f"{snr:g}", trial, epoch,
                                       f"{loss:.12g}", f"{acc:.6f}"])
            mean, std = _mean_std(accs)
            per_snr[f"{snr:g}"] = {"mean_accuracy_pct": mean, "std_accuracy_pct": std}
        summary["variants"][variant.value] = per_snr
    _write_csv(out / "ablation.csv", ["variant", "snr_db", "trial", "accuracy_pct"], rows)
    _write_csv(out / "ablation_curves.csv",
               ["variant", "snr_db", "trial", "epoch", "loss", "accuracy_pct"], curve_rows)
    with open(out / "ablation_summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


# -- separability ------------------------------------------------------------

def silhouette_score(features: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette with Euclidean distance."""
    labels = np.asarray(labels)
    sq = (features * features).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (features @ features.T), 0.0)
    dist = np.sqrt(d2)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ConfigError("silhouette needs at least two classes")
    scores = np.zeros(labels.size)
    for i in range(labels.size):
        same = labels == labels[i]
        n_same = same.sum()
        if n_same < 2:
            scores[i] = 0.0
            continue
        a = dist[i, same].sum() / (n_same - 1)  # exclude self distance (0)
        b = min(dist[i, labels == c].mean() for c in classes if c != labels[i])
        scores[i] = 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
    return float(scores.mean())


def knn_loo_accuracy(features: np.ndarray, labels: np.ndarray) -> float:
    """Leave-one-out 1-nearest-neighbor accuracy, percent."""
    labels = np.asarray(labels)
    sq = (features * features).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (features @ features.T)
    np.fill_diagonal(d2, np.inf)
    nearest = np.argmin(d2, axis=1)
    return float((labels[nearest] == labels).mean()) * 100.0


def _standardize_columns(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    return (x - mean) / std


def separability_report(manifest: DatasetManifest, snr_db: float,
                        rng_seed: int = 0, divisor: str = "variance") -> SeparabilityReport:
    """Silhouette and 1-NN accuracy of flattened RSMs vs flattened EGRs."""
    cfg = suggest_dims(manifest.sample_length)
    signals = []
    for entry in manifest.classes:
        signals.extend(load_samples(manifest, entry.label_id))
    rsm_b, egr_b, labels = _noisy_batches(signals, snr_db, rng_seed, 2, cfg,
                                          divisor, np.float64)
    rsm_flat = _standardize_columns(rsm_b.reshape(rsm_b.shape[0], -1))
    egr_flat = _standardize_columns(egr_b.reshape(egr_b.shape[0], -1))
    return SeparabilityReport(
        rsm_silhouette=silhouette_score(rsm_flat, labels),
        rsm_knn_accuracy=knn_loo_accuracy(rsm_flat, labels),
        egr_silhouette=silhouette_score(egr_flat, labels),
        egr_knn_accuracy=knn_loo_accuracy(egr_flat, labels),
    )


def measure_inference(model: EgrNetModel, rsm_sample, egr_sample, runs=100,
                      warmup=5) -> dict:
    """Analytic FLOPs plus measured single-instance latency over warm runs."""
    for _ in range(warmup):
        model.forward(rsm_sample, egr_sample, training=False)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        model.forward(rsm_sample, egr_sample, training=False)
        times.append(time.perf_counter() - t0)
    times = np.array(times)
    return {
        "flops": model.flop_count(),
        "param_count": model.param_count(),
        "latency_median_ms": float(np.median(times)) * 1e3,
        "latency_mean_ms": float(times.mean()) * 1e3,
        "latency_min_ms": float(times.min()) * 1e3,
        "latency_max_ms": float(times.max()) * 1e3,
        "runs": runs,
    }
