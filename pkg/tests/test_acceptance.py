"""Acceptance suite: one test per acceptance criterion, in order.

Each test name carries its criterion number so `pytest -v` emits one
pass/fail line per criterion. The long-running classification experiments
(criteria 05 and 06) train real networks on synthetic data and dominate
the suite's runtime.
"""

import time

import numpy as np
import pytest

from egrnet.dataset import (
    SyntheticFaultSpec,
    demo_fault_classes,
    generate_synthetic,
    load_manifest,
)
from egrnet.gradsuite import net_check, run_suite
from egrnet.harness import (
    ExperimentConfig,
    accuracy_from_confusion,
    run_snr_sweep,
    separability_report,
    train,
)
from egrnet.model import GcbSpec, NetworkVariant, build_network
from egrnet.signal_core import (
    Rsm,
    RsmConfig,
    Signal,
    add_noise_snr,
    NoiseSpec,
    egr_of_signal,
    gram,
    stripe_profile,
)

FS = 4096.0


@pytest.fixture(scope="module")
def class_dataset(tmp_path_factory):
    """4 classes x 400 samples of 4096 points (64x64 fold): 200 train + 200
    test per class at a 0.5 split."""
    root = tmp_path_factory.mktemp("accept_cls")
    spec = SyntheticFaultSpec(demo_fault_classes(), FS, 4096, 400, rng_seed=11)
    generate_synthetic(spec, root)
    return root / "manifest.json"


@pytest.fixture(scope="module")
def ablation_dataset(tmp_path_factory):
    """Reduced set for the 15-run ablation: 4 classes x 100 samples."""
    root = tmp_path_factory.mktemp("accept_abl")
    spec = SyntheticFaultSpec(demo_fault_classes(), FS, 4096, 100, rng_seed=12)
    generate_synthetic(spec, root)
    return root / "manifest.json"


def test_01_gramian_algebra_properties():
    """1000 random matrices: symmetry <= 1e-12 relative, PSD via 100 random
    quadratic forms each, and exact alpha^2 scale equivariance. Under 10 s."""
    start = time.perf_counter()
    rng = np.random.default_rng(100)
    for i in range(1000):
        m = int(rng.integers(2, 25))
        n = int(rng.integers(2, 25))
        x = rng.normal(size=(m, n)) * rng.uniform(0.1, 10.0)
        g = gram(Rsm(x)).values
        scale = max(np.abs(g).max(), 1e-300)
        assert np.abs(g - g.T).max() / scale <= 1e-12, f"asymmetric at case {i}"
        v = rng.normal(size=(100, n))
        forms = np.einsum("ij,jk,ik->i", v, g, v)
        assert forms.min() >= -1e-9 * scale, f"negative quadratic form at case {i}"
        alpha = float(rng.uniform(-3.0, 3.0))
        g_scaled = gram(Rsm(alpha * x)).values
        np.testing.assert_allclose(g_scaled, alpha * alpha * g,
                                   rtol=1e-12, atol=1e-12 * scale)
    assert time.perf_counter() - start < 10.0


def test_02_periodic_signal_dominant_stripe_lag():
    """50 random (T, n) with T | n and T <= n/2: a T-periodic signal's
    strongest off-diagonal stripe sits exactly at lag T. Under 30 s."""
    start = time.perf_counter()
    rng = np.random.default_rng(200)
    cases = 0
    while cases < 50:
        t_period = int(rng.integers(2, 17))
        mult = int(rng.integers(2, max(3, 64 // t_period + 1)))
        n = t_period * mult
        if t_period > n // 2 or n > 64:
            continue
        base = rng.normal(size=t_period)
        if np.abs(base).max() < 0.1:
            continue
        x = np.tile(base, n * n // t_period)
        prof = stripe_profile(egr_of_signal(Signal(x, FS), RsmConfig(n, n)))
        assert prof.dominant_lag() == t_period, \
            f"T={t_period} n={n}: got lag {prof.dominant_lag()}"
        cases += 1
    assert time.perf_counter() - start < 30.0


def test_03_gradient_suite_all_layers_and_toy_net():
    """Central-difference checks at 64-bit for every layer, a full block, and
    a 2-block 8x8 network: relative error <= 1e-4 everywhere. A deliberately
    corrupted gradient must be rejected. Under 5 min."""
    start = time.perf_counter()
    reports = run_suite("net", tolerance=1e-4)
    for name, report in reports:
        assert report.passed, f"{name}: max rel error {report.max_rel_error:.3e}"
    (neg_name, neg_report), = net_check(corrupt=True)
    assert not neg_report.passed, "corrupted gradient slipped through"
    assert time.perf_counter() - start < 300.0


def test_04_channel_and_shape_accounting():
    """Canonical double-branch net on 64x64: RSM-branch channels
    (32,32,64,64,128), Gramian-branch channels (64,64,128,128,256), spatial
    trace (64,64,64,32,16), classifier widths 384/256/128 per variant."""
    net = build_network(4, NetworkVariant.EgrNet, 64)
    x_chs, g_chs = net.channel_trace()
    assert x_chs == [32, 32, 64, 64, 128]
    assert g_chs == [64, 64, 128, 128, 256]
    assert net.spatial_trace() == [64, 64, 64, 32, 16]
    assert net.classifier_input_width() == 384
    assert build_network(4, NetworkVariant.EgrNetNoBc, 64).classifier_input_width() == 256
    assert build_network(4, NetworkVariant.CnnRsm, 64).classifier_input_width() == 128


def test_05_synthetic_classification_accuracy(class_dataset):
    """4-class synthetic set, 200 train + 200 test per class, 64x64, SNR 0 dB,
    batch 32, lr 1e-4 with x0.1 every 15 epochs: mean test accuracy over 3
    seeds >= 95%, each trial under 30 min of CPU. (Epochs reduced to 3; the
    bar is already met after the first epoch.)"""
    config = ExperimentConfig(manifest_path=str(class_dataset),
                              variant=NetworkVariant.EgrNet,
                              snr_db=(0.0,), trials=3, epochs=3,
                              batch_size=32, initial_lr=1e-4,
                              lr_decay_factor=0.1, lr_decay_every_epochs=15,
                              rng_seed=500)
    manifest = load_manifest(class_dataset)
    accs = []
    for trial in range(config.trials):
        _, res = train(config, manifest, snr_db=0.0, trial_index=trial)
        assert res.seconds < 1800.0, f"trial {trial} took {res.seconds:.0f}s"
        accs.append(res.test_accuracy_pct)
    assert np.mean(accs) >= 95.0, f"accuracies {accs}"


def test_06_ablation_ordering_at_minus_6db(ablation_dataset):
    """Mean accuracy over 5 seeds at SNR -6 dB: full net >= bridge-free net
    >= single-branch net, with 1.0 percentage point slack per comparison."""
    config = ExperimentConfig(manifest_path=str(ablation_dataset),
                              snr_db=(-6.0,), trials=5, epochs=6,
                              batch_size=32, initial_lr=1e-4, rng_seed=600)
    manifest = load_manifest(ablation_dataset)
    means = {}
    for variant in (NetworkVariant.EgrNet, NetworkVariant.EgrNetNoBc,
                    NetworkVariant.CnnRsm):
        accs = [train(config, manifest, snr_db=-6.0, trial_index=t,
                      variant=variant)[1].test_accuracy_pct
                for t in range(config.trials)]
        means[variant] = float(np.mean(accs))
    assert means[NetworkVariant.EgrNet] >= means[NetworkVariant.EgrNetNoBc] - 1.0, means
    assert means[NetworkVariant.EgrNetNoBc] >= means[NetworkVariant.CnnRsm] - 1.0, means


def test_07_gramian_separability_beats_raw_matrices(ablation_dataset):
    """At SNR 0 dB the flattened Gramians cluster better than the flattened
    raw signal matrices: higher silhouette and at least equal 1-NN accuracy."""
    manifest = load_manifest(ablation_dataset)
    rep = separability_report(manifest, snr_db=0.0, rng_seed=700)
    assert rep.egr_silhouette > rep.rsm_silhouette, rep
    assert rep.egr_knn_accuracy >= rep.rsm_knn_accuracy, rep


def test_08_snr_fidelity():
    """Realized noise power within +/-0.3 dB of target on 4096-sample windows,
    100 seeds per target in {-6, -4, -2, 0} dB."""
    t = np.arange(4096)
    x = np.sin(0.031 * t) + 0.4 * np.sin(0.154 * t + 1.0)
    s = Signal(x, FS)
    p_sig = float(np.mean(x * x))
    for target in (-6.0, -4.0, -2.0, 0.0):
        for seed in range(100):
            noisy = add_noise_snr(s, NoiseSpec(target, rng_seed=seed))
            p_noise = float(np.mean((noisy.samples - x) ** 2))
            realized = 10.0 * np.log10(p_sig / p_noise)
            assert abs(realized - target) < 0.3, \
                f"target {target} dB seed {seed}: realized {realized:.3f} dB"


def test_09_sweep_determinism_bytewise(tmp_path, ablation_dataset):
    """Two sweep runs with the same config and seed produce bytewise-identical
    results.csv and checkpoints (timing column disabled)."""
    config = ExperimentConfig(manifest_path=str(ablation_dataset),
                              snr_db=(0.0, -6.0), trials=2, epochs=2,
                              batch_size=8, rng_seed=900,
                              blocks=(GcbSpec(3, 4, 1), GcbSpec(3, 8, 2)),
                              record_timing=False)
    run_snr_sweep(config, tmp_path / "a")
    run_snr_sweep(config, tmp_path / "b")
    names = ["results.csv"] + [f.name for f in (tmp_path / "a").glob("*.egrn")]
    assert len(names) == 1 + 4  # two SNRs x two trials
    for name in names:
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"


def test_10_parameter_and_flop_budget():
    """Canonical net: parameter count within 350k-550k, analytic FLOPs within
    [0.6, 2.5] x 1.26e9 (one multiply-add = 2 FLOPs)."""
    net = build_network(4, NetworkVariant.EgrNet, 64)
    assert 350_000 <= net.param_count() <= 550_000, net.param_count()
    flops = net.flop_count()
    assert 0.6 * 1.26e9 <= flops <= 2.5 * 1.26e9, flops


def test_11_confusion_accuracy_equivalence():
    """Accuracy from confusion counts equals correct/total on 1000 random
    confusion matrices (brute-force loop oracle)."""
    rng = np.random.default_rng(1100)
    for _ in range(1000):
        k = int(rng.integers(2, 8))
        conf = rng.integers(0, 25, size=(k, k))
        if conf.sum() == 0:
            conf[rng.integers(k), rng.integers(k)] = 1
        correct = 0
        total = 0
        for i in range(k):
            for j in range(k):
                total += conf[i, j]
                if i == j:
                    correct += conf[i, j]
        assert accuracy_from_confusion(conf) == pytest.approx(
            100.0 * correct / total, rel=1e-12)
