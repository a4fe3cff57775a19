"""Canned finite-difference suites over every layer, a full block, and a toy net."""

from __future__ import annotations

import numpy as np

from .model import GcbSpec, Gcb, NetworkVariant, build_network
from .tensornd import (
    BatchNorm2d,
    ChannelGram,
    Conv2d,
    Dense,
    GlobalAvgPool,
    LayerNorm2d,
    ReLU,
    gradient_check,
    one_hot,
    softmax_cross_entropy,
)
from .tensornd.gradcheck import GradCheckReport


def _proj_loss(layer_forward, backward, x, rng, extra_params=()):
    """Scalar loss: fixed random projection of the layer output.

    Returns (loss_fn, tensors, analytic) for gradient_check. Analytic
    gradients are taken once up front; loss_fn re-runs the forward.
    """
    r = rng.standard_normal(layer_forward(x).shape)

    def loss_fn():
        return float((layer_forward(x) * r).sum())

    for p in extra_params:
        p.zero_grad()
    loss_fn()  # refresh caches
    dx = backward(r)
    tensors = {"input": x}
    analytic = {"input": dx}
    for p in extra_params:
        tensors[p.name] = p.value
        analytic[p.name] = p.grad
    return loss_fn, tensors, analytic


def layer_checks(tolerance=1e-4, seed=0) -> list[tuple[str, GradCheckReport]]:
    rng = np.random.default_rng(seed)
    reports = []

    def run(name, layer_forward, backward, x, params=()):
        loss_fn, tensors, analytic = _proj_loss(layer_forward, backward, x, rng, params)
        reports.append((name, gradient_check(loss_fn, tensors, analytic,
                                             tolerance=tolerance, rng=rng)))

    conv = Conv2d(2, 3, 3, stride=2, padding="same", rng=rng)
    conv.weight.name, conv.bias.name = "weight", "bias"
    run("conv2d_same_stride2", conv.forward, conv.backward,
        rng.standard_normal((2, 2, 8, 8)), conv.parameters())

    conv_v = Conv2d(1, 2, 3, stride=1, padding="valid", rng=rng)
    conv_v.weight.name, conv_v.bias.name = "weight", "bias"
    run("conv2d_valid", conv_v.forward, conv_v.backward,
        rng.standard_normal((2, 1, 6, 6)), conv_v.parameters())

    bn = BatchNorm2d(3)
    bn.gamma.name, bn.beta.name = "gamma", "beta"
    bn.gamma.value = rng.uniform(0.5, 1.5, 3)
    bn.beta.value = rng.standard_normal(3)
    run("batchnorm_training", lambda x: bn.forward(x, training=True), bn.backward,
        rng.standard_normal((4, 3, 5, 5)), bn.parameters())

    ln = LayerNorm2d()
    run("layernorm", ln.forward, ln.backward, rng.standard_normal((2, 3, 6, 6)))

    relu = ReLU()
    x = rng.standard_normal((2, 3, 5, 5))
    x[np.abs(x) < 1e-2] += 0.1  # keep coordinates away from the kink
    run("relu", relu.forward, relu.backward, x)

    gram = ChannelGram()
    run("channel_gram", gram.forward, gram.backward, rng.standard_normal((2, 3, 6, 6)))

    gap = GlobalAvgPool()
    run("global_average_pool", gap.forward, gap.backward, rng.standard_normal((2, 4, 5, 5)))

    dense = Dense(6, 4, rng=rng)
    dense.weight.name, dense.bias.name = "weight", "bias"
    run("dense", dense.forward, dense.backward, rng.standard_normal((3, 6)),
        dense.parameters())

    # softmax CE gradient is produced jointly with the loss
    logits = rng.standard_normal((4, 3))
    targets = one_hot(rng.integers(0, 3, 4), 3)
    _, _, dlogits = softmax_cross_entropy(logits, targets)
    reports.append(("softmax_cross_entropy", gradient_check(
        lambda: softmax_cross_entropy(logits, targets)[0],
        {"logits": logits}, {"logits": dlogits}, tolerance=tolerance, rng=rng)))
    return reports


def block_check(tolerance=1e-4, seed=0) -> list[tuple[str, GradCheckReport]]:
    """Full Gramian convolutional block, bridge included."""
    rng = np.random.default_rng(seed)
    gcb = Gcb(GcbSpec(3, 4, 1), 2, 2, NetworkVariant.EgrNet, rng)
    x = rng.standard_normal((2, 2, 6, 6))
    g = rng.standard_normal((2, 2, 6, 6))
    x_out, g_out = gcb.forward(x, g, training=True)
    rx = rng.standard_normal(x_out.shape)
    rg = rng.standard_normal(g_out.shape)

    def loss_fn():
        xo, go = gcb.forward(x, g, training=True)
        return float((xo * rx).sum() + (go * rg).sum())

    params = gcb.parameters()
    for p in params:
        p.zero_grad()
    loss_fn()
    dx, dg = gcb.backward(rx, rg)
    tensors = {"x": x, "g": g}
    analytic = {"x": dx, "g": dg}
    for lname, layer in gcb.layers():
        for p in layer.parameters():
            tensors[f"{lname}.{p.name}"] = p.value
            analytic[f"{lname}.{p.name}"] = p.grad
    report = gradient_check(loss_fn, tensors, analytic, tolerance=tolerance, rng=rng)
    return [("gcb_full", report)]


def net_check(tolerance=1e-4, seed=0, corrupt=False) -> list[tuple[str, GradCheckReport]]:
    """End-to-end toy network: two blocks on 8x8 inputs.

    corrupt=True deliberately scales one analytic gradient as a negative
    control; the resulting report must fail.
    """
    rng = np.random.default_rng(seed)
    blocks = (GcbSpec(3, 3, 1), GcbSpec(3, 4, 2))
    model = build_network(3, NetworkVariant.EgrNet, input_side=8, blocks=blocks,
                          seed=seed)
    x = rng.standard_normal((2, 1, 8, 8))
    g = rng.standard_normal((2, 1, 8, 8))
    targets = one_hot(rng.integers(0, 3, 2), 3)

    def loss_fn():
        logits, _ = model.forward(x, g, training=True)
        return softmax_cross_entropy(logits, targets)[0]

    model.zero_grad()
    logits, _ = model.forward(x, g, training=True)
    _, _, dlogits = softmax_cross_entropy(logits, targets)
    dx, dg = model.backward(dlogits)
    tensors = {"rsm_input": x, "egr_input": g}
    analytic = {"rsm_input": dx, "egr_input": dg}
    for name, p in model.named_parameters().items():
        tensors[name] = p.value
        analytic[name] = p.grad
    if corrupt:
        analytic["classifier.weight"] = analytic["classifier.weight"] * 1.5 + 0.05
    report = gradient_check(loss_fn, tensors, analytic, tolerance=tolerance, rng=rng)
    return [("toy_net_2block", report)]


def run_suite(scope="net", tolerance=1e-4, seed=0, corrupt=False):
    """scope: layer, block, or net (net implies the other two)."""
    if scope == "layer":
        return layer_checks(tolerance, seed)
    if scope == "block":
        return block_check(tolerance, seed)
    if scope == "net":
        return (layer_checks(tolerance, seed) + block_check(tolerance, seed) +
                net_check(tolerance, seed, corrupt=corrupt))
    raise ValueError(f"unknown scope {scope!r}")
