"""Double-branch Gramian convolutional network.

Each block runs conv+BN+ReLU on the raw-signal-matrix branch and on the
Gramian branch, computes per-channel Grams of the RSM-branch activations,
layer-normalizes them, and concatenates them into the Gramian branch
(the "bridge"). Two ablation variants: EgrNetNoBc drops the bridge,
CnnRsm drops the Gramian branch entirely. After the last block both
branch outputs are concatenated, globally average pooled, and classified
by a single dense layer with softmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DimensionError, FormatError
from .signal_core import RsmConfig, Signal, build_rsm, gram, normalize_sample
from .tensornd import (
    BatchNorm2d,
    ChannelGram,
    Conv2d,
    Dense,
    GlobalAvgPool,
    LayerNorm2d,
    ReLU,
    concat_channels,
    load_checkpoint,
    save_checkpoint,
    softmax,
    split_channels,
)

ARCH_FORMAT_VERSION = 1


class NetworkVariant(Enum):
    EgrNet = "egrnet"
    EgrNetNoBc = "egrnet-no-bc"
    CnnRsm = "cnn-rsm"


@dataclass(frozen=True)
class GcbSpec:
    kernel_size: int
    out_channels: int
    stride: int

    def __post_init__(self):
        if min(self.kernel_size, self.out_channels, self.stride) < 1:
            raise ConfigError(f"invalid block spec {self}")


CANONICAL_BLOCKS = (
    GcbSpec(5, 32, 1),
    GcbSpec(5, 32, 1),
    GcbSpec(3, 64, 1),
    GcbSpec(3, 64, 2),
    GcbSpec(3, 128, 2),
)


class Gcb:
    """One Gramian convolutional block; both branch convs share the same
    hyperparameters but have independent weights."""

    def __init__(self, spec: GcbSpec, x_in_channels, g_in_channels, variant,
                 rng, dtype=np.float64):
        self.spec = spec
        self.variant = variant
        c = spec.out_channels
        self.x_conv = Conv2d(x_in_channels, c, spec.kernel_size, spec.stride,
                             "same", rng=rng, dtype=dtype)
        self.x_bn = BatchNorm2d(c, dtype=dtype)
        self.x_relu = ReLU()
        if variant is not NetworkVariant.CnnRsm:
            self.g_conv = Conv2d(g_in_channels, c, spec.kernel_size, spec.stride,
                                 "same", rng=rng, dtype=dtype)
            self.g_bn = BatchNorm2d(c, dtype=dtype)
            self.g_relu = ReLU()
        if variant is NetworkVariant.EgrNet:
            self.bridge_gram = ChannelGram()
            self.bridge_ln = LayerNorm2d()

    @property
    def x_out_channels(self):
        return self.spec.out_channels

    @property
    def g_out_channels(self):
        c = self.spec.out_channels
        if self.variant is NetworkVariant.EgrNet:
            return 2 * c
        if self.variant is NetworkVariant.EgrNetNoBc:
            return c
        return 0

    def layers(self):
        out = [("x_conv", self.x_conv), ("x_bn", self.x_bn)]
        if self.variant is not NetworkVariant.CnnRsm:
            out += [("g_conv", self.g_conv), ("g_bn", self.g_bn)]
        return out

    def parameters(self):
        params = []
        for _, layer in self.layers():
            params.extend(layer.parameters())
        return params

    def forward(self, x, g, training):
        x_h = self.x_relu.forward(self.x_bn.forward(self.x_conv.forward(x), training))
        if self.variant is NetworkVariant.CnnRsm:
            return x_h, None
        if x.shape[2:] != g.shape[2:]:
            raise DimensionError(
                f"branch spatial mismatch: {x.shape[2:]} vs {g.shape[2:]}")
        g_h = self.g_relu.forward(self.g_bn.forward(self.g_conv.forward(g), training))
        if self.variant is NetworkVariant.EgrNetNoBc:
            return x_h, g_h
        xg_h = self.bridge_ln.forward(self.bridge_gram.forward(x_h))
        return x_h, concat_channels(g_h, xg_h)

    def backward(self, dx_out, dg_out):
        if self.variant is NetworkVariant.CnnRsm:
            dx_h, dg_in = dx_out, None
        elif self.variant is NetworkVariant.EgrNetNoBc:
            dx_h = dx_out
            dg_in = self.g_conv.backward(self.g_bn.backward(self.g_relu.backward(dg_out)))
        else:
            dg_h, dxg_h = split_channels(dg_out, self.spec.out_channels)
            dx_h = dx_out + self.bridge_gram.backward(self.bridge_ln.backward(dxg_h))
            dg_in = self.g_conv.backward(self.g_bn.backward(self.g_relu.backward(dg_h)))
        dx_in = self.x_conv.backward(self.x_bn.backward(self.x_relu.backward(dx_h)))
        return dx_in, dg_in


class EgrNetModel:
    def __init__(self, blocks, classifier: Dense, variant: NetworkVariant,
                 num_classes: int, input_side: int, normalize_input_egr: bool = True):
        self.blocks = blocks
        self.classifier = classifier
        self.gap = GlobalAvgPool()
        self.variant = variant
        self.num_classes = num_classes
        self.input_side = input_side
        self.normalize_input_egr = normalize_input_egr
        self._input_ln = LayerNorm2d()
        self._forward_cache = None

    # -- bookkeeping ---------------------------------------------------

    @property
    def block_specs(self):
        return [b.spec for b in self.blocks]

    def channel_trace(self):
        """(rsm_branch_channels, egr_branch_channels) per block."""
        return ([b.x_out_channels for b in self.blocks],
                [b.g_out_channels for b in self.blocks])

    def spatial_trace(self):
        side = self.input_side
        out = []
        for b in self.blocks:
            side = -(-side // b.spec.stride)
            out.append(side)
        return out

    def classifier_input_width(self):
        last = self.blocks[-1]
        return last.x_out_channels + last.g_out_channels

    def named_parameters(self):
        named = {}
        for i, block in enumerate(self.blocks):
            for lname, layer in block.layers():
                for p in layer.parameters():
                    named[f"block{i}.{lname}.{p.name}"] = p
        for p in self.classifier.parameters():
            named[f"classifier.{p.name}"] = p
        return named

    def parameters(self):
        return list(self.named_parameters().values())

    def param_count(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # -- running the network --------------------------------------------

    def forward(self, rsm_batch, egr_batch, training=False):
        """Returns (logits, probabilities). egr_batch may be None for CnnRsm."""
        x = rsm_batch
        if x.ndim != 4 or x.shape[2] != x.shape[3]:
            raise DimensionError(f"rsm batch must be (B,C,S,S), got {x.shape}")
        if self.variant is NetworkVariant.CnnRsm:
            g = None
        else:
            if egr_batch is None:
                raise DimensionError(f"variant {self.variant.value} needs an EGR input")
            g = egr_batch
            if g.shape != x.shape:
                raise DimensionError(
                    f"rsm/egr batch shape mismatch: {x.shape} vs {g.shape}")
            if self.normalize_input_egr:
                g = self._input_ln.forward(g)
        for block in self.blocks:
            x, g = block.forward(x, g, training)
        o = x if g is None else concat_channels(x, g)
        self._forward_cache = (x.shape, None if g is None else g.shape)
        pooled = self.gap.forward(o)
        logits = self.classifier.forward(pooled)
        return logits, softmax(logits)

    def backward(self, dlogits):
        """Accumulate parameter gradients; returns (drsm, degr) inputs grads."""
        x_shape, g_shape = self._forward_cache
        do = self.gap.backward(self.classifier.backward(dlogits))
        if g_shape is None:
            dx, dg = do, None
        else:
            dx, dg = split_channels(do, x_shape[1])
        for block in reversed(self.blocks):
            dx, dg = block.backward(dx, dg)
        if g_shape is not None and self.normalize_input_egr:
            dg = self._input_ln.backward(dg)
        return dx, dg

    def predict_arrays(self, rsm_batch, egr_batch):
        _, probs = self.forward(rsm_batch, egr_batch, training=False)
        return np.argmax(probs, axis=1)  # argmax ties go to the lowest index

    def predict(self, signals: list[Signal], cfg: RsmConfig):
        """Normalize raw signals, convert to RSM/EGR, classify."""
        rsm_b, egr_b = signals_to_batches(signals, cfg)
        return self.predict_arrays(rsm_b, egr_b)

    # -- cost accounting --------------------------------------------------

    def flop_count(self):
        """Analytic FLOPs for one instance (batch of 1).

        Convention: one multiply-add counts as 2 FLOPs; elementwise
        normalization/activation work is counted per output element.
        """
        total = 0
        side = self.input_side
        x_ch = g_ch = 1
        for b in self.blocks:
            out_side = -(-side // b.spec.stride)
            k, c = b.spec.kernel_size, b.spec.out_channels
            area = out_side * out_side
            conv = lambda in_ch: 2 * area * c * in_ch * k * k + area * c
            total += conv(x_ch)                       # RSM-branch conv
            total += 4 * area * c                     # BN (scale+shift) + ReLU
            if self.variant is not NetworkVariant.CnnRsm:
                total += conv(g_ch)                   # EGR-branch conv
                total += 4 * area * c
            if self.variant is NetworkVariant.EgrNet:
                total += 2 * c * out_side ** 3        # per-channel Gram P^T P
                total += 6 * area * c                 # layer norm
            side = out_side
            x_ch = b.x_out_channels
            g_ch = b.g_out_channels
        width = self.classifier_input_width()
        total += width * side * side                  # global average pool
        total += 2 * width * self.num_classes         # dense classifier
        return total


def signals_to_batches(signals, cfg: RsmConfig, normalize=True,
                       divisor="variance", dtype=np.float64):
    """Raw signals -> (rsm batch, egr batch), each (B,1,n,n)."""
    rsms, egrs = [], []
    for s in signals:
        if normalize:
            s = normalize_sample(s, divisor=divisor)
        r = build_rsm(s, cfg)
        rsms.append(r.values)
        egrs.append(gram(r).values)
    rsm_b = np.stack(rsms)[:, None].astype(dtype)
    egr_b = np.stack(egrs)[:, None].astype(dtype)
    return rsm_b, egr_b


def build_network(num_classes, variant=NetworkVariant.EgrNet, input_side=64,
                  blocks=CANONICAL_BLOCKS, seed=0, dtype=np.float64,
                  normalize_input_egr=True) -> EgrNetModel:
    if num_classes < 1:
        raise ConfigError("num_classes must be >= 1")
    rng = np.random.default_rng(seed)
    gcbs = []
    x_ch = g_ch = 1
    for spec in blocks:
        gcb = Gcb(spec, x_ch, g_ch, variant, rng, dtype=dtype)
        gcbs.append(gcb)
        x_ch, g_ch = gcb.x_out_channels, gcb.g_out_channels
    width = x_ch + g_ch
    classifier = Dense(width, num_classes, rng=rng, dtype=dtype)
    model = EgrNetModel(gcbs, classifier, variant, num_classes, input_side,
                        normalize_input_egr)
    _check_bookkeeping(model)
    return model


def _check_bookkeeping(model: EgrNetModel):
    x_chs, g_chs = model.channel_trace()
    for spec, xc, gc in zip(model.block_specs, x_chs, g_chs):
        expected_g = {NetworkVariant.EgrNet: 2 * spec.out_channels,
                      NetworkVariant.EgrNetNoBc: spec.out_channels,
                      NetworkVariant.CnnRsm: 0}[model.variant]
        if xc != spec.out_channels or gc != expected_g:
            raise ConfigError(f"channel accounting violated at block spec {spec}")
    if model.classifier_input_width() != model.classifier.weight.value.shape[0]:
        raise ConfigError("classifier width does not match final concat width")


# -- serialization ---------------------------------------------------------

def architecture_dict(model: EgrNetModel) -> dict:
    return {
        "format_version": ARCH_FORMAT_VERSION,
        "variant": model.variant.value,
        "num_classes": model.num_classes,
        "input_side": model.input_side,
        "normalize_input_egr": model.normalize_input_egr,
        "blocks": [{"kernel_size": s.kernel_size, "out_channels": s.out_channels,
                    "stride": s.stride} for s in model.block_specs],
    }


def save_model(model: EgrNetModel, arch_path, weights_path) -> None:
    with open(arch_path, "w") as f:
        json.dump(architecture_dict(model), f, indent=2, sort_keys=True)
        f.write("\n")
    tensors = {k: p.value for k, p in model.named_parameters().items()}
    # BN running stats ride along so inference reproduces training-time eval
    for i, block in enumerate(model.blocks):
        for lname, layer in block.layers():
            if isinstance(layer, BatchNorm2d):
                tensors[f"block{i}.{lname}.running_mean"] = layer.running_mean
                tensors[f"block{i}.{lname}.running_var"] = layer.running_var
    save_checkpoint(weights_path, dict(sorted(tensors.items())))


def load_model(arch_path, weights_path) -> EgrNetModel:
    with open(arch_path) as f:
        arch = json.load(f)
    if arch.get("format_version") != ARCH_FORMAT_VERSION:
        raise FormatError(f"{arch_path}: unsupported architecture format version")
    blocks = tuple(GcbSpec(b["kernel_size"], b["out_channels"], b["stride"])
                   for b in arch["blocks"])
    model = build_network(arch["num_classes"], NetworkVariant(arch["variant"]),
                          arch["input_side"], blocks,
                          normalize_input_egr=arch["normalize_input_egr"])
    tensors = load_checkpoint(weights_path)
    named = model.named_parameters()
    param_names = set(named)
    stored_params = {k for k in tensors if not k.endswith(("running_mean", "running_var"))}
    if stored_params != param_names:
        missing = param_names - stored_params
        extra = stored_params - param_names
        raise FormatError(
            f"{weights_path}: checkpoint does not match architecture "
            f"(missing {sorted(missing)}, unexpected {sorted(extra)})")
    for name, p in named.items():
        if tensors[name].shape != p.value.shape:
            raise FormatError(
                f"{weights_path}: tensor {name!r} has shape {tensors[name].shape}, "
                f"expected {p.value.shape}")
        p.value = tensors[name]
        p.grad = np.zeros_like(p.value)
    for i, block in enumerate(model.blocks):
        for lname, layer in block.layers():
            if isinstance(layer, BatchNorm2d):
                layer.running_mean = tensors[f"block{i}.{lname}.running_mean"]
                layer.running_var = tensors[f"block{i}.{lname}.running_var"]
    return model
