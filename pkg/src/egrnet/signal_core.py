"""1D-to-2D signal conversion: raw signal matrix, embedding Gramian, noise, normalization.

A length m*n signal is folded row-major into an m x n raw signal matrix
(RSM) whose column j is the "state vector" made of every n-th sample
starting at offset j. The embedding Gramian representation (EGR) is
G = X^T X, an n x n symmetric PSD matrix whose k-th diagonal holds the
inner products of state vectors k steps apart; a signal periodic with
period T (in samples) shows bright stripes on the diagonals at lag T.

Indexing note: formulas are stated 1-based in the docs above; the code
uses 0-based numpy indexing throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateSignalError, DimensionError


@dataclass(frozen=True)
class Signal:
    """A 1D vibration sample plus sampling metadata."""

    samples: np.ndarray
    sample_rate_hz: float
    label: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionError("signal must be a nonempty 1D sequence")
        if not np.all(np.isfinite(arr)):
            raise DimensionError("signal contains non-finite values")
        if not (self.sample_rate_hz > 0):
            raise DimensionError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class RsmConfig:
    """Raw-signal-matrix shape: m rows (embedding dimension) by n columns."""

    m: int
    n: int

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise DimensionError(f"m and n must be positive, got m={self.m}, n={self.n}")


@dataclass(frozen=True)
class Rsm:
    """m x n raw signal matrix; entry (i, j) is sample i*n + j (0-based)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError("RSM must be 2D")
        if not np.all(np.isfinite(arr)):
            raise DimensionError("RSM contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Egr:
    """n x n Gramian of an RSM's columns. Symmetric and positive semidefinite."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError("EGR must be square")
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise level as a signal-to-noise ratio in dB."""

    snr_db: float
    rng_seed: int = 0


@dataclass(frozen=True)
class StripeProfile:
    """Mean of each diagonal of an EGR; entry k is the mean of the k-th diagonal."""

    lag_means: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.lag_means.size

    def dominant_lag(self) -> int:
        """Argmax over lags 1..n//2; ties go to the smallest lag.

        An exactly periodic signal produces equal means at every multiple of
        its period, so near-ties (within 1e-9 relative) count as ties; this
        keeps the result stable against summation-order rounding noise.
        """
        n = self.lag_means.size
        hi = n // 2
        if hi < 1:
            raise DimensionError("profile too short for a dominant lag")
        lags = self.lag_means[1 : hi + 1]
        top = lags.max()
        tol = 1e-9 * max(abs(top), 1.0)
        return int(np.argmax(lags >= top - tol)) + 1


def build_rsm(signal: Signal, cfg: RsmConfig) -> Rsm:
    """Fold a length m*n signal row-major into its m x n raw signal matrix."""
    expected = cfg.m * cfg.n
    if len(signal) != expected:
        raise DimensionError(
            f"signal length {len(signal)} != m*n = {cfg.m}*{cfg.n} = {expected}"
        )
    return Rsm(signal.samples.reshape(cfg.m, cfg.n).copy())


def gram(rsm: Rsm) -> Egr:
    """Gramian of the RSM columns: G = X^T X."""
    x = rsm.values
    return Egr(x.T @ x)


def egr_of_signal(signal: Signal, cfg: RsmConfig) -> Egr:
    return gram(build_rsm(signal, cfg))


def stripe_profile(egr: Egr) -> StripeProfile:
    """Per-lag diagonal means: entry k = mean of {G[i, i+k]}."""
    g = egr.values
    n = g.shape[0]
    means = np.array([np.diagonal(g, offset=k).mean() for k in range(n)])
    return StripeProfile(means)


def normalize_sample(signal: Signal, divisor: str = "variance") -> Signal:
    """Subtract the mean, then divide by the population variance.

    divisor="std" switches the denominator to the standard deviation;
    the default follows the variance convention.
    """
    if len(signal) < 2:
        raise DimensionError("need at least 2 samples to normalize")
    if divisor not in ("variance", "std"):
        raise ValueError(f"unknown divisor {divisor!r}")
    x = signal.samples
    mean = x.mean()
    var = x.var()  # population variance (divide by N)
    if var == 0.0:
        raise DegenerateSignalError("zero-variance signal cannot be normalized")
    denom = var if divisor == "variance" else np.sqrt(var)
    return replace(signal, samples=(x - mean) / denom)


def add_noise_snr(signal: Signal, spec: NoiseSpec) -> Signal:
    """Add white Gaussian noise scaled to the requested SNR.

    SNR(dB) = 10*log10(P_signal / P_noise) with P = mean of squared
    samples, so the target noise power is P_signal / 10^(snr_db/10).
    Deterministic per seed (PCG64 generator, numpy's ziggurat normal).
    """
    x = signal.samples
    p_signal = float(np.mean(x * x))
    if p_signal == 0.0:
        raise DegenerateSignalError("zero-power signal: SNR is undefined")
    p_noise = p_signal / 10.0 ** (spec.snr_db / 10.0)
    rng = np.random.default_rng(spec.rng_seed)
    noise = rng.standard_normal(x.size) * np.sqrt(p_noise)
    return replace(signal, samples=x + noise)


def suggest_dims(sample_length: int) -> RsmConfig:
    """m = n = sqrt(length) for perfect-square lengths; error otherwise."""
    if sample_length < 1:
        raise DimensionError("sample length must be positive")
    root = int(np.sqrt(sample_length))
    while root * root < sample_length:
        root += 1
    if root * root != sample_length:
        raise DimensionError(
            f"length {sample_length} is not a perfect square; "
            "truncate or pad the signal explicitly before converting"
        )
    return RsmConfig(m=root, n=root)


def write_pgm(matrix: np.ndarray, path) -> None:
    """8-bit binary PGM (P5), min-max scaled per image."""
    a = np.asarray(matrix, dtype=np.float64)
    lo, hi = a.min(), a.max()
    scaled = np.zeros_like(a) if hi == lo else (a - lo) / (hi - lo)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    """Row-major CSV with 17 significant digits (round-trips float64)."""
    a = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in a:
            writer.writerow([f"{v:.17g}" for v in row])
