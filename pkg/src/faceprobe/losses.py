"""Numeric kernels of the full training objective, evaluated over abstract
feature maps so no network forward pass is ever required.

Two perceptual L1 terms operate on injected feature extractors: a content
set (layers {4, 9}, weights {0.5, 1}) and an identity set (layers
{10, 13}, weights {0.5, 1}). Adversarial terms are log-likelihood scores
of a global critic and a patch critic with expectations realized as batch
means; probabilities are clamped to [1e-7, 1 - 1e-7] so every kernel is a
total function. Analytic gradients are provided for the kernels that have
one, and are verified against central finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_CLAMP = 1e-7

CONTENT_LAYER_WEIGHTS = {4: 0.5, 9: 1.0}
IDENTITY_LAYER_WEIGHTS = {10: 0.5, 13: 1.0}

COMPONENT_KEYS = (
    "gan_global",
    "gan_patch",
    "perceptual_content",
    "perceptual_identity",
    "cycle_identity",
    "cycle_content",
    "style_ref",
    "style_target",
)


@dataclass(frozen=True)
class FeatureMap:
    layer: int
    values: np.ndarray  # (channels, height, width)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"feature map must be (c, h, w) with positive dims, got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError(f"feature map for layer {self.layer} contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class LossWeights:
    content: float = 10.0
    identity: float = 10.0
    cycle_identity: float = 1.0
    cycle_content: float = 1.0
    style_ref: float = 1.0
    style_target: float = 1.0
    content_layer_weights: dict = field(default_factory=lambda: dict(CONTENT_LAYER_WEIGHTS))
    identity_layer_weights: dict = field(default_factory=lambda: dict(IDENTITY_LAYER_WEIGHTS))

    def __post_init__(self):
        scalars = (self.content, self.identity, self.cycle_identity,
                   self.cycle_content, self.style_ref, self.style_target)
        if any(w < 0 for w in scalars):
            raise ValueError("loss weights must be non-negative")
        for table in (self.content_layer_weights, self.identity_layer_weights):
            if any(w < 0 for w in table.values()):
                raise ValueError("layer weights must be non-negative")


def _paired_layers(maps_a, maps_b, layer_weights):
    a_by_layer = {m.layer: m for m in maps_a}
    b_by_layer = {m.layer: m for m in maps_b}
    if set(a_by_layer) != set(b_by_layer):
        raise ValueError(
            f"feature layer sets differ: {sorted(a_by_layer)} vs {sorted(b_by_layer)}")
    missing = set(a_by_layer) - set(layer_weights)
    if missing:
        raise ValueError(f"no weight configured for layers {sorted(missing)}")
    for layer in sorted(a_by_layer):
        a, b = a_by_layer[layer], b_by_layer[layer]
        if a.values.shape != b.values.shape:
            raise ValueError(
                f"layer {layer} shape mismatch: {a.values.shape} vs {b.values.shape}")
        yield layer, a.values, b.values, float(layer_weights[layer])


def weighted_feature_l1(maps_a, maps_b, layer_weights, normalize: bool = False) -> float:
    """sum_i w_i * sum|a_i - b_i| over matching layers (mean if normalize)."""
    total = 0.0
    for _, a, b, w in _paired_layers(maps_a, maps_b, layer_weights):
        term = np.abs(a - b)
        total += w * (term.mean() if normalize else term.sum())
    return float(total)


def weighted_feature_l1_grad(maps_a, maps_b, layer_weights, normalize: bool = False):
    """d loss / d maps_a per layer, in ascending layer order (subgradient
    sign convention away from ties)."""
    grads = []
    for _, a, b, w in _paired_layers(maps_a, maps_b, layer_weights):
        g = w * np.sign(a - b)
        if normalize:
            g = g / a.size
        grads.append(g)
    return grads


def _clamped(x, name):
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} batch is empty")
    return np.clip(arr, LOG_CLAMP, 1.0 - LOG_CLAMP)


def gan_loss_global(d_real, d_fake) -> float:
    """mean log(d_real) + mean log(1 - d_fake); scalars are size-1 batches."""
    real = _clamped(d_real, "d_real")
    fake = _clamped(d_fake, "d_fake")
    return float(np.mean(np.log(real)) + np.mean(np.log(1.0 - fake)))


def gan_loss_global_grad(d_real, d_fake):
    """Gradients w.r.t. the raw inputs, valid away from the clamp."""
    real = np.asarray(d_real, dtype=np.float64)
    fake = np.asarray(d_fake, dtype=np.float64)
    return (1.0 / (real * real.size), -1.0 / ((1.0 - fake) * fake.size))


def gan_loss_patch(real_patches, fake_patches) -> float:
    """Patch-critic variant: the expectation runs over the score grids."""
    real = _clamped(real_patches, "real patch grid")
    fake = _clamped(fake_patches, "fake patch grid")
    return float(np.mean(np.log(real)) + np.mean(np.log(1.0 - fake)))


def style_losses(style_pred, style_ref, style_target) -> tuple[float, float]:
    """(||pred - ref||_1, ||pred - target||_1)."""
    pred = np.asarray(style_pred, dtype=np.float64).ravel()
    ref = np.asarray(style_ref, dtype=np.float64).ravel()
    tgt = np.asarray(style_target, dtype=np.float64).ravel()
    if not (pred.size == ref.size == tgt.size):
        raise ValueError(
            f"style vector lengths differ: {pred.size}, {ref.size}, {tgt.size}")
    return float(np.abs(pred - ref).sum()), float(np.abs(pred - tgt).sum())


def style_losses_grad(style_pred, style_ref, style_target):
    """Gradients of the two style losses w.r.t. the predicted vector."""
    pred = np.asarray(style_pred, dtype=np.float64).ravel()
    ref = np.asarray(style_ref, dtype=np.float64).ravel()
    tgt = np.asarray(style_target, dtype=np.float64).ravel()
    return np.sign(pred - ref), np.sign(pred - tgt)


def cycle_losses(identity_extractor, content_extractor, original, reconstructed,
                 identity_layer_weights=None, content_layer_weights=None,
                 normalize: bool = False) -> tuple[float, float]:
    """Perceptual distance between an image and its round-trip reconstruction,
    under the identity feature set and the content feature set. The caller
    supplies the reconstruction; this kernel only evaluates."""
    id_w = identity_layer_weights if identity_layer_weights is not None else IDENTITY_LAYER_WEIGHTS
    ct_w = content_layer_weights if content_layer_weights is not None else CONTENT_LAYER_WEIGHTS
    cyc_identity = weighted_feature_l1(
        identity_extractor(reconstructed), identity_extractor(original), id_w, normalize)
    cyc_content = weighted_feature_l1(
        content_extractor(reconstructed), content_extractor(original), ct_w, normalize)
    return cyc_identity, cyc_content


def total_objective(components, weights: LossWeights | None = None) -> float:
    """Weighted sum of the eight loss components; the adversarial terms are
    unweighted by convention."""
    weights = weights or LossWeights()
    missing = [k for k in COMPONENT_KEYS if k not in components]
    if missing:
        raise ValueError(f"missing loss components: {missing}")
    extra = [k for k in components if k not in COMPONENT_KEYS]
    if extra:
        raise ValueError(f"unknown loss components: {extra}")
    c = {k: float(components[k]) for k in COMPONENT_KEYS}
    return (
        c["gan_global"]
        + c["gan_patch"]
        + weights.content * c["perceptual_content"]
        + weights.identity * c["perceptual_identity"]
        + weights.cycle_identity * c["cycle_identity"]
        + weights.cycle_content * c["cycle_content"]
        + weights.style_ref * c["style_ref"]
        + weights.style_target * c["style_target"]
    )
