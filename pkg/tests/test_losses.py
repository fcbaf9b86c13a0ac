import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faceprobe.losses import (COMPONENT_KEYS, CONTENT_LAYER_WEIGHTS,
                              IDENTITY_LAYER_WEIGHTS, FeatureMap, LossWeights,
                              cycle_losses, gan_loss_global,
                              gan_loss_global_grad, gan_loss_patch,
                              style_losses, style_losses_grad, total_objective,
                              weighted_feature_l1, weighted_feature_l1_grad)


def maps_from(arrays, layers):
    return [FeatureMap(layer, a) for layer, a in zip(layers, arrays)]


def random_maps(rng, layers, shape=(2, 3, 4)):
    return maps_from([rng.normal(size=shape) for _ in layers], layers)


# -- weighted feature L1 --------------------------------------------------------


def test_identical_maps_give_zero(rng):
    maps = random_maps(rng, [4, 9])
    assert weighted_feature_l1(maps, maps, CONTENT_LAYER_WEIGHTS) == 0.0


def test_single_element_arithmetic():
    a = [FeatureMap(4, np.full((1, 1, 1), 2.0))]
    b = [FeatureMap(4, np.full((1, 1, 1), 5.0))]
    assert weighted_feature_l1(a, b, {4: 0.5}) == 1.5


def test_matches_elementwise_bruteforce_oracle(rng):
    layers = [1, 4, 9, 12]
    weights = {1: 0.25, 4: 0.5, 9: 1.0, 12: 2.0}
    maps_a = random_maps(rng, layers)
    maps_b = random_maps(rng, layers)
    got = weighted_feature_l1(maps_a, maps_b, weights)
    oracle = 0.0
    for ma, mb in zip(maps_a, maps_b):  # brute-force elementwise sum
        for x, y in zip(ma.values.ravel(), mb.values.ravel()):
            oracle += weights[ma.layer] * abs(x - y)
    assert abs(got - oracle) < 1e-9 * max(abs(oracle), 1.0)


def test_shape_mismatch_error_names_layer_and_dims(rng):
    a = [FeatureMap(4, np.zeros((2, 3, 4)))]
    b = [FeatureMap(4, np.zeros((2, 3, 5)))]
    with pytest.raises(ValueError, match=r"layer 4.*\(2, 3, 4\).*\(2, 3, 5\)"):
        weighted_feature_l1(a, b, {4: 1.0})


def test_layer_set_mismatch_raises(rng):
    a = random_maps(rng, [4, 9])
    b = random_maps(rng, [4, 10])
    with pytest.raises(ValueError, match="layer sets differ"):
        weighted_feature_l1(a, b, {4: 1.0, 9: 1.0, 10: 1.0})


def test_missing_layer_weight_raises(rng):
    maps = random_maps(rng, [4, 9])
    with pytest.raises(ValueError, match="no weight"):
        weighted_feature_l1(maps, maps, {4: 1.0})


def test_normalize_flag_divides_by_size(rng):
    a = random_maps(rng, [4])
    b = random_maps(rng, [4])
    summed = weighted_feature_l1(a, b, {4: 1.0}, normalize=False)
    meaned = weighted_feature_l1(a, b, {4: 1.0}, normalize=True)
    assert abs(meaned - summed / a[0].values.size) < 1e-12


@settings(max_examples=30, deadline=None)
@given(power=st.integers(min_value=-3, max_value=3))
def test_scale_covariance_exact_for_binary_powers(power):
    rng = np.random.default_rng(5)
    maps_a = random_maps(rng, [4, 9])
    maps_b = random_maps(rng, [4, 9])
    c = 2.0 ** power
    scaled = {k: c * w for k, w in CONTENT_LAYER_WEIGHTS.items()}
    assert weighted_feature_l1(maps_a, maps_b, scaled) == \
        c * weighted_feature_l1(maps_a, maps_b, CONTENT_LAYER_WEIGHTS)


def test_scale_covariance_general_factor(rng):
    maps_a = random_maps(rng, [4, 9])
    maps_b = random_maps(rng, [4, 9])
    c = 3.7
    scaled = {k: c * w for k, w in CONTENT_LAYER_WEIGHTS.items()}
    lhs = weighted_feature_l1(maps_a, maps_b, scaled)
    rhs = c * weighted_feature_l1(maps_a, maps_b, CONTENT_LAYER_WEIGHTS)
    assert abs(lhs - rhs) <= 1e-15 * abs(rhs)


def test_non_negative_and_zero_iff_equal(rng):
    maps_a = random_maps(rng, [4, 9])
    maps_b = random_maps(rng, [4, 9])
    assert weighted_feature_l1(maps_a, maps_b, CONTENT_LAYER_WEIGHTS) > 0
    assert weighted_feature_l1(maps_b, maps_b, CONTENT_LAYER_WEIGHTS) == 0.0


def test_feature_map_validation():
    with pytest.raises(ValueError):
        FeatureMap(1, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        FeatureMap(1, np.full((1, 1, 1), np.nan))


# -- GAN losses -------------------------------------------------------------------


def test_gan_global_balanced_point():
    v = gan_loss_global(0.5, 0.5)
    assert abs(v - 2.0 * math.log(0.5)) < 1e-12
    assert abs(v - (-1.386294)) < 1e-6


def test_gan_global_optimum_limit_is_clamped():
    v = gan_loss_global(1.0, 0.0)
    assert v < 0.0
    assert abs(v - 2.0 * math.log(1.0 - 1e-7)) < 1e-15


def test_gan_global_batch_matches_per_element_oracle(rng):
    real = rng.uniform(0.05, 0.95, size=64)
    fake = rng.uniform(0.05, 0.95, size=64)
    got = gan_loss_global(real, fake)
    oracle = sum(math.log(r) for r in real) / 64 + \
        sum(math.log(1.0 - f) for f in fake) / 64
    assert abs(got - oracle) < 1e-12


def test_gan_patch_constant_grid():
    grid = np.full((8, 8), 0.5)
    assert abs(gan_loss_patch(grid, grid) - 2.0 * math.log(0.5)) < 1e-12


def test_gan_patch_collapses_to_global_on_1x1():
    assert gan_loss_patch(np.array([[0.7]]), np.array([[0.2]])) == \
        gan_loss_global(0.7, 0.2)


def test_gan_patch_matches_flatten_oracle(rng):
    real = rng.uniform(0.1, 0.9, size=(8, 8))
    fake = rng.uniform(0.1, 0.9, size=(8, 8))
    got = gan_loss_patch(real, fake)
    oracle = np.log(real.ravel()).mean() + np.log(1.0 - fake.ravel()).mean()
    assert abs(got - oracle) < 1e-12


def test_gan_empty_grid_raises():
    with pytest.raises(ValueError):
        gan_loss_patch(np.zeros((0, 0)), np.zeros((0, 0)))


# -- cycle and style ---------------------------------------------------------------


class LinearExtractor:
    """Fixed random linear map per layer: image (flat) -> feature map."""

    def __init__(self, layers, image_size, shape=(2, 2, 3), seed=0):
        rng = np.random.default_rng(seed)
        self.shape = shape
        self.mats = {l: rng.normal(size=(int(np.prod(shape)), image_size)) for l in layers}

    def __call__(self, image):
        flat = np.asarray(image, dtype=np.float64).ravel()
        return [FeatureMap(l, (m @ flat).reshape(self.shape))
                for l, m in sorted(self.mats.items())]


class IdentityExtractor:
    """Each layer returns the image itself (a linear map with matrix I)."""

    def __init__(self, layers):
        self.layers = layers

    def __call__(self, image):
        arr = np.asarray(image, dtype=np.float64)
        return [FeatureMap(l, arr) for l in self.layers]


def test_cycle_losses_zero_for_identical_images(rng):
    image = rng.normal(size=(1, 4, 4))
    identity_ex = LinearExtractor([10, 13], image.size, seed=1)
    content_ex = LinearExtractor([4, 9], image.size, seed=2)
    assert cycle_losses(identity_ex, content_ex, image, image.copy()) == (0.0, 0.0)


def test_cycle_losses_closed_form_for_constant_offset():
    image = np.zeros((1, 4, 4))
    offset = 0.375  # exactly representable
    shifted = image + offset
    identity_ex = IdentityExtractor([10, 13])
    content_ex = IdentityExtractor([4, 9])
    cyc_id, cyc_ct = cycle_losses(identity_ex, content_ex, image, shifted)
    count = image.size
    assert abs(cyc_id - offset * count * sum(IDENTITY_LAYER_WEIGHTS.values())) < 1e-12
    assert abs(cyc_ct - offset * count * sum(CONTENT_LAYER_WEIGHTS.values())) < 1e-12


def test_cycle_losses_match_manual_composition(rng):
    original = rng.normal(size=(1, 5, 5))
    reconstructed = rng.normal(size=(1, 5, 5))
    identity_ex = LinearExtractor([10, 13], original.size, seed=3)
    content_ex = LinearExtractor([4, 9], original.size, seed=4)
    got = cycle_losses(identity_ex, content_ex, original, reconstructed)
    manual = (
        weighted_feature_l1(identity_ex(reconstructed), identity_ex(original),
                            IDENTITY_LAYER_WEIGHTS),
        weighted_feature_l1(content_ex(reconstructed), content_ex(original),
                            CONTENT_LAYER_WEIGHTS),
    )
    assert got == manual


def test_style_losses_trivial_and_arithmetic():
    z = np.array([1.0, 1.0])
    assert style_losses(z, z, z) == (0.0, 0.0)
    assert style_losses(np.array([1.0, 1.0]), np.array([0.0, 0.0]),
                        np.array([2.0, 0.0])) == (2.0, 2.0)


def test_style_losses_match_l1_oracle(rng):
    pred, ref, tgt = rng.normal(size=(3, 512))
    got = style_losses(pred, ref, tgt)
    oracle = (sum(abs(a - b) for a, b in zip(pred, ref)),
              sum(abs(a - b) for a, b in zip(pred, tgt)))
    assert abs(got[0] - oracle[0]) < 1e-9
    assert abs(got[1] - oracle[1]) < 1e-9


def test_style_length_mismatch_raises():
    with pytest.raises(ValueError):
        style_losses(np.zeros(3), np.zeros(4), np.zeros(3))


# -- total objective ---------------------------------------------------------------


def unit_components():
    return {k: 1.0 for k in COMPONENT_KEYS}


def test_total_objective_zero():
    assert total_objective({k: 0.0 for k in COMPONENT_KEYS}) == 0.0


def test_total_objective_units_with_default_weights_is_26():
    assert total_objective(unit_components()) == 26.0


def test_total_objective_matches_dot_product_oracle(rng):
    for _ in range(20):
        components = {k: float(rng.normal()) for k in COMPONENT_KEYS}
        weights = LossWeights(content=float(rng.uniform(0, 5)),
                              identity=float(rng.uniform(0, 5)),
                              cycle_identity=float(rng.uniform(0, 5)),
                              cycle_content=float(rng.uniform(0, 5)),
                              style_ref=float(rng.uniform(0, 5)),
                              style_target=float(rng.uniform(0, 5)))
        vector = np.array([components[k] for k in COMPONENT_KEYS])
        wvec = np.array([1.0, 1.0, weights.content, weights.identity,
                         weights.cycle_identity, weights.cycle_content,
                         weights.style_ref, weights.style_target])
        assert abs(total_objective(components, weights) - float(vector @ wvec)) < 1e-12


def test_total_objective_rejects_missing_and_unknown():
    components = unit_components()
    del components["style_ref"]
    with pytest.raises(ValueError, match="style_ref"):
        total_objective(components)
    components = unit_components()
    components["bogus"] = 1.0
    with pytest.raises(ValueError, match="bogus"):
        total_objective(components)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossWeights(content=-1.0)


# -- gradient checks ----------------------------------------------------------------


def central_diff(fn, x, step=1e-5):
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + step
        hi = fn(x)
        xf[i] = orig - step
        lo = fn(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * step)
    return grad


def test_feature_l1_gradient_matches_finite_differences(rng):
    for _ in range(10):
        b = random_maps(rng, [4, 9], shape=(2, 2, 3))
        a_arrays = [m.values + rng.choice([-1, 1], size=m.values.shape) *
                    rng.uniform(0.2, 1.0, size=m.values.shape) for m in b]
        grads = weighted_feature_l1_grad(maps_from(a_arrays, [4, 9]), b,
                                         CONTENT_LAYER_WEIGHTS)
        for idx, arr in enumerate(a_arrays):
            def fn(x, idx=idx):
                trial = list(a_arrays)
                trial[idx] = x
                return weighted_feature_l1(maps_from(trial, [4, 9]), b,
                                           CONTENT_LAYER_WEIGHTS)
            fd = central_diff(fn, arr.copy())
            denom = max(np.abs(fd).max(), 1.0)
            assert np.abs(grads[idx] - fd).max() / denom < 1e-4


def test_gan_global_gradient_matches_finite_differences(rng):
    for _ in range(10):
        real = rng.uniform(0.1, 0.9, size=6)
        fake = rng.uniform(0.1, 0.9, size=6)
        g_real, g_fake = gan_loss_global_grad(real, fake)
        fd_real = central_diff(lambda x: gan_loss_global(x, fake), real.copy())
        fd_fake = central_diff(lambda x: gan_loss_global(real, x), fake.copy())
        assert np.abs(g_real - fd_real).max() / np.abs(fd_real).max() < 1e-4
        assert np.abs(g_fake - fd_fake).max() / np.abs(fd_fake).max() < 1e-4


def test_style_gradient_matches_finite_differences(rng):
    for _ in range(10):
        ref = rng.normal(size=8)
        tgt = rng.normal(size=8)
        pred = ref + rng.choice([-1, 1], size=8) * rng.uniform(0.3, 1.0, size=8)
        pred = np.where(np.abs(pred - tgt) < 0.1, pred + 0.3, pred)
        g_ref, g_tgt = style_losses_grad(pred, ref, tgt)
        fd_ref = central_diff(lambda x: style_losses(x, ref, tgt)[0], pred.copy())
        fd_tgt = central_diff(lambda x: style_losses(x, ref, tgt)[1], pred.copy())
        assert np.abs(g_ref - fd_ref).max() < 1e-4
        assert np.abs(g_tgt - fd_tgt).max() < 1e-4
