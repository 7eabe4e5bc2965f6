"""Property suite for the augmentation library.

Every transform is checked over at least 100 random windows: shapes are
preserved, deterministic transforms satisfy their algebraic identities,
sigma -> 0 collapses the stochastic ones to the identity, and the
statistical moments of the noise sources are what their names promise.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from siamts import augment
from siamts.augment import AugmentationSpec, Window
from siamts.errors import ConfigError

CASES = 100  # per-property minimum


def windows(min_t=8, max_t=40, min_c=1, max_c=6):
    shapes = st.tuples(st.integers(min_t, max_t), st.integers(min_c, max_c))
    return shapes.flatmap(
        lambda s: arrays(np.float64, s,
                         elements=st.floats(-10, 10, allow_nan=False, width=32)))


seeds = st.integers(0, 2**32 - 1)


def spec_for(kind, **params):
    return AugmentationSpec(kind, params)


ALL_SPECS = [
    spec_for("jitter", sigma=0.3),
    spec_for("random_scaling", sigma=0.4),
    spec_for("magnitude_warp", sigma=0.3, knots=4),
    spec_for("time_warp", sigma=0.3, knots=4),
    spec_for("flip"),
    spec_for("drop", fraction=0.2),
    spec_for("random_sampling", keep_fraction=0.8),
    spec_for("permutation", segments=4),
    spec_for("negation"),
    spec_for("channel_shuffle"),
]


@settings(max_examples=CASES, deadline=None)
@given(windows(min_c=2), seeds, st.integers(0, len(ALL_SPECS) - 1))
def test_shape_and_finiteness_preserved(x, seed, which):
    spec = ALL_SPECS[which]
    out = spec.apply(x, np.random.default_rng(seed))
    assert out.shape == x.shape
    assert np.isfinite(out).all()


@settings(max_examples=CASES, deadline=None)
@given(windows(), seeds, st.integers(0, len(ALL_SPECS) - 1))
def test_same_seed_same_output(x, seed, which):
    spec = ALL_SPECS[which]
    if spec.kind == "channel_shuffle" and x.shape[1] < 2:
        return
    a = spec.apply(x, np.random.default_rng(seed))
    b = spec.apply(x, np.random.default_rng(seed))
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# algebraic identities of the deterministic transforms


@settings(max_examples=CASES, deadline=None)
@given(windows())
def test_flip_is_an_involution(x):
    np.testing.assert_array_equal(augment.flip(augment.flip(x)), x)


@settings(max_examples=CASES, deadline=None)
@given(windows())
def test_negation_is_an_involution(x):
    np.testing.assert_array_equal(augment.negation(augment.negation(x)), x)


@settings(max_examples=CASES, deadline=None)
@given(windows(), seeds, st.integers(2, 6))
def test_permutation_conserves_multiset(x, seed, segments):
    out = augment.permutation(x, np.random.default_rng(seed), segments)
    # rows are rearranged, never altered: sorted row tuples must match
    a = np.sort(x.copy(), axis=0)
    b = np.sort(out, axis=0)
    np.testing.assert_array_equal(a, b)


@settings(max_examples=CASES, deadline=None)
@given(windows(min_c=2), seeds)
def test_channel_shuffle_conserves_channels(x, seed):
    out = augment.channel_shuffle(x, np.random.default_rng(seed))
    a = np.sort(x.copy(), axis=1)
    b = np.sort(out, axis=1)
    np.testing.assert_array_equal(a, b)


@settings(max_examples=CASES, deadline=None)
@given(windows(), seeds, st.floats(0.01, 0.5))
def test_drop_zeroes_one_contiguous_block(x, seed, fraction):
    out = augment.drop(x, np.random.default_rng(seed), fraction)
    n = int(round(fraction * x.shape[0]))
    changed = np.flatnonzero(np.any(out != x, axis=1))
    assert np.all(out[changed] == 0.0)
    if changed.size:
        # the changed rows sit inside one zeroed span of at most n steps
        # (rows already zero in the input do not register as changed)
        lo, hi = changed[0], changed[-1]
        assert hi - lo + 1 <= n
        assert np.all(out[lo:hi + 1] == 0.0)


# ---------------------------------------------------------------------------
# sigma -> 0 identities


@settings(max_examples=CASES, deadline=None)
@given(windows(), seeds)
def test_jitter_sigma_zero_is_identity(x, seed):
    np.testing.assert_array_equal(
        augment.jitter(x, np.random.default_rng(seed), 0.0), x)


@settings(max_examples=CASES, deadline=None)
@given(windows(), seeds)
def test_scaling_sigma_zero_is_identity(x, seed):
    np.testing.assert_allclose(
        augment.random_scaling(x, np.random.default_rng(seed), 0.0), x)


@settings(max_examples=CASES, deadline=None)
@given(windows(), seeds)
def test_magnitude_warp_sigma_zero_is_identity(x, seed):
    out = augment.magnitude_warp(x, np.random.default_rng(seed), 0.0)
    np.testing.assert_allclose(out, x, atol=1e-9)


@settings(max_examples=CASES, deadline=None)
@given(windows(), seeds)
def test_time_warp_sigma_zero_is_identity(x, seed):
    # constant rate curve integrates to the identity warp
    out = augment.time_warp(x, np.random.default_rng(seed), 0.0)
    np.testing.assert_allclose(out, x, atol=1e-9)


@settings(max_examples=CASES, deadline=None)
@given(windows(), seeds)
def test_random_sampling_keep_all_is_identity(x, seed):
    out = augment.random_sampling(x, np.random.default_rng(seed), 1.0)
    np.testing.assert_allclose(out, x, atol=1e-12)


# ---------------------------------------------------------------------------
# statistical moments of the noise sources


def test_jitter_noise_moments():
    rng = np.random.default_rng(11)
    x = np.zeros((200, 50))
    out = augment.jitter(x, rng, 0.5)
    assert abs(out.mean()) < 0.01
    assert out.std() == pytest.approx(0.5, rel=0.02)


def test_scaling_factor_moments():
    rng = np.random.default_rng(12)
    x = np.ones((1, 20000))
    factors = augment.random_scaling(x, rng, 0.3).ravel()
    assert factors.mean() == pytest.approx(1.0, abs=0.01)
    assert factors.std() == pytest.approx(0.3, rel=0.05)


def test_time_warp_fixes_endpoints():
    rng = np.random.default_rng(13)
    x = np.linspace(0, 1, 50)[:, None] * np.ones((1, 3))
    out = augment.time_warp(x, rng, 0.4)
    np.testing.assert_allclose(out[0], x[0], atol=1e-12)
    np.testing.assert_allclose(out[-1], x[-1], atol=1e-12)


# ---------------------------------------------------------------------------
# spec validation and the window-level API


def test_spec_rejects_unknown_kind():
    with pytest.raises(ConfigError):
        AugmentationSpec("rotate")


def test_spec_rejects_unknown_param():
    with pytest.raises(ConfigError):
        AugmentationSpec("jitter", {"sigma": 0.1, "gain": 2.0})


def test_spec_requires_sigma():
    with pytest.raises(ConfigError):
        AugmentationSpec("jitter")


def test_spec_rejects_negative_sigma():
    with pytest.raises(ConfigError):
        AugmentationSpec("jitter", {"sigma": -0.5})


def test_spec_rejects_fractional_knots():
    with pytest.raises(ConfigError):
        AugmentationSpec("magnitude_warp", {"sigma": 0.1, "knots": 2.5})


def test_permutation_segments_capped_by_length():
    spec = AugmentationSpec("permutation", {"segments": 9})
    with pytest.raises(ConfigError):
        spec.apply(np.zeros((4, 2)), np.random.default_rng(0))


def test_channel_shuffle_needs_two_channels():
    with pytest.raises(ConfigError):
        AugmentationSpec("channel_shuffle").apply(
            np.zeros((10, 1)), np.random.default_rng(0))


def test_positive_pair_views_differ_and_share_label():
    w = Window(np.random.default_rng(0).standard_normal((20, 3)), user_id=7)
    specs = [AugmentationSpec("jitter", {"sigma": 0.5})]
    a, b = augment.sample_positive_pair(w, specs, np.random.default_rng(1))
    assert a.user_id == b.user_id == 7
    assert not np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, w.values)


def test_apply_chain_composes_in_order():
    w = Window(np.arange(12.0).reshape(6, 2))
    specs = [AugmentationSpec("negation"), AugmentationSpec("flip")]
    out = augment.apply_chain(w, specs, np.random.default_rng(0))
    np.testing.assert_array_equal(out.values, -w.values[::-1])


def test_mtssl_example_bit_matches_application():
    w = Window(np.random.default_rng(2).standard_normal((16, 2)))
    spec = AugmentationSpec("negation")
    seen = set()
    for seed in range(40):
        out, bit = augment.mtssl_example(w, spec, np.random.default_rng(seed))
        seen.add(bit)
        if bit:
            np.testing.assert_array_equal(out.values, -w.values)
        else:
            np.testing.assert_array_equal(out.values, w.values)
    assert seen == {0, 1}  # both outcomes occur
