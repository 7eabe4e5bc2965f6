"""The finite-difference harness itself: green on real gradients, red on fakes."""

import numpy as np

from siamts import gradcheck


def test_numeric_grad_on_quadratic():
    x = np.array([3.0, -2.0])
    g = gradcheck.numeric_grad(lambda: float(np.sum(x * x)), x)
    np.testing.assert_allclose(g, 2 * x, rtol=1e-8)


def test_numeric_grad_restores_input():
    x = np.array([1.0, 2.0, 3.0])
    gradcheck.numeric_grad(lambda: float(x.sum()), x)
    np.testing.assert_array_equal(x, [1.0, 2.0, 3.0])


def test_max_rel_err_floors_denominator():
    # tiny absolute differences near zero are not blown up into huge ratios
    a = np.array([1e-9])
    b = np.array([2e-9])
    assert gradcheck.max_rel_err(a, b) == 1e-9


def test_suite_passes():
    results = gradcheck.run_suite()
    failed = [r for r in results if not r.passed]
    assert not failed, [f"{r.name}: {r.max_rel_err:.2e}" for r in failed]


def test_suite_covers_every_layer_type():
    names = {r.name for r in gradcheck.run_suite()}
    for needle in ("matmul", "relu", "conv1d", "dense", "softmax_cross_entropy",
                   "sigmoid_bce", "cosine_similarity", "batch_standardize",
                   "global_avg_pool", "simsiam_loss"):
        assert any(needle in n for n in names), f"no check mentions {needle}"


def test_perturbation_is_detected():
    """A corrupted analytic gradient must trip the harness, or the harness
    proves nothing."""
    results = gradcheck.run_suite(perturb=True)
    assert any(not r.passed for r in results)
