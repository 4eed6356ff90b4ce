import numpy as np
import pytest

from adaptive_mhe.disturbance import NoiseSpec, corrupt, make_rng


def test_degenerate_spec_is_identity():
    spec = NoiseSpec("normal", 0.0, 0.0, 0.0, outlier_prob=0.0)
    clean = np.arange(40.0).reshape(10, 4)
    noisy, flags = corrupt(clean, spec, make_rng(0))
    np.testing.assert_array_equal(noisy, clean)
    assert not flags.any()


def test_normal_outlier_std():
    spec = NoiseSpec("normal", 0.0, 0.0, 0.0, outlier_prob=1.0)
    noisy, flags = corrupt(np.zeros((100000, 4)), spec, make_rng(3))
    assert flags[:, 2:].all() and not flags[:, :2].any()
    assert abs(noisy[:, 2].std() / 10.0 - 1) < 0.05
    assert abs(noisy[:, 3].std() / 10.0 - 1) < 0.05


def test_uniform_outlier_support():
    spec = NoiseSpec("uniform", 0.0, 0.0, 0.0, outlier_prob=1.0)
    noisy, _ = corrupt(np.zeros((100000, 4)), spec, make_rng(3))
    assert np.abs(noisy[:, 2:]).max() <= 10.0
    assert np.abs(noisy[:, 2:]).max() > 9.99


def test_flag_fraction():
    spec = NoiseSpec("uniform", outlier_prob=0.1)
    _, flags = corrupt(np.zeros((100000, 4)), spec, make_rng(11))
    assert abs(flags[:, 2].mean() - 0.1) < 0.01
    # simultaneous mode hits both position channels together
    np.testing.assert_array_equal(flags[:, 2], flags[:, 3])


def test_independent_channel_mode():
    spec = NoiseSpec("normal", outlier_prob=0.1, simultaneous=False)
    _, flags = corrupt(np.zeros((100000, 4)), spec, make_rng(11))
    both = np.mean(flags[:, 2] & flags[:, 3])
    assert abs(both - 0.01) < 0.003


def test_flags_match_perturbed_entries():
    spec = NoiseSpec("normal", 0.0, 0.0, 0.0, outlier_prob=0.3)
    noisy, flags = corrupt(np.zeros((5000, 4)), spec, make_rng(5))
    np.testing.assert_array_equal(noisy != 0.0, flags)


def test_base_noise_scales():
    spec = NoiseSpec("normal", outlier_prob=0.0)
    noisy, _ = corrupt(np.zeros((100000, 4)), spec, make_rng(2))
    np.testing.assert_allclose(noisy.std(axis=0), spec.scales, rtol=0.02)
    spec = NoiseSpec("uniform", outlier_prob=0.0)
    noisy, _ = corrupt(np.zeros((100000, 4)), spec, make_rng(2))
    np.testing.assert_allclose(np.abs(noisy).max(axis=0), spec.scales, rtol=1e-3)


def test_reproducible_streams():
    spec = NoiseSpec("uniform")
    a = corrupt(np.zeros((50, 4)), spec, make_rng(7, 3, 0))
    b = corrupt(np.zeros((50, 4)), spec, make_rng(7, 3, 0))
    c = corrupt(np.zeros((50, 4)), spec, make_rng(7, 4, 0))
    assert a[0].tobytes() == b[0].tobytes()
    assert a[0].tobytes() != c[0].tobytes()


def test_validation():
    with pytest.raises(ValueError):
        NoiseSpec("laplace")
    with pytest.raises(ValueError):
        NoiseSpec(outlier_prob=1.5)
    with pytest.raises(ValueError):
        NoiseSpec(sigma_xy=-1)
    with pytest.raises(ValueError):
        NoiseSpec(outlier_channels=(4,))
    with pytest.raises(ValueError):
        corrupt(np.zeros((3, 3)), NoiseSpec(), make_rng(0))
