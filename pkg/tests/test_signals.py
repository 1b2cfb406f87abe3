import math

import numpy as np
import pytest

from gpgd.signals import (
    NoiseSpec,
    Signal,
    SignalError,
    add_noise,
    psnr,
    signal_from_csv,
    signal_from_raw,
    signal_to_csv,
    signal_to_raw,
)


def test_psnr_exact_match_is_inf_sentinel():
    x = np.array([0.2, 0.7, 1.0])
    assert psnr(x, x) == math.inf


def test_psnr_closed_form_mse_001():
    ref = np.zeros(100)
    x = np.full(100, 0.1)  # MSE = 0.01
    assert psnr(x, ref) == pytest.approx(20.0, abs=1e-12)


def test_psnr_constant_offset():
    rng = np.random.default_rng(0)
    ref = rng.uniform(0, 0.9, 50)
    assert psnr(ref + 0.1, ref) == pytest.approx(20.0, abs=1e-12)


def test_psnr_length_mismatch():
    with pytest.raises(SignalError):
        psnr(np.zeros(3), np.zeros(4))


def test_add_noise_sigma_zero_unchanged():
    y = np.array([1.0, 2.0, 3.0])
    out = add_noise(y, NoiseSpec(0.0, seed=5))
    assert np.array_equal(out, y)


def test_add_noise_deterministic_per_seed():
    y = np.zeros(64)
    a = add_noise(y, NoiseSpec(0.05, seed=9))
    b = add_noise(y, NoiseSpec(0.05, seed=9))
    assert np.array_equal(a, b)
    c = add_noise(y, NoiseSpec(0.05, seed=10))
    assert not np.array_equal(a, c)


def test_add_noise_empirical_std():
    # Monte-Carlo on the implementation's own generator: 1e6 scalar draws.
    draws = add_noise(np.zeros(10**6), NoiseSpec(0.02, seed=3))
    assert 0.0199 <= draws.std() <= 0.0201


def test_noise_spec_rejects_negative_sigma():
    with pytest.raises(SignalError):
        NoiseSpec(-0.1, 0)


def test_signal_validation():
    with pytest.raises(SignalError):
        Signal(np.array([1.0, np.nan]))
    with pytest.raises(SignalError):
        Signal(np.array([]))
    with pytest.raises(SignalError):
        Signal(np.arange(5.0), shape2d=(2, 2))


def test_signal_csv_roundtrip_image(tmp_path):
    sig = Signal(np.linspace(0, 1, 12), shape2d=(3, 4))
    path = tmp_path / "sig.csv"
    signal_to_csv(sig, path)
    back = signal_from_csv(path)
    assert back.shape2d == (3, 4)
    assert np.array_equal(back.data, sig.data)


def test_signal_csv_roundtrip_flat(tmp_path):
    sig = Signal(np.array([0.25, 0.5, 1.0 / 3.0]))
    path = tmp_path / "sig.csv"
    signal_to_csv(sig, path)
    back = signal_from_csv(path)
    assert back.shape2d is None
    assert np.array_equal(back.data, sig.data)


def test_signal_raw_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    sig = Signal(rng.standard_normal(37))
    path = tmp_path / "sig.bin"
    signal_to_raw(sig, path)
    back = signal_from_raw(path)
    assert np.array_equal(back.data, sig.data)


def test_signal_raw_truncated(tmp_path):
    sig = Signal(np.arange(4.0))
    path = tmp_path / "sig.bin"
    signal_to_raw(sig, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-3])
    with pytest.raises(SignalError):
        signal_from_raw(path)
