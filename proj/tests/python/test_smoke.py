"""Smoke tests for the python bindings."""

import numpy as np
import pytest

import siammcvae as sm


def test_patchify_round_trip():
    rng = np.random.default_rng(7)
    img = rng.uniform(0, 255, size=(16, 16, 3))
    rows = sm.patchify(img, patch=8)
    assert rows.shape == (4, 192)
    back = sm.unpatchify(rows, 16, 16, 3, 8)
    np.testing.assert_array_equal(back, img)


def test_patchify_keep_subset():
    img = np.arange(4, dtype=float).reshape(2, 2, 1)
    rows = sm.patchify(img, patch=1, keep=[1, 3])
    np.testing.assert_array_equal(rows, [[1.0], [3.0]])


def test_sample_mask_deterministic():
    a = sm.sample_mask(0.75, 64, seed=3)
    b = sm.sample_mask(0.75, 64, seed=3)
    assert a.masked == b.masked
    assert len(a.masked) == 48
    assert sorted(a.masked + a.visible()) == list(range(64))


def test_metrics_identity_and_values():
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 255, size=(32, 32, 3))
    assert sm.mse(img, img) == 0.0
    assert sm.psnr(img, img) == 100.0
    assert sm.ssim(img, img) == pytest.approx(1.0, abs=1e-9)
    assert sm.fsim(img, img) == pytest.approx(1.0, abs=1e-9)
    shifted = img + 3.0
    assert sm.mse(img, shifted) == pytest.approx(9.0)
    assert sm.mae(img, shifted) == pytest.approx(3.0)


def test_scene_generation_shape_and_determinism():
    a = sm.generate_scene(seed=5, height=32, width=32, objects=2, length=4)
    b = sm.generate_scene(seed=5, height=32, width=32, objects=2, length=4)
    assert a.shape == (4, 32, 32, 3)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 255


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, size=(8, 8, 3)).astype(float)
    path = str(tmp_path / "x.ppm")
    sm.write_ppm(path, img)
    np.testing.assert_array_equal(sm.read_ppm(path), img)


def test_model_restore_keeps_visible_pixels(tmp_path):
    model = sm.Model(frame_height=16, frame_width=16, channels=3, patch_size=8,
                     width=8, latent_width=4, depth=1, dec_depth=1,
                     heads_enc=2, heads_dec=2, seed=3)
    assert model.patch_count == 4
    assert model.num_params > 0

    scene = sm.generate_scene(seed=9, height=16, width=16, objects=1, length=6)
    a1, a2 = scene[0], scene[4]
    restored = model.restore(a1, a2, masked=[1, 2])
    assert restored.shape == (16, 16, 3)
    # visible patches (0 and 3) are exact copies
    np.testing.assert_array_equal(restored[:8, :8], a2[:8, :8])
    np.testing.assert_array_equal(restored[8:, 8:], a2[8:, 8:])

    losses = model.loss(a1, a2, masked=[1, 2], beta=0.2, noise_seed=4)
    assert losses["total"] == pytest.approx(losses["recon"] + 0.2 * losses["kl"])

    # save/load round trip preserves behaviour
    path = str(tmp_path / "model.bin")
    model.save(path)
    again = sm.Model.load(path).restore(a1, a2, masked=[1, 2])
    np.testing.assert_array_equal(again, restored)


def test_errors_surface_as_core_error():
    with pytest.raises(sm.CoreError):
        sm.sample_mask(0.75, 0, seed=1)
    with pytest.raises(sm.CoreError):
        sm.PatchGrid(65, 64, 3, 8)
