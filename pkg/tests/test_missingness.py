import numpy as np
import pytest

from gil.datasets import Dataset, load_mnist_idx, synthetic_sequences
from gil.missingness import (
    MaskSpec,
    apply_mar_image,
    apply_mask,
    apply_mcar,
    apply_mnar_threshold,
    mar_image_probs,
    missing_rate,
)


def complete(rng, n=400, d=10):
    v = rng.normal(size=(n, d))
    return Dataset(v, rng.integers(0, 2, size=n), 2)


def test_mcar_rate_within_binomial_bounds(rng):
    ds = apply_mcar(complete(rng), 0.3, seed=0)
    n = 4000
    assert abs(missing_rate(ds) * n - 0.3 * n) <= 4 * np.sqrt(n * 0.3 * 0.7)


def test_mcar_keeps_observed_values_and_truth(rng):
    base = complete(rng)
    ds = apply_mcar(base, 0.5, seed=1)
    obs = ~np.isnan(ds.values)
    assert np.array_equal(ds.values[obs], base.values[obs])
    assert np.array_equal(ds.truth, base.values)
    again = apply_mcar(ds, 0.5, seed=2)
    assert np.all(np.isnan(again.values[np.isnan(ds.values)]))  # never un-masks
    assert np.array_equal(again.truth, base.values)


def test_mcar_zero_rate_and_determinism(rng):
    base = complete(rng)
    assert missing_rate(apply_mcar(base, 0.0, 0)) == 0.0
    a, b = apply_mcar(base, 0.4, 7), apply_mcar(base, 0.4, 7)
    assert np.array_equal(a.mask, b.mask)
    with pytest.raises(ValueError):
        apply_mcar(base, 1.0, 0)


def test_mcar_is_independent_of_values(rng):
    """Missing rate among large values matches the rate among small ones."""
    base = complete(rng, n=5000, d=4)
    ds = apply_mcar(base, 0.5, 3)
    big = base.values > 0
    miss = ds.mask == 0
    assert abs(miss[big].mean() - miss[~big].mean()) < 0.03


def test_mcar_on_sequences():
    seqs = synthetic_sequences(n=20, d=3, mask_signal=0.0, seed=0)
    ds = apply_mcar(seqs, 0.2, 0)
    assert missing_rate(ds) >= missing_rate(seqs)
    assert all(t.shape == s.shape for s, t in zip(ds.sequences, ds.truth))


def test_mar_image_top_rows_always_observed(rng):
    images = load_mnist_idx("data/mnist/images-idx3-ubyte.gz", "data/mnist/labels-idx1-ubyte.gz", limit=300)
    ds = apply_mar_image(images, observable_rows=14, steepness=4.0, seed=0)
    assert np.all(ds.mask[:, : 14 * 28] == 1)
    assert 0 < missing_rate(ds) < 0.5


def test_mar_image_depends_on_observed_part_only(rng):
    values = rng.random((50, 16))
    p = mar_image_probs(values, 2, 4.0, side=4)
    values2 = values.copy()
    values2[:, 8:] = rng.random((50, 8))
    assert np.array_equal(p, mar_image_probs(values2, 2, 4.0, side=4))
    brighter = values.copy()
    brighter[:, :8] += 0.5
    assert np.all(mar_image_probs(brighter, 2, 4.0, side=4) > p)


def test_mar_image_rejects_non_square_input(rng):
    with pytest.raises(ValueError):
        apply_mar_image(complete(rng, d=10), 2, 4.0, side=28)


def test_mnar_threshold_drops_exact_count():
    v = np.arange(20, dtype=float).reshape(10, 2)
    ds = apply_mnar_threshold(Dataset(v, np.zeros(10, dtype=int), 2), 0.3)
    # n - ceil(q n) = 10 - 3 per column, and exactly the largest values
    assert (ds.mask == 0).sum(axis=0).tolist() == [7, 7]
    assert np.nanmax(ds.values[:, 0]) < np.min(v[:, 0][ds.mask[:, 0] == 0])


def test_apply_mask_dispatch(rng):
    base = complete(rng)
    assert apply_mask(base, MaskSpec("none")) is base
    a = apply_mask(base, MaskSpec("mcar", 0.2, 5))
    assert np.array_equal(a.mask, apply_mcar(base, 0.2, 5).mask)
    with pytest.raises(ValueError):
        MaskSpec("mnar_magic")
