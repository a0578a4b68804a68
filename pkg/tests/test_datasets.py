import gzip
import struct
import warnings

import numpy as np
import pytest

from gil.datasets import (
    ConfigError,
    DataLoadError,
    Dataset,
    SequenceDataset,
    SyntheticSpec,
    balanced_batch_iter,
    batch_iter,
    load_csv,
    load_mnist_idx,
    split,
    standardize_columns,
    synthetic_mnar,
    synthetic_missing_probs,
    synthetic_sequences,
)


def write_idx(tmp_path, images, labels, gz=True, image_magic=2051):
    n, rows, cols = images.shape
    img = struct.pack(">IIII", image_magic, n, rows, cols) + images.astype(np.uint8).tobytes()
    lab = struct.pack(">II", 2049, len(labels)) + np.asarray(labels, np.uint8).tobytes()
    opener = gzip.open if gz else open
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    with opener(ip, "wb") as f:
        f.write(img)
    with opener(lp, "wb") as f:
        f.write(lab)
    return ip, lp


def test_csv_missing_tokens_and_labels(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,label\n1,,yes\nNA,2.5,no\n3,4,yes\n")
    ds = load_csv(path, "label")
    assert ds.values.shape == (3, 2) and ds.feature_names == ("a", "b")
    assert np.array_equal(ds.mask, [[1, 0], [0, 1], [1, 1]])
    assert ds.labels.tolist() == [1, 0, 1]  # "no" < "yes"
    assert np.array_equal(ds.filled, [[1, 0], [0, 2.5], [3, 4]])


def test_csv_bad_cell_names_row_and_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,label\n1,2,0\n1,oops,1\n")
    with pytest.raises(DataLoadError, match=r"row 3, column 'b'"):
        load_csv(path, "label")


def test_csv_all_missing_column_warns(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,label\n1,,0\n2,,1\n")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = load_csv(path, "label")
    assert any("'b'" in str(w.message) for w in caught)
    assert np.array_equal(ds.column_means, [1.5, 0.0])


def test_csv_missing_label_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataLoadError):
        load_csv(path, "label")


def test_standardize_ignores_missing():
    v = np.array([[1.0, np.nan], [3.0, 5.0], [np.nan, 5.0]])
    out = standardize_columns(v)
    assert np.allclose(out[:2, 0], [-1, 1]) and np.isnan(out[2, 0])
    assert np.allclose(out[1:, 1], 0.0)


@pytest.mark.parametrize("gz", [True, False])
def test_idx_round_trip(tmp_path, gz, rng):
    images = rng.integers(0, 256, size=(5, 4, 3))
    ip, lp = write_idx(tmp_path, images, [0, 1, 2, 3, 4], gz)
    ds = load_mnist_idx(ip, lp)
    assert ds.values.shape == (5, 12)
    assert np.array_equal(ds.values * 255, images.reshape(5, 12))
    assert ds.labels.tolist() == [0, 1, 2, 3, 4] and ds.num_classes == 10
    assert np.array_equal(ds.truth, ds.values)
    assert len(load_mnist_idx(ip, lp, limit=2)) == 2


def test_idx_errors(tmp_path, rng):
    images = rng.integers(0, 256, size=(3, 2, 2))
    ip, lp = write_idx(tmp_path, images, [0, 1, 2], image_magic=1234)
    with pytest.raises(DataLoadError, match="magic"):
        load_mnist_idx(ip, lp)
    ip, lp = write_idx(tmp_path, images, [0, 1])
    with pytest.raises(DataLoadError, match="count"):
        load_mnist_idx(ip, lp)
    raw = gzip.open(ip).read()
    with gzip.open(ip, "wb") as f:
        f.write(raw[:-3])
    with pytest.raises(DataLoadError, match="truncated"):
        load_mnist_idx(ip, tmp_path / "lab.idx")


def test_bundled_mnist_subset():
    ds = load_mnist_idx("data/mnist/images-idx3-ubyte.gz", "data/mnist/labels-idx1-ubyte.gz")
    assert ds.values.shape == (10000, 784)
    assert 0.0 <= ds.values.min() and ds.values.max() <= 1.0
    assert set(np.unique(ds.labels)) == set(range(10))


def test_dataset_views():
    ds = Dataset(np.array([[1.0, np.nan], [np.nan, 4.0]]), np.array([0, 1]), 2, placeholder=-1.0)
    s = ds[0]
    assert np.array_equal(s.m, [1, 0]) and np.array_equal(s.x_filled, [1, -1]) and s.y == 0
    assert np.array_equal(ds.column_means, [1.0, 4.0])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([0, 5]), 2)


def test_sequence_dataset_views():
    seqs = [np.array([[1.0, np.nan], [2.0, 3.0]]), np.array([[np.nan, 5.0]])]
    ds = SequenceDataset(seqs, np.array([0, 1]), 2)
    sample = ds[0]
    assert sample.horizon == 2 and np.array_equal(sample.steps[0][1], [1, 0])
    assert np.array_equal(ds.column_means, [1.5, 4.0])
    assert ds.d == 2 and ds.subset([1]).sequences[0].shape == (1, 2)


def test_split_partitions(rng):
    ds = synthetic_mnar(n=100, d=4)
    tr, te = split(ds, 0.3, seed=5)
    assert len(tr) == 70 and len(te) == 30
    combined = np.vstack([tr.truth, te.truth])
    assert sorted(map(tuple, combined)) == sorted(map(tuple, ds.truth))
    assert np.array_equal(split(ds, 0.3, 5)[0].truth, tr.truth)
    with pytest.raises(ConfigError):
        split(ds, 1.5, 0)


def test_batch_iter_covers_each_epoch():
    it = batch_iter(10, 3, seed=0, epochs=2)
    batches = list(it)
    assert len(batches) == 6
    first_epoch = np.concatenate(batches[:3])
    assert len(set(first_epoch.tolist())) == 9  # one sample dropped per epoch
    with pytest.raises(ConfigError):
        next(batch_iter(5, 6, 0))


def test_balanced_batch_layout():
    ds = synthetic_mnar(n=200, d=4)
    for idx in balanced_batch_iter(ds, 8, seed=0, epochs=1):
        assert ds.labels[idx[:4]].tolist() == [1] * 4 and ds.labels[idx[4:]].tolist() == [0] * 4
    with pytest.raises(ConfigError):
        next(balanced_batch_iter(ds, 7, 0))
    multi = Dataset(np.zeros((6, 2)), np.array([0, 1, 2, 0, 1, 2]), 3)
    with pytest.raises(ConfigError):
        next(balanced_batch_iter(multi, 2, 0))


def test_synthetic_missingness_probabilities():
    spec = SyntheticSpec(d=4, mask_signal=0.3)
    p = synthetic_missing_probs(spec, np.array([1, 0]))
    assert np.allclose(p, [[0.65, 0.65, 0.35, 0.35], [0.35, 0.35, 0.65, 0.65]])


def test_synthetic_mnar_structure():
    ds = synthetic_mnar(n=4000, d=20, seed=1)
    assert ds.values.shape == (4000, 20) and ds.truth.shape == (4000, 20)
    observed = ~np.isnan(ds.values)
    assert np.array_equal(ds.values[observed], ds.truth[observed])
    pos = ds.labels == 1
    assert ds.mask[pos, :10].mean() < 0.4 < ds.mask[~pos, :10].mean()
    assert np.array_equal(synthetic_mnar(n=50, seed=3).truth, synthetic_mnar(n=50, seed=3).truth)


def test_synthetic_sequences_shapes():
    ds = synthetic_sequences(n=30, d=3, min_len=2, max_len=5, seed=0)
    assert len(ds) == 30 and all(2 <= len(s) <= 5 and s.shape[1] == 3 for s in ds.sequences)
    assert all(t.shape == s.shape for s, t in zip(ds.sequences, ds.truth))
