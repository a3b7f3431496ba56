import numpy as np
import pytest

from dcwh import data as D
from dcwh.errors import ConfigError, FormatError, LabelRangeError, TruncatedFileError


def test_single_class_blobs():
    ds = D.gen_blobs(1, 10, 3, seed=0)
    assert len(ds) == 10 and np.all(ds.labels == 0)


def test_blobs_are_seeded():
    a, b = D.gen_blobs(4, 20, 5, seed=9), D.gen_blobs(4, 20, 5, seed=9)
    assert a.features.tobytes() == b.features.tobytes()
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.features, D.gen_blobs(4, 20, 5, seed=10).features)


def test_tiny_spread_collapses_classes():
    ds = D.gen_blobs(3, 50, 4, spread=1e-4, seed=1)
    for c in range(3):
        x = ds.features[ds.labels == c]
        assert x.var(axis=0).sum() < 1e-6


def test_blob_means_on_sphere():
    ds = D.gen_blobs(5, 2000, 3, spread=0.5, seed=2)
    for c in range(5):
        assert np.linalg.norm(ds.features[ds.labels == c].mean(axis=0)) == \
            pytest.approx(5.0, abs=0.1)


@pytest.mark.parametrize("args", [(0, 5, 2), (2, 0, 2), (2, 5, 0)])
def test_blobs_reject_bad_counts(args):
    with pytest.raises(ConfigError):
        D.gen_blobs(*args)
    with pytest.raises(ConfigError):
        D.gen_blobs(2, 2, 2, spread=0.0)


def test_singleton_combos_match_single_label_layout():
    ml = D.gen_multilabel_blobs(3, 10, 4, [[0], [1], [2]], seed=3)
    sl = D.gen_blobs(3, 10, 4, seed=3)
    np.testing.assert_array_equal(ml.labels.argmax(axis=1), sl.labels)
    np.testing.assert_allclose(ml.features, sl.features)


def test_pair_combo_centred_at_midpoint():
    ds = D.gen_multilabel_blobs(2, 3000, 3, [[0], [1], [0, 1]], spread=0.2, seed=4)
    m0 = ds.features[:3000].mean(axis=0)
    m1 = ds.features[3000:6000].mean(axis=0)
    m01 = ds.features[6000:].mean(axis=0)
    np.testing.assert_allclose(m01, (m0 + m1) / 2, atol=0.03)
    assert ds.labels[-1].tolist() == [1, 1]


def test_multilabel_blobs_seeded_and_validated():
    a = D.gen_multilabel_blobs(4, 5, 2, [[0, 1], [3]], seed=5)
    b = D.gen_multilabel_blobs(4, 5, 2, [[0, 1], [3]], seed=5)
    assert a.features.tobytes() == b.features.tobytes()
    with pytest.raises(ConfigError):
        D.gen_multilabel_blobs(4, 5, 2, [[]], seed=5)
    with pytest.raises(LabelRangeError):
        D.gen_multilabel_blobs(4, 5, 2, [[4]], seed=5)


def test_split_without_queries():
    ds = D.gen_blobs(3, 10, 2, seed=0)
    train, query, db = D.split(ds, D.SplitSpec(query_per_class=0))
    assert len(query) == 0 and len(db) == 30 and len(train) == 30


def test_split_per_class_counts_and_disjointness():
    ds = D.gen_blobs(4, 25, 2, seed=1)
    tr, q, db = D.split_indices(ds, D.SplitSpec(query_per_class=7, seed=3))
    assert np.bincount(ds.labels[q], minlength=4).tolist() == [7, 7, 7, 7]
    assert not set(q) & set(tr)
    assert set(db) == set(range(100)) - set(q)


def test_group2_split():
    ds = D.gen_blobs(4, 25, 2, seed=1)
    spec = D.SplitSpec(query_per_class=5, train_per_class=6, group2=True, seed=2)
    tr, q, db = D.split_indices(ds, spec)
    assert set(tr) <= set(db)
    assert not set(tr) & set(q)
    assert np.bincount(ds.labels[tr], minlength=4).tolist() == [6] * 4


def test_split_is_seeded():
    ds = D.gen_blobs(3, 20, 2, seed=1)
    a = D.split_indices(ds, D.SplitSpec(query_count=9, seed=4))
    b = D.split_indices(ds, D.SplitSpec(query_count=9, seed=4))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("spec", [dict(query_per_class=11), dict(query_count=31),
                                  dict(query_count=5, train_count=26)])
def test_split_infeasible(spec):
    ds = D.gen_blobs(3, 10, 2, seed=0)
    with pytest.raises(ConfigError):
        D.split(ds, D.SplitSpec(**spec))


def test_split_spec_validation():
    with pytest.raises(ConfigError):
        D.SplitSpec(query_per_class=1, query_count=1)
    with pytest.raises(ConfigError):
        D.SplitSpec(group2=True)


@pytest.mark.parametrize("multi", [False, True])
def test_file_round_trip(tmp_path, multi):
    if multi:
        ds = D.gen_multilabel_blobs(11, 4, 5, [[0, 10], [3], [1, 2, 9]], seed=6)
    else:
        ds = D.gen_blobs(5, 7, 3, seed=6)
    D.write_dataset(tmp_path / "d.dcw1", ds)
    back = D.read_dataset(tmp_path / "d.dcw1")
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.class_count == ds.class_count and back.multilabel == multi


def test_file_bad_magic():
    buf = bytearray(D.dataset_to_bytes(D.gen_blobs(2, 2, 2)))
    buf[:4] = b"DCW2"
    with pytest.raises(FormatError):
        D.dataset_from_bytes(bytes(buf))


def test_file_truncated():
    buf = D.dataset_to_bytes(D.gen_blobs(2, 2, 2))
    with pytest.raises(TruncatedFileError):
        D.dataset_from_bytes(buf[:-2])


def test_file_label_out_of_range():
    ds = D.gen_blobs(3, 2, 2)
    buf = bytearray(D.dataset_to_bytes(ds))
    buf[-4:] = (3).to_bytes(4, "little")
    with pytest.raises(LabelRangeError):
        D.dataset_from_bytes(bytes(buf))


def test_file_errors_are_distinct():
    assert len({FormatError, TruncatedFileError, LabelRangeError}) == 3
    assert not issubclass(LabelRangeError, FormatError)
