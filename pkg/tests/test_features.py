import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ergoseg.errors import BadMagic, DimsMismatch, InvalidFeatures, TooFewVideos, TruncatedPayload, VersionUnsupported
from ergoseg.features import (
    Dataset,
    FeatureSequence,
    SplitSpec,
    iter_records,
    load_dataset,
    make_splits,
    nearest_prototype_accuracy,
    read_features,
    save_dataset,
    synth_generate,
    write_features,
)
from ergoseg.labels import LabelSet, run_length_encode


def test_one_by_one_round_trip():
    seq = FeatureSequence("v", 30.0, np.array([[0.5]]))
    blob = write_features(seq)
    assert blob[:4] == b"FSEQ"
    assert read_features(blob) == seq


def test_truncated():
    blob = write_features(FeatureSequence("v", 30.0, np.ones((3, 2))))
    for cut in (2, 10, 30, len(blob) - 1):
        with pytest.raises(TruncatedPayload):
            read_features(blob[:cut])


def test_bad_magic_and_version():
    blob = write_features(FeatureSequence("v", 30.0, np.ones((1, 1))))
    with pytest.raises(BadMagic):
        read_features(b"XXXX" + blob[4:])
    with pytest.raises(VersionUnsupported):
        read_features(blob[:4] + (2).to_bytes(4, "little") + blob[8:])


def test_large_random_round_trip():
    data = np.random.default_rng(0).standard_normal((1000, 256))
    blob = write_features(FeatureSequence("big", 25.0, data))
    back = read_features(blob)
    assert back.data.tobytes() == data.tobytes()
    assert write_features(back) == blob


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=20),
                  elements=st.floats(allow_nan=False, allow_infinity=False)),
       st.text(max_size=10), st.floats(0.01, 1000))
def test_round_trip_property(data, vid, fps):
    seq = FeatureSequence(vid, fps, data)
    assert read_features(write_features(seq)) == seq


def test_concatenated_records():
    a = FeatureSequence("a", 1.0, np.ones((2, 3)))
    b = FeatureSequence("b", 1.0, np.zeros((1, 3)))
    assert list(iter_records(io.BytesIO(write_features(a) + write_features(b)))) == [a, b]


def test_invalid_features():
    with pytest.raises(InvalidFeatures):
        FeatureSequence("v", 1.0, np.array([[np.nan]]))
    with pytest.raises(InvalidFeatures):
        FeatureSequence("v", 1.0, np.zeros((0, 3)))


def test_dataset_checks_lengths():
    seq = FeatureSequence("v", 1.0, np.ones((3, 2)))
    with pytest.raises(DimsMismatch):
        Dataset([(seq, np.zeros(2, dtype=int))], LabelSet(["a"]))


# --- splits ---------------------------------------------------------------------

def test_split_sizes():
    ids = [f"v{i:02d}" for i in range(20)]
    spec = make_splits(ids, 5, 0.25, seed=3)
    assert spec.n_splits == 5
    for train, test in spec.splits:
        assert len(train) == 15 and len(test) == 5
        assert not set(train) & set(test)
        assert set(train) | set(test) == set(ids)


def test_splits_deterministic_and_round_trip():
    ids = [f"v{i}" for i in range(10)]
    a, b = make_splits(ids, seed=1), make_splits(ids, seed=1)
    assert a == b
    assert SplitSpec.parse(a.dumps()) == a
    assert make_splits(ids, seed=2) != a


def test_splits_need_two_videos():
    with pytest.raises(TooFewVideos):
        make_splits(["only"])


@given(st.integers(2, 40), st.floats(0.01, 0.99), st.integers(0, 1000))
def test_split_invariants(n, frac, seed):
    ids = [str(i) for i in range(n)]
    for train, test in make_splits(ids, 3, frac, seed).splits:
        assert len(test) >= 1 and len(train) >= 1
        assert sorted(train + test, key=int) == ids


# --- synthetic data ------------------------------------------------------------

def test_zero_noise_segments_are_constant():
    ds = synth_generate(3, 4, 6, 10.0, 20, 0.0, seed=0)
    for seq, labels in ds.items:
        start = 0
        for _, n in run_length_encode(labels):
            block = seq.data[start:start + n]
            assert np.all(block == block[0])
            start += n


def test_single_class_is_one_run():
    ds = synth_generate(3, 1, 4, 10.0, 20, 0.1, seed=0)
    assert all(len(run_length_encode(labels)) == 1 for _, labels in ds.items)


def test_nearest_prototype_oracle():
    ds = synth_generate(6, 5, 16, 10.0, 40, 0.1, seed=0)
    assert nearest_prototype_accuracy(ds) > 0.99


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(5, 60), st.integers(0, 10**6))
def test_synthetic_invariants(n_videos, n_classes, mean, seed):
    ds = synth_generate(n_videos, n_classes, 3, 5.0, mean, 0.2, seed)
    again = synth_generate(n_videos, n_classes, 3, 5.0, mean, 0.2, seed)
    for (seq, labels), (seq2, labels2) in zip(ds.items, again.items):
        assert seq == seq2 and np.array_equal(labels, labels2)
        assert len(labels) == seq.frames
        runs = run_length_encode(labels)
        assert all(a[0] != b[0] for a, b in zip(runs, runs[1:]))
        assert all(n >= 5 for _, n in runs)


def test_mean_segment_length():
    ds = synth_generate(50, 5, 2, 5.0, 40, 0.0, seed=0)
    lengths = [n for _, labels in ds.items for _, n in run_length_encode(labels)[:-1]]
    assert np.mean(lengths) == pytest.approx(40, rel=0.1)


def test_dataset_on_disk(tmp_path):
    ds = synth_generate(3, 3, 4, 2.0, 10, 0.3, seed=5)
    manifest = save_dataset(ds, tmp_path)
    back = load_dataset(manifest)
    assert back.label_set == ds.label_set
    for (s1, l1), (s2, l2) in zip(ds.items, back.items):
        assert s1 == s2 and np.array_equal(l1, l2)
