import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from transfer_lmr.core import (CountMismatchError, DimensionError, FeatureDataset, HeaderError,
                               LabelRangeError, NonFiniteError, dataset_bytes, load_dataset,
                               one_hot, parse_dataset, rng_stream, save_dataset, sidecar_path)
from transfer_lmr.synthgen import METEOR_COUNTS


def make_ds(n=6, t=3, d=4, c=3, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % c
    return FeatureDataset(rng.standard_normal((n, t, d)).astype(np.float32), labels,
                          [f"k{j}" for j in range(c)])


@st.composite
def datasets(draw):
    n = draw(st.integers(0, 12))
    t = draw(st.integers(1, 4))
    d = draw(st.integers(1, 5))
    c = draw(st.integers(1, 4))
    labels = draw(st.lists(st.integers(0, c - 1), min_size=n, max_size=n))
    vals = draw(st.lists(st.floats(-1e6, 1e6, width=32), min_size=n * t * d, max_size=n * t * d))
    names = draw(st.lists(st.text(st.characters(blacklist_characters="\x00", blacklist_categories=("Cs",)),
                                  max_size=6), min_size=c, max_size=c))
    return FeatureDataset(np.array(vals, dtype=np.float32).reshape(n, t, d), np.array(labels, dtype=np.int64), names)


@given(datasets())
def test_roundtrip_property(ds):
    back = parse_dataset(dataset_bytes(ds))
    assert back == ds
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.class_counts, ds.class_counts)


def test_save_load_roundtrip_and_sidecar(tmp_path):
    ds = make_ds()
    p = tmp_path / "a.ftlm"
    save_dataset(ds, p, {"generator": "test"})
    back = load_dataset(p)
    assert back == ds
    meta = json.loads(sidecar_path(p).read_text())
    assert meta["dims"] == {"N": 6, "T": 3, "D": 4, "C": 3}
    assert meta["class_counts"] == [2, 2, 2]
    assert meta["provenance"] == {"generator": "test"}


def test_deterministic_bytes(tmp_path):
    ds = make_ds()
    save_dataset(ds, tmp_path / "a.ftlm")
    save_dataset(ds, tmp_path / "b.ftlm")
    assert (tmp_path / "a.ftlm").read_bytes() == (tmp_path / "b.ftlm").read_bytes()


def test_empty_dataset(tmp_path):
    ds = FeatureDataset(np.zeros((0, 2, 3), np.float32), np.zeros(0, np.int64), ["a", "b"])
    save_dataset(ds, tmp_path / "e.ftlm")
    back = load_dataset(tmp_path / "e.ftlm")
    assert back.dims == (0, 2, 3, 2)
    assert back.class_counts.tolist() == [0, 0]


def test_header_layout():
    ds = make_ds(n=2, t=1, d=1, c=2)
    buf = dataset_bytes(ds)
    assert buf[:4] == b"FTLM"
    assert int.from_bytes(buf[4:8], "little") == 1
    assert int.from_bytes(buf[8:16], "little") == 2
    assert buf[28:33] == b"k0\x00k1"
    assert len(buf) == 28 + 6 + 2 * 4 + 2 * 4


def test_label_equal_to_c_rejected():
    ds = make_ds(n=3, c=3)
    buf = bytearray(dataset_bytes(ds))
    label_off = 28 + len(b"k0\x00k1\x00k2\x00")
    buf[label_off:label_off + 4] = (3).to_bytes(4, "little")
    with pytest.raises(LabelRangeError, match="label out of range") as exc:
        parse_dataset(bytes(buf))
    assert exc.value.field == "labels"


def test_bad_magic_and_truncation():
    buf = dataset_bytes(make_ds())
    with pytest.raises(HeaderError) as exc:
        parse_dataset(b"XXXX" + buf[4:])
    assert exc.value.field == "magic"
    with pytest.raises(DimensionError):
        parse_dataset(buf[:-4])
    with pytest.raises(HeaderError):
        parse_dataset(buf[:10])


def test_non_finite_rejected():
    ds = make_ds()
    buf = bytearray(dataset_bytes(ds))
    buf[-4:] = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(NonFiniteError) as exc:
        parse_dataset(bytes(buf))
    assert exc.value.field == "features"


def test_counts_cross_checked(tmp_path):
    ds = make_ds()
    with pytest.raises(CountMismatchError):
        FeatureDataset(ds.features, ds.labels, ds.class_names, class_counts=[1, 2, 3])
    p = tmp_path / "a.ftlm"
    save_dataset(ds, p)
    meta = json.loads(sidecar_path(p).read_text())
    meta["class_counts"] = [3, 2, 1]
    sidecar_path(p).write_text(json.dumps(meta))
    with pytest.raises(CountMismatchError):
        load_dataset(p)


def test_ragged_or_bad_shapes_rejected():
    with pytest.raises(DimensionError):
        FeatureDataset(np.zeros((2, 3), np.float32), [0, 1], ["a", "b"])
    with pytest.raises(DimensionError):
        FeatureDataset(np.zeros((2, 1, 3), np.float32), [0], ["a", "b"])


def test_meteor_like_counts_sum(tmp_path):
    counts = METEOR_COUNTS
    labels = np.repeat(np.arange(5), counts)
    ds = FeatureDataset(np.zeros((len(labels), 1, 1), np.float32), labels, list("abcde"))
    save_dataset(ds, tmp_path / "m.ftlm")
    back = load_dataset(tmp_path / "m.ftlm")
    assert back.class_counts.tolist() == list(counts)
    assert back.class_counts.sum() == 7198


def test_dataset_is_read_only():
    ds = make_ds()
    with pytest.raises(ValueError):
        ds.features[0, 0, 0] = 1.0


@pytest.mark.parametrize("y,c,expected", [(2, 5, [0, 0, 1, 0, 0]), (0, 1, [1])])
def test_one_hot(y, c, expected):
    assert one_hot(y, c).tolist() == expected


def test_one_hot_rows_sum_to_one_and_range():
    rows = one_hot(np.array([0, 3, 1]), 4)
    assert np.allclose(rows.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        one_hot(4, 4)


def test_rng_streams_independent_and_reproducible():
    a = rng_stream(7, "sampler").random(5)
    assert np.array_equal(a, rng_stream(7, "sampler").random(5))
    assert not np.array_equal(a, rng_stream(7, "mixer").random(5))
    assert not np.array_equal(a, rng_stream(8, "sampler").random(5))
