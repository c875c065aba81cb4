import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symplan.errors import (IndexOutOfRange, MissingManifest, NonFiniteFeature,
                            ShapeMismatch, ZeroNorm)
from symplan.features import (FrameRef, PlayTrajectory, cosine_similarity, frame_feature,
                              load_dataset, save_dataset)

from conftest import make_dataset

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vec = arrays(np.float64, 6, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


def test_cosine_examples():
    assert cosine_similarity([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-12)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 0], [-1, 0]) == -1.0


def test_cosine_zero_norm():
    with pytest.raises(ZeroNorm):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


@given(vec)
def test_cosine_self_is_one(a):
    assert cosine_similarity(a, a) == pytest.approx(1.0, abs=1e-9)


@given(vec, vec, st.floats(1e-3, 1e3))
def test_cosine_symmetric_and_scale_invariant(a, b, lam):
    c = cosine_similarity(a, b)
    assert c == pytest.approx(cosine_similarity(b, a), abs=1e-9)
    assert c == pytest.approx(cosine_similarity(lam * a, b), abs=1e-9)
    assert -1.0 <= c <= 1.0


def test_frame_feature_concatenates():
    tr = PlayTrajectory("a", np.array([[[1.0, 0.0], [0.0, 1.0]]] * 2))
    np.testing.assert_array_equal(frame_feature(tr, 0), [1, 0, 0, 1])
    with pytest.raises(IndexOutOfRange):
        frame_feature(tr, 2)
    one = PlayTrajectory("b", np.array([[[3.0, 4.0]], [[1.0, 1.0]]]))
    np.testing.assert_array_equal(frame_feature(one, 1), [1.0, 1.0])


def _random_dataset(rng, lengths=(50, 60), K=3, D=8):
    return make_dataset([rng.normal(size=(T, K, D)) for T in lengths], ["a", "b", "c"])


def test_load_shapes(tmp_path, rng):
    save_dataset(_random_dataset(rng), tmp_path)
    ds = load_dataset(tmp_path)
    assert len(ds) == 2 and ds.dim == 8 and ds.num_objects == 3
    assert [t.num_frames for t in ds] == [50, 60]
    assert ds.resolve(FrameRef("t1", 59)).shape == (24,)


def test_roundtrip_bit_exact(tmp_path, rng):
    ds = _random_dataset(rng)
    save_dataset(ds, tmp_path / "a")
    once = load_dataset(tmp_path / "a")
    save_dataset(once, tmp_path / "b")
    twice = load_dataset(tmp_path / "b")
    for x, y in zip(once, twice):
        assert x.features.tobytes() == y.features.tobytes()
    # first save only loses float32 precision
    for x, y in zip(ds, once):
        np.testing.assert_array_equal(x.features.astype(np.float32), y.features)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float32, (4, 2, 3), elements=st.floats(0.5, 10, width=32)))
def test_roundtrip_property(tmp_path_factory, feats):
    root = tmp_path_factory.mktemp("rt")
    save_dataset(make_dataset([feats.astype(np.float64)]), root)
    assert load_dataset(root).trajectories[0].features.tobytes() == \
        feats.astype(np.float64).tobytes()


def test_shape_mismatch(tmp_path, rng):
    save_dataset(_random_dataset(rng), tmp_path)
    with open(tmp_path / "manifest.json") as fh:
        m = json.load(fh)
    m["dim_d"] = 7
    with open(tmp_path / "manifest.json", "w") as fh:
        json.dump(m, fh)
    with pytest.raises(ShapeMismatch):
        load_dataset(tmp_path)


def test_missing_manifest(tmp_path):
    with pytest.raises(MissingManifest):
        load_dataset(tmp_path)


def test_non_finite_and_zero_rejected(tmp_path, rng):
    ds = _random_dataset(rng, lengths=(5,))
    save_dataset(ds, tmp_path)
    path = os.path.join(tmp_path, "t0.f32")
    raw = np.fromfile(path, dtype="<f4")
    raw[7] = np.nan
    raw.tofile(path)
    with pytest.raises(NonFiniteFeature):
        load_dataset(tmp_path)
    raw[7] = 1.0
    raw[:8] = 0.0
    raw.tofile(path)
    with pytest.raises(ZeroNorm):
        load_dataset(tmp_path)
