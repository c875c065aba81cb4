"""Feature-sequence data model and the on-disk dataset format.

A dataset directory holds ``manifest.json`` and one raw binary per
trajectory containing ``T*K*D`` little-endian float32 values laid out as
``[frame][object][dim]``. Arrays are widened to float64 on load.
"""
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (IndexOutOfRange, MissingManifest, NonFiniteFeature,
                     ShapeMismatch, ZeroNorm)

ZERO_NORM_TOL = 1e-12
_DISK_DTYPE = np.dtype("<f4")


@dataclass(frozen=True, order=True)
class FrameRef:
    trajectory_id: str
    frame_index: int

    def to_json(self):
        return {"traj": self.trajectory_id, "frame": self.frame_index}

    @classmethod
    def from_json(cls, obj):
        return cls(str(obj["traj"]), int(obj["frame"]))


@dataclass(frozen=True, eq=False)
class PlayTrajectory:
    id: str
    features: np.ndarray  # [T, K, D], float64

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 3:
            raise ShapeMismatch(self.id, "[T, K, D]", feats.shape)
        T, K, D = feats.shape
        if T < 2 or K < 1 or D < 1:
            raise ShapeMismatch(self.id, "T>=2, K>=1, D>=1", feats.shape)
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @property
    def num_frames(self):
        return self.features.shape[0]

    @property
    def num_objects(self):
        return self.features.shape[1]

    @property
    def dim(self):
        return self.features.shape[2]


@dataclass(frozen=True, eq=False)
class PlayDataset:
    trajectories: tuple
    dim: int
    object_names: tuple = field(default=())

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "object_names", tuple(self.object_names))
        if trajs:
            K = trajs[0].num_objects
            for tr in trajs:
                if tr.num_objects != K or tr.dim != self.dim:
                    raise ShapeMismatch(tr.id, (K, self.dim),
                                        (tr.num_objects, tr.dim))
        ids = [tr.id for tr in trajs]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate trajectory ids")
        object.__setattr__(self, "_by_id", {tr.id: tr for tr in trajs})

    @property
    def num_objects(self):
        return self.trajectories[0].num_objects if self.trajectories else 0

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def trajectory(self, trajectory_id):
        try:
            return self._by_id[trajectory_id]
        except KeyError:
            raise IndexOutOfRange(f"unknown trajectory {trajectory_id!r}") from None

    def resolve(self, ref):
        """Concatenated frame feature for a FrameRef."""
        return frame_feature(self.trajectory(ref.trajectory_id), ref.frame_index)


def cosine_similarity(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < ZERO_NORM_TOL or nb < ZERO_NORM_TOL:
        raise ZeroNorm("cosine similarity of a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def frame_feature(traj, t):
    """The K object vectors at frame ``t`` concatenated in object order."""
    if not 0 <= t < traj.num_frames:
        raise IndexOutOfRange(f"frame {t} outside [0, {traj.num_frames})")
    return traj.features[t].reshape(-1)


def all_frame_features(traj):
    return traj.features.reshape(traj.num_frames, -1)


def _check_features(traj_id, feats):
    bad = ~np.isfinite(feats)
    if bad.any():
        t, k, d = (int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteFeature((traj_id, t, k, d))
    norms = np.linalg.norm(feats, axis=2)
    if (norms < ZERO_NORM_TOL).any():
        t, k = (int(i) for i in np.argwhere(norms < ZERO_NORM_TOL)[0])
        raise ZeroNorm(f"zero-norm object vector in {traj_id!r} at frame {t}, object {k}")


def load_dataset(root_path):
    manifest_path = os.path.join(root_path, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise MissingManifest(f"no manifest.json under {root_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    D = int(manifest["dim_d"])
    K = int(manifest["num_objects"])
    trajs = []
    for entry in manifest["trajectories"]:
        tid = str(entry["id"])
        T = int(entry["num_frames"])
        raw = np.fromfile(os.path.join(root_path, entry["file"]), dtype=_DISK_DTYPE)
        if raw.size != T * K * D:
            raise ShapeMismatch(tid, (T, K, D), f"{raw.size} values")
        feats = raw.reshape(T, K, D).astype(np.float64)
        _check_features(tid, feats)
        trajs.append(PlayTrajectory(tid, feats))
    return PlayDataset(tuple(trajs), D, tuple(manifest.get("object_names") or ()))


def save_dataset(dataset, root_path):
    """Write ``dataset`` in the manifest + raw float32 layout."""
    os.makedirs(root_path, exist_ok=True)
    entries = []
    for tr in dataset.trajectories:
        fname = f"{tr.id}.f32"
        tr.features.astype(_DISK_DTYPE).tofile(os.path.join(root_path, fname))
        entries.append({"id": tr.id, "num_frames": tr.num_frames, "file": fname})
    manifest = {
        "dim_d": dataset.dim,
        "num_objects": dataset.num_objects,
        "object_names": list(dataset.object_names),
        "trajectories": entries,
    }
    with open(os.path.join(root_path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
