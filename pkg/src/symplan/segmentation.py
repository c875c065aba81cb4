"""Stable-state detection on per-object temporal similarity."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, KeyFrameMismatch, ZeroNorm
from .features import ZERO_NORM_TOL

# values closer than this count as equal when walking plateaus
_PLATEAU_TOL = 1e-12


@dataclass(frozen=True)
class KeyFrameSet:
    trajectory_id: str
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) < 2 or idx[0] != 0 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"invalid key frames {idx}")
        object.__setattr__(self, "indices", idx)

    def to_json(self, series=None):
        out = {"trajectory_id": self.trajectory_id, "keyframes": list(self.indices)}
        if series is not None:
            out["series"] = [float(v) for v in series]
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(str(obj["trajectory_id"]), tuple(obj["keyframes"]))


@dataclass(frozen=True)
class SubSkill:
    trajectory_id: str
    start: int
    end: int

    @property
    def intermediate(self):
        return range(self.start + 1, self.end)


def temporal_similarity(traj):
    """Sum over objects of the cosine between frames t and t+1; length T-1."""
    f = traj.features
    norms = np.linalg.norm(f, axis=2)
    if (norms < ZERO_NORM_TOL).any():
        raise ZeroNorm(f"zero-norm object vector in trajectory {traj.id!r}")
    u = f / norms[:, :, None]
    cos = np.einsum("tkd,tkd->tk", u[:-1], u[1:])
    return cos.sum(axis=1)


def smooth(series, sigma_t=2.0, sigma_v=math.inf, k=7):
    """Bilateral weighted average over a +-k window (truncated at the ends).

    ``W(t, i) = exp(-(t-i)^2 / 2 sigma_t^2) * exp(-(s_t - s_i)^2 / 2 sigma_v^2)``;
    ``sigma_v = inf`` gives plain Gaussian smoothing.
    """
    if not sigma_t > 0:
        raise InvalidParameter("sigma_t must be positive")
    if not sigma_v > 0:
        raise InvalidParameter("sigma_v must be positive")
    if k < 1 or int(k) != k:
        raise InvalidParameter("half window k must be an integer >= 1")
    s = np.asarray(series, dtype=np.float64)
    n = s.size
    offsets = np.arange(-k, k + 1)
    idx = np.arange(n)[:, None] + offsets[None, :]
    valid = (idx >= 0) & (idx < n)
    idx_c = np.clip(idx, 0, n - 1)
    vals = s[idx_c]
    w = np.exp(-offsets.astype(np.float64) ** 2 / (2.0 * sigma_t ** 2))[None, :]
    w = np.broadcast_to(w, vals.shape).copy()
    if math.isfinite(sigma_v):
        w *= np.exp(-(vals - s[:, None]) ** 2 / (2.0 * sigma_v ** 2))
    w[~valid] = 0.0
    out = (w * vals).sum(axis=1) / w.sum(axis=1)
    # a weighted mean can leave [min, max] by rounding only
    return np.clip(out, s.min(), s.max()) if n else out


def _prominence(s, p):
    """Topographic prominence of index ``p`` in ``s``."""
    h = s[p]
    i = p
    left_min = h
    while i > 0:
        i -= 1
        if s[i] > h + _PLATEAU_TOL:
            break
        left_min = min(left_min, s[i])
    i = p
    right_min = h
    while i < s.size - 1:
        i += 1
        if s[i] > h + _PLATEAU_TOL:
            break
        right_min = min(right_min, s[i])
    return h - max(left_min, right_min)


def nms_peaks(series, w=10, min_prominence=0.0, trajectory_id="", num_frames=None):
    """Greedy non-maximum suppression over interior local maxima.

    Candidates are visited by descending value (ties: lower index first) and
    accepted unless within ``w`` of an accepted peak or less prominent than
    ``min_prominence``. Frames 0 and ``num_frames - 1`` are always included;
    ``num_frames`` defaults to ``len(series) + 1``.
    """
    if w < 1:
        raise InvalidParameter("suppression window must be >= 1")
    s = np.asarray(series, dtype=np.float64)
    T = s.size + 1 if num_frames is None else int(num_frames)
    candidates = []
    for t in range(1, s.size - 1):
        # a flat-topped peak is represented by its first (lowest) index
        if not s[t] > s[t - 1] + _PLATEAU_TOL:
            continue
        if s[t] > s[t + 1] + _PLATEAU_TOL or \
                (abs(s[t + 1] - s[t]) <= _PLATEAU_TOL and _flat_plateau_is_peak(s, t)):
            candidates.append(t)
    candidates.sort(key=lambda t: (-s[t], t))
    accepted = []
    for t in candidates:
        if any(abs(t - a) <= w for a in accepted):
            continue
        prom = _prominence(s, t)
        if prom <= 0.0 or prom < min_prominence:
            continue
        accepted.append(t)
    keys = sorted(set(accepted) | {0, T - 1})
    return KeyFrameSet(trajectory_id, tuple(keys))


def _flat_plateau_is_peak(s, t):
    lo = t
    while lo > 0 and abs(s[lo - 1] - s[t]) <= _PLATEAU_TOL:
        lo -= 1
    hi = t
    while hi < s.size - 1 and abs(s[hi + 1] - s[t]) <= _PLATEAU_TOL:
        hi += 1
    left_ok = lo > 0 and s[lo - 1] < s[t]
    right_ok = hi < s.size - 1 and s[hi + 1] < s[t]
    return left_ok and right_ok


def find_keyframes(traj, sigma_t=2.0, sigma_v=math.inf, k=7, w=10,
                   min_prominence=None):
    """temporal_similarity -> smooth -> nms_peaks for one trajectory.

    Returns ``(KeyFrameSet, smoothed_series)``.
    """
    if min_prominence is None:
        min_prominence = 0.05 * traj.num_objects
    raw = temporal_similarity(traj)
    sm = smooth(raw, sigma_t=sigma_t, sigma_v=sigma_v, k=k)
    kf = nms_peaks(sm, w=w, min_prominence=min_prominence,
                   trajectory_id=traj.id, num_frames=traj.num_frames)
    return kf, sm


def segment_skills(traj, keyframes):
    if keyframes.trajectory_id != traj.id:
        raise KeyFrameMismatch(
            f"key frames for {keyframes.trajectory_id!r} applied to {traj.id!r}")
    if keyframes.indices[-1] >= traj.num_frames:
        raise KeyFrameMismatch("key frame beyond trajectory end")
    idx = keyframes.indices
    return [SubSkill(traj.id, a, b) for a, b in zip(idx, idx[1:])]
