"""Two-tower contrastive reachability estimator.

``R(a, b) = phi(a) . psi(b)`` where each tower is a one-hidden-layer ReLU
MLP. Training uses binary NCE: future frames of the same trajectory
(hindsight offsets drawn from a truncated geometric law) are positives and
uniform dataset frames are negatives.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedTraining, NoKeyFramePairs, WidthMismatch
from .features import all_frame_features
from .store import read_artifact, write_artifact

LOGIT_CLAMP = 30.0
PARAM_NAMES = ("phi_W1", "phi_b1", "phi_W2", "phi_b2",
               "psi_W1", "psi_b1", "psi_W2", "psi_b2")


class TwoTowerModel:
    def __init__(self, params):
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in PARAM_NAMES}
        self.input_dim = self.params["phi_W1"].shape[1]
        self.hidden = self.params["phi_W1"].shape[0]
        self.embed = self.params["phi_W2"].shape[0]
        if self.params["psi_W1"].shape[1] != self.input_dim or \
                self.params["psi_W2"].shape[0] != self.embed:
            raise WidthMismatch("towers disagree on input/output width")

    @classmethod
    def init(cls, input_dim, hidden=64, embed=16, rng=None, zero_final=False):
        rng = np.random.default_rng(0) if rng is None else rng
        params = {}
        for tower in ("phi", "psi"):
            params[f"{tower}_W1"] = rng.normal(0.0, np.sqrt(2.0 / input_dim), (hidden, input_dim))
            params[f"{tower}_b1"] = np.zeros(hidden)
            if zero_final:
                params[f"{tower}_W2"] = np.zeros((embed, hidden))
            else:
                params[f"{tower}_W2"] = rng.normal(0.0, np.sqrt(1.0 / hidden), (embed, hidden))
            params[f"{tower}_b2"] = np.zeros(embed)
        return cls(params)

    def copy(self):
        return TwoTowerModel({k: v.copy() for k, v in self.params.items()})

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.input_dim:
            raise WidthMismatch(f"input width {X.shape[-1]} != {self.input_dim}")
        return X

    def _tower(self, name, X, keep=False):
        p = self.params
        z1 = X @ p[f"{name}_W1"].T + p[f"{name}_b1"]
        a1 = np.maximum(z1, 0.0)
        out = a1 @ p[f"{name}_W2"].T + p[f"{name}_b2"]
        return (out, (X, z1, a1)) if keep else out

    def phi(self, X):
        return self._tower("phi", self._check(X))

    def psi(self, X):
        return self._tower("psi", self._check(X))

    def _tower_backward(self, name, cache, dout, grads):
        X, z1, a1 = cache
        W2 = self.params[f"{name}_W2"]
        grads[f"{name}_W2"] = dout.T @ a1
        grads[f"{name}_b2"] = dout.sum(axis=0)
        dz1 = (dout @ W2) * (z1 > 0)
        grads[f"{name}_W1"] = dz1.T @ X
        grads[f"{name}_b1"] = dz1.sum(axis=0)


def score(model, o_a, o_b):
    """Reachability score of ``o_b`` from ``o_a`` (rows broadcast pairwise)."""
    a = model.phi(np.atleast_2d(o_a))
    b = model.psi(np.atleast_2d(o_b))
    s = np.einsum("ij,ij->i", a, b)
    return float(s[0]) if np.ndim(o_a) == 1 and np.ndim(o_b) == 1 else s


@dataclass
class PairBatch:
    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self):
        return len(self.anchors)


class FrameTable:
    """All frame features of a dataset stacked into one matrix."""

    def __init__(self, dataset):
        feats, starts, lengths = [], [], []
        offset = 0
        for tr in dataset.trajectories:
            feats.append(all_frame_features(tr))
            starts.append(offset)
            lengths.append(tr.num_frames)
            offset += tr.num_frames
        self.features = np.concatenate(feats)
        self.starts = np.array(starts)
        self.lengths = np.array(lengths)
        # anchor rows: every frame that has a successor
        anchor_rows = [np.arange(s, s + n - 1) for s, n in zip(starts, lengths)]
        self.anchor_rows = np.concatenate(anchor_rows)
        self.row_end = np.concatenate([np.full(n, s + n - 1) for s, n in zip(starts, lengths)])


def sample_pair_batch(dataset, gamma, batch_size, rng):
    table = dataset if isinstance(dataset, FrameTable) else FrameTable(dataset)
    rows = rng.choice(table.anchor_rows, size=batch_size)
    offsets = rng.geometric(1.0 - gamma, size=batch_size)
    pos = np.minimum(rows + offsets, table.row_end[rows])
    neg = rng.integers(0, len(table.features), size=batch_size)
    f = table.features
    return PairBatch(f[rows], f[pos], f[neg])


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def nce_binary_loss(model, batch, with_grad=True):
    """Mean binary-NCE loss and (optionally) its parameter gradients."""
    B = len(batch)
    phi_a, c_a = model._tower("phi", model._check(batch.anchors), keep=True)
    psi_in = np.concatenate([model._check(batch.positives), model._check(batch.negatives)])
    psi_out, c_psi = model._tower("psi", psi_in, keep=True)
    psi_p, psi_n = psi_out[:B], psi_out[B:]
    raw_p = np.einsum("ij,ij->i", phi_a, psi_p)
    raw_n = np.einsum("ij,ij->i", phi_a, psi_n)
    sp = np.clip(raw_p, -LOGIT_CLAMP, LOGIT_CLAMP)
    sn = np.clip(raw_n, -LOGIT_CLAMP, LOGIT_CLAMP)
    loss = -float(np.mean(_log_sigmoid(sp) + _log_sigmoid(-sn)))
    if not with_grad:
        return loss
    gp = (1.0 / (1.0 + np.exp(-sp)) - 1.0) / B
    gn = (1.0 / (1.0 + np.exp(-sn))) / B
    gp = np.where(np.abs(raw_p) > LOGIT_CLAMP, 0.0, gp)
    gn = np.where(np.abs(raw_n) > LOGIT_CLAMP, 0.0, gn)
    d_phi = gp[:, None] * psi_p + gn[:, None] * psi_n
    d_psi = np.concatenate([gp[:, None] * phi_a, gn[:, None] * phi_a])
    grads = {}
    model._tower_backward("phi", c_a, d_phi, grads)
    model._tower_backward("psi", c_psi, d_psi, grads)
    return loss, grads


@dataclass
class ReachabilityConfig:
    gamma: float = 0.95
    batch_size: int = 256
    hidden: int = 64
    embed: int = 16
    lr: float = 1e-2
    epochs: int = 200
    steps_per_epoch: int = 10
    grad_clip: float = 10.0
    percentile: float = 0.0
    seed: int = 0


@dataclass
class ReachabilityArtifact:
    model: TwoTowerModel
    delta: float
    gamma: float
    training_log: list = field(default_factory=list)


def _round_f32(model):
    return TwoTowerModel({k: v.astype(np.float32).astype(np.float64)
                          for k, v in model.params.items()})


def train_reachability(dataset, config=None, keyframe_sets=None):
    """SGD with global-norm clipping; returns the artifact with delta set.

    Parameters are rounded to float32 at the end so that the in-memory model
    and its serialized form score identically.
    """
    cfg = config or ReachabilityConfig()
    rng = np.random.default_rng(cfg.seed)
    table = FrameTable(dataset)
    model = TwoTowerModel.init(table.features.shape[1], cfg.hidden, cfg.embed, rng)
    log = []
    initial = None
    bad_steps = 0
    for _ in range(cfg.epochs):
        losses = []
        for _ in range(cfg.steps_per_epoch):
            batch = sample_pair_batch(table, cfg.gamma, cfg.batch_size, rng)
            loss, grads = nce_binary_loss(model, batch)
            if initial is None:
                initial = loss
            if not np.isfinite(loss) or loss > 10.0 * initial:
                bad_steps += 1
                if bad_steps >= 50 or not np.isfinite(loss):
                    raise DivergedTraining(f"reachability loss {loss:.4g} (initial {initial:.4g})")
            else:
                bad_steps = 0
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            scale = cfg.lr * min(1.0, cfg.grad_clip / norm) if norm > 0 else 0.0
            for k, g in grads.items():
                model.params[k] -= scale * g
            losses.append(loss)
        log.append(float(np.mean(losses)))
    model = _round_f32(model)
    delta = float("nan")
    if keyframe_sets is not None:
        delta = compute_threshold(model, dataset, keyframe_sets, cfg.percentile)
    return ReachabilityArtifact(model, delta, cfg.gamma, log)


def keyframe_pair_scores(model, dataset, keyframe_sets):
    starts, ends = [], []
    for kf in keyframe_sets:
        tr = dataset.trajectory(kf.trajectory_id)
        for a, b in zip(kf.indices, kf.indices[1:]):
            starts.append(tr.features[a].reshape(-1))
            ends.append(tr.features[b].reshape(-1))
    if not starts:
        raise NoKeyFramePairs("no consecutive key-frame pairs")
    return score(model, np.stack(starts), np.stack(ends))


def percentile_nearest_rank(values, q):
    """q-th percentile by nearest rank; q = 0 gives the minimum."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    idx = max(int(np.ceil(q / 100.0 * v.size)) - 1, 0)
    return float(v[min(idx, v.size - 1)])


def compute_threshold(model, dataset, keyframe_sets, percentile=0.0):
    scores = np.atleast_1d(keyframe_pair_scores(model, dataset, keyframe_sets))
    return percentile_nearest_rank(scores, percentile)


def save_reachability(path, artifact):
    m = artifact.model
    header = {
        "kind": "reachability",
        "dims": {"input": m.input_dim, "hidden": m.hidden, "embed": m.embed},
        "gamma": artifact.gamma,
        "delta": artifact.delta,
        "training_log": artifact.training_log,
    }
    write_artifact(path, header, [(k, m.params[k].astype("<f4")) for k in PARAM_NAMES])


def load_reachability(path):
    header, arrays = read_artifact(path)
    model = TwoTowerModel({k: arrays[k].astype(np.float64) for k in PARAM_NAMES})
    return ReachabilityArtifact(model, float(header["delta"]), float(header["gamma"]),
                                list(header.get("training_log", [])))

