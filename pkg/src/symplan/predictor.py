"""Next-symbolic-state predictor: softmax regression over frame features."""
from dataclasses import dataclass

import numpy as np

from .errors import DivergedTraining
from .features import FrameRef, all_frame_features
from .segmentation import segment_skills
from .store import read_artifact, write_artifact


class SoftmaxPredictor:
    def __init__(self, weight, bias, node_vocab):
        self.weight = np.asarray(weight, dtype=np.float64)  # [num_nodes, K*D]
        self.bias = np.asarray(bias, dtype=np.float64)
        self.node_vocab = [tuple(z) for z in node_vocab]
        self._index = {z: i for i, z in enumerate(self.node_vocab)}

    def index_of(self, z):
        return self._index[tuple(z)]

    def logits(self, X):
        return np.atleast_2d(X) @ self.weight.T + self.bias

    def proba(self, X):
        return softmax(self.logits(X))


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def build_training_set(dataset, keyframe_sets, labels, node_vocab):
    """Frame features labelled with the symbolic state being moved toward.

    For every sub-skill whose endpoints carry different labels, each frame
    in ``(start, end]`` is labelled with the end state. A key frame not
    covered that way takes the end state of the next transition in its
    trajectory, or is dropped if none follows. ``labels`` maps key-frame
    FrameRefs to states.
    """
    vocab = {tuple(z): i for i, z in enumerate(node_vocab)}
    X, y = [], []
    for kf in keyframe_sets:
        traj = dataset.trajectory(kf.trajectory_id)
        frames = all_frame_features(traj)
        moves = []
        for sk in segment_skills(traj, kf):
            zb = labels[FrameRef(traj.id, sk.start)]
            za = labels[FrameRef(traj.id, sk.end)]
            if zb != za and za in vocab:
                moves.append((sk, vocab[za]))
        covered = set()
        for sk, target in moves:
            X.append(frames[sk.start + 1:sk.end + 1])
            y.append(np.full(sk.end - sk.start, target, dtype=np.int64))
            covered.add(sk.end)
        for t in kf.indices:
            if t in covered:
                continue
            nxt = next((target for sk, target in moves if sk.start >= t), None)
            if nxt is not None:
                X.append(frames[t:t + 1])
                y.append(np.array([nxt], dtype=np.int64))
    if not X:
        return np.zeros((0, dataset.num_objects * dataset.dim)), np.zeros(0, dtype=np.int64)
    return np.concatenate(X), np.concatenate(y)


@dataclass
class PredictorConfig:
    lr: float = 0.5
    epochs: int = 300
    seed: int = 0
    m: int = 3


def cross_entropy(predictor, X, y, with_grad=True):
    P = predictor.proba(X)
    n = len(y)
    loss = -float(np.mean(np.log(np.maximum(P[np.arange(n), y], 1e-300))))
    if not with_grad:
        return loss
    G = P.copy()
    G[np.arange(n), y] -= 1.0
    G /= n
    return loss, G.T @ X, G.sum(axis=0)


def train_predictor(X, y, node_vocab, config=None):
    """Full-batch gradient descent on cross-entropy; returns (predictor, log)."""
    cfg = config or PredictorConfig()
    rng = np.random.default_rng(cfg.seed)
    X = np.asarray(X, dtype=np.float64)
    n_classes = len(node_vocab)
    pred = SoftmaxPredictor(rng.normal(0.0, 0.01, (n_classes, X.shape[1])),
                            np.zeros(n_classes), node_vocab)
    log = []
    initial = None
    bad = 0
    for _ in range(cfg.epochs):
        loss, gW, gb = cross_entropy(pred, X, y)
        if initial is None:
            initial = loss
        if not np.isfinite(loss):
            raise DivergedTraining("predictor loss is not finite")
        bad = bad + 1 if loss > 10.0 * initial else 0
        if bad >= 50:
            raise DivergedTraining(f"predictor loss {loss:.4g} (initial {initial:.4g})")
        pred.weight -= cfg.lr * gW
        pred.bias -= cfg.lr * gb
        log.append(loss)
    pred = SoftmaxPredictor(pred.weight.astype(np.float32).astype(np.float64),
                            pred.bias.astype(np.float32).astype(np.float64), node_vocab)
    return pred, log


def predict_next(predictor, feature, m=3):
    """Top-``m`` (state, probability) pairs, ties broken by vocab index."""
    p = predictor.proba(np.asarray(feature, dtype=np.float64).reshape(1, -1))[0]
    order = np.lexsort((np.arange(p.size), -p))[:max(int(m), 1)]
    return [(predictor.node_vocab[i], float(p[i])) for i in order]


def save_predictor(path, predictor, training_log=()):
    header = {"kind": "predictor", "node_vocab": [list(z) for z in predictor.node_vocab],
              "training_log": list(training_log)}
    write_artifact(path, header, [("weight", predictor.weight.astype("<f4")),
                                  ("bias", predictor.bias.astype("<f4"))])


def load_predictor(path):
    header, arrays = read_artifact(path)
    pred = SoftmaxPredictor(arrays["weight"].astype(np.float64),
                            arrays["bias"].astype(np.float64), header["node_vocab"])
    return pred, header.get("training_log", [])
