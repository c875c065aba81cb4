"""Per-object state vocabularies from key-frame features.

Each object's key-frame features are clustered bottom-up (average linkage,
cosine distance), the cluster count is picked by silhouette, and frames are
labelled by a cosine k-nearest-neighbour vote over the clustered exemplars.
A symbolic state is a plain tuple of per-object labels.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, SingleCluster, TooFewSamples
from .features import FrameRef
from .segmentation import segment_skills

SILHOUETTE_FLOOR = 0.1
_STATIC_TOL = 1e-9


def _unit_rows(X):
    X = np.asarray(X, dtype=np.float64)
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def cosine_distances(X, Y=None):
    U = _unit_rows(X)
    V = U if Y is None else _unit_rows(Y)
    return np.clip(1.0 - U @ V.T, 0.0, 2.0)


def linkage_merges(X):
    """Full average-linkage merge sequence under cosine distance.

    Returns a list of ``(i, j)`` pairs (``i < j``, cluster representatives
    named by their lowest member index); at each step the closest pair is
    merged, ties going to the lexicographically smallest ``(i, j)``.
    """
    n = len(X)
    D = cosine_distances(X)
    np.fill_diagonal(D, np.inf)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    for _ in range(n - 1):
        M = np.where(active[:, None] & active[None, :], D, np.inf)
        M = np.triu(M, 1) + np.tril(np.full_like(M, np.inf))
        flat = int(np.argmin(M))
        i, j = divmod(flat, n)
        merges.append((i, j))
        ni, nj = sizes[i], sizes[j]
        row = (ni * D[i] + nj * D[j]) / (ni + nj)
        D[i, :] = row
        D[:, i] = row
        D[i, i] = np.inf
        sizes[i] = ni + nj
        active[j] = False
        D[j, :] = np.inf
        D[:, j] = np.inf
    return merges


def cut_merges(merges, n_points, n_clusters):
    """Labels after replaying merges until ``n_clusters`` remain.

    Labels are numbered by each cluster's lowest member index.
    """
    parent = list(range(n_points))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in merges[:n_points - n_clusters]:
        ri, rj = find(i), find(j)
        parent[max(ri, rj)] = min(ri, rj)
    roots = [find(a) for a in range(n_points)]
    order = {}
    for r in roots:
        order.setdefault(r, len(order))
    return np.array([order[r] for r in roots], dtype=np.int64)


def agglomerative_cluster(features, n):
    features = np.asarray(features, dtype=np.float64)
    if n < 1 or len(features) < n:
        raise TooFewSamples(f"{len(features)} samples for {n} clusters")
    return cut_merges(linkage_merges(features), len(features), n)


def silhouette_score(features, labels, distances=None):
    """Mean silhouette under cosine distance; singleton members score 0."""
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    D = cosine_distances(features) if distances is None else distances
    n = len(labels)
    onehot = (labels[:, None] == uniq[None, :]).astype(np.float64)
    counts = onehot.sum(axis=0)
    sums = D @ onehot  # [n, clusters]
    own = np.searchsorted(uniq, labels)
    own_count = counts[own]
    a = sums[np.arange(n), own] / np.maximum(own_count - 1, 1)
    means = sums / counts[None, :]
    means[np.arange(n), own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[own_count <= 1] = 0.0
    return float(s.mean())


def silhouette_sweep(features, n_min, n_max):
    """Silhouette per candidate cluster count, sharing one dendrogram."""
    features = np.asarray(features, dtype=np.float64)
    if not 2 <= n_min <= n_max <= len(features) - 1:
        raise InvalidParameter(
            f"need 2 <= n_min <= n_max <= {len(features) - 1}, got [{n_min}, {n_max}]")
    merges = linkage_merges(features)
    D = cosine_distances(features)
    return {n: silhouette_score(features, cut_merges(merges, len(features), n), D)
            for n in range(n_min, n_max + 1)}


def select_cluster_count(features, n_min, n_max):
    scores = silhouette_sweep(features, n_min, n_max)
    return max(scores, key=lambda n: (scores[n], -n))


@dataclass(frozen=True, eq=False)
class ObjectSymbolModel:
    object_index: int
    num_clusters: int
    exemplars: np.ndarray  # unit-normalized, [M, D]
    labels: np.ndarray     # [M]
    k_nn: int = 5
    silhouette: float = float("nan")

    def label(self, X):
        """Cosine k-NN majority vote for each row of ``X``; ties to smallest label."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.num_clusters == 1:
            return np.zeros(len(X), dtype=np.int64)
        D = cosine_distances(X, self.exemplars)
        k = min(self.k_nn, len(self.labels))
        nearest = np.argsort(D, axis=1, kind="stable")[:, :k]
        out = np.empty(len(X), dtype=np.int64)
        for r, row in enumerate(nearest):
            votes = np.bincount(self.labels[row], minlength=self.num_clusters)
            out[r] = int(np.argmax(votes))
        return out

    def cluster_sizes(self):
        return np.bincount(self.labels, minlength=self.num_clusters).tolist()


def fit_object_model(features, object_index, k_nn=5, n_range=(2, 8)):
    features = np.asarray(features, dtype=np.float64)
    if len(features) < 1:
        raise TooFewSamples(f"object {object_index}: no key-frame features")
    unit = _unit_rows(features)
    n, sil = 1, float("nan")
    static = len(features) < 3 or cosine_distances(unit).max() < _STATIC_TOL
    if not static:
        n_min = min(n_range[0], len(features) - 1)
        n_max = min(n_range[1], len(features) - 1)
        scores = silhouette_sweep(unit, n_min, n_max)
        best = max(scores, key=lambda c: (scores[c], -c))
        sil = scores[best]
        if sil >= SILHOUETTE_FLOOR:
            n = best
    labels = agglomerative_cluster(unit, n)
    return ObjectSymbolModel(object_index, n, unit, labels, k_nn, sil)


def keyframe_refs(dataset, keyframe_sets):
    refs = []
    for kf in keyframe_sets:
        refs.extend(FrameRef(kf.trajectory_id, t) for t in kf.indices)
    return refs


def fit_object_models(dataset, keyframe_sets, k_nn=5, n_range=(2, 8)):
    refs = keyframe_refs(dataset, keyframe_sets)
    if not refs:
        raise TooFewSamples("no key frames")
    pooled = np.stack([dataset.trajectory(r.trajectory_id).features[r.frame_index]
                       for r in refs])  # [M, K, D]
    return [fit_object_model(pooled[:, k, :], k, k_nn, n_range)
            for k in range(pooled.shape[1])]


def label_frames(models, frames):
    """Symbolic states for an array of object features shaped [N, K, D]."""
    frames = np.asarray(frames, dtype=np.float64)
    cols = [m.label(frames[:, m.object_index, :]) for m in models]
    return [tuple(int(c[i]) for c in cols) for i in range(len(frames))]


def label_state(models, traj, t):
    return label_frames(models, traj.features[t:t + 1])[0]


def label_feature(models, feature):
    """Label one concatenated frame feature of length K*D."""
    K = len(models)
    return label_frames(models, np.asarray(feature).reshape(1, K, -1))[0]


@dataclass(frozen=True)
class SymbolicTransition:
    before: tuple
    after: tuple
    provenance: tuple  # (start FrameRef, end FrameRef)


def label_keyframes(dataset, keyframe_sets, models):
    """FrameRef -> symbolic state for every key frame, in key-frame order."""
    out = {}
    for kf in keyframe_sets:
        traj = dataset.trajectory(kf.trajectory_id)
        states = label_frames(models, traj.features[list(kf.indices)])
        for t, z in zip(kf.indices, states):
            out[FrameRef(traj.id, t)] = z
    return out


def extract_transitions(dataset, keyframe_sets, models, labels=None):
    if labels is None:
        labels = label_keyframes(dataset, keyframe_sets, models)
    out = []
    for kf in keyframe_sets:
        traj = dataset.trajectory(kf.trajectory_id)
        for sk in segment_skills(traj, kf):
            a = FrameRef(traj.id, sk.start)
            b = FrameRef(traj.id, sk.end)
            if labels[a] != labels[b]:
                out.append(SymbolicTransition(labels[a], labels[b], (a, b)))
    return out


def vocabulary_json(models, object_names=()):
    out = []
    for m in models:
        name = object_names[m.object_index] if m.object_index < len(object_names) else None
        out.append({
            "object_index": m.object_index,
            "name": name,
            "n": m.num_clusters,
            "exemplar_counts": m.cluster_sizes(),
            "silhouette": None if np.isnan(m.silhouette) else m.silhouette,
            "k_nn": m.k_nn,
        })
    return out


def models_to_arrays(models):
    header = {"objects": [{"object_index": m.object_index, "n": m.num_clusters,
                           "k_nn": m.k_nn,
                           "silhouette": None if np.isnan(m.silhouette) else m.silhouette}
                          for m in models]}
    arrays = []
    for m in models:
        arrays.append((f"exemplars_{m.object_index}", m.exemplars))
        arrays.append((f"labels_{m.object_index}", m.labels))
    return header, arrays


def models_from_arrays(header, arrays):
    models = []
    for obj in header["objects"]:
        i = obj["object_index"]
        sil = obj["silhouette"]
        models.append(ObjectSymbolModel(
            i, obj["n"], arrays[f"exemplars_{i}"], arrays[f"labels_{i}"].astype(np.int64),
            obj["k_nn"], float("nan") if sil is None else sil))
    return models

