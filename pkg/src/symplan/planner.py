"""Symbol-guided visual planning.

Each planning call: predict candidate next states from the current frame,
search the transition graph from every candidate to the goal, then pick one
indexed key frame per symbolic subgoal by beam search over reachability
scores with a feasibility floor ``delta``.
"""
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyIndexEntry, GoalNotInGraph, MaxStepsExceeded, NoPath
from .features import FrameRef
from .graph import SymbolicPath, astar
from .predictor import predict_next
from .store import read_artifact, write_artifact
from .symbols import label_feature


class GoalIndex:
    """Key frames grouped by symbolic state with precomputed tower outputs."""

    def __init__(self, entries):
        # entries: {state: (refs list, phi [n, E], psi [n, E])}
        self.entries = {tuple(z): v for z, v in sorted(entries.items())}

    def __contains__(self, z):
        return tuple(z) in self.entries

    def refs(self, z):
        return self.entries[tuple(z)][0]

    def size(self):
        return sum(len(v[0]) for v in self.entries.values())


def build_goal_index(dataset, keyframe_labels, model):
    grouped = {}
    for ref, z in keyframe_labels.items():
        grouped.setdefault(tuple(z), []).append(ref)
    entries = {}
    for z, refs in grouped.items():
        refs = sorted(refs)
        X = np.stack([dataset.resolve(r) for r in refs])
        entries[z] = (refs, model.phi(X), model.psi(X))
    return GoalIndex(entries)


def save_goal_index(path, index):
    states, arrays = [], []
    for i, (z, (refs, phi, psi)) in enumerate(index.entries.items()):
        states.append({"state": list(z), "frames": [r.to_json() for r in refs]})
        arrays.append((f"phi_{i}", phi))
        arrays.append((f"psi_{i}", psi))
    write_artifact(path, {"kind": "goal_index", "states": states}, arrays)


def load_goal_index(path):
    header, arrays = read_artifact(path)
    entries = {}
    for i, s in enumerate(header["states"]):
        refs = [FrameRef.from_json(r) for r in s["frames"]]
        entries[tuple(s["state"])] = (refs, arrays[f"phi_{i}"], arrays[f"psi_{i}"])
    return GoalIndex(entries)


@dataclass
class VisualPlan:
    symbolic_path: SymbolicPath
    subgoals: list
    pair_scores: list
    feasible: bool
    total_score: float
    delta: float = float("nan")
    observation_ref: FrameRef = None
    candidates: list = field(default_factory=list)
    timing_ms: float = None

    def violations(self):
        return [i for i, s in enumerate(self.pair_scores) if s < self.delta]

    def to_json(self, timing=True):
        out = {
            "symbolic_path": [list(z) for z in self.symbolic_path.states],
            "subgoals": [r.to_json() for r in self.subgoals],
            "pair_scores": [float(s) for s in self.pair_scores],
            "feasible": bool(self.feasible),
            "total_score": float(self.total_score),
            "delta": float(self.delta),
            "candidates": [{"state": list(z), "p": float(p)} for z, p in self.candidates],
        }
        if self.observation_ref is not None:
            out["observation"] = self.observation_ref.to_json()
        if timing and self.timing_ms is not None:
            out["timing_ms"] = self.timing_ms
        return out


def symbolic_plan(graph, candidates, goal, start=None, heuristic="hamming"):
    """Shortest path to ``goal`` over all candidate first states.

    Without ``start`` the cost of a candidate is its A* cost, as in the
    per-candidate search loop. With ``start`` (the labelled current state),
    candidates other than ``start`` must be its graph successors and pay one
    extra edge, and the returned path is rooted at ``start``. Equal costs go
    to the earlier (more probable) candidate.
    """
    goal = tuple(goal)
    if goal not in graph:
        raise GoalNotInGraph(f"goal {goal} is not a graph node")
    cands = [tuple(c) for c in candidates]
    if start is not None:
        start = tuple(start)
        cands = [c for c in cands if c == start or graph.has_edge(start, c)]
        if start not in cands:
            cands.append(start)
    best, best_cost = None, None
    for c in cands:
        if c not in graph:
            continue
        try:
            path = astar(graph, c, goal, heuristic)
        except NoPath:
            continue
        states = path.states
        if start is not None and c != start:
            states = (start,) + states
        cost = len(states) - 1
        if best_cost is None or cost < best_cost:
            best, best_cost = SymbolicPath(states), cost
    if best is None:
        raise NoPath(f"no candidate reaches {goal}")
    return best


def sample_candidates(index, states, per_state, rng):
    """Up to ``per_state`` entry positions per state, uniform without replacement."""
    picks = []
    for z in states:
        if z not in index or not index.refs(z):
            raise EmptyIndexEntry(z)
        n = len(index.refs(z))
        if n <= per_state:
            picks.append(np.arange(n))
        else:
            picks.append(np.sort(rng.choice(n, size=per_state, replace=False)))
    return picks


def _assemble(index, states, picks, choice, obs_phi, delta):
    refs, scores = [], []
    prev_phi = obs_phi
    for z, p, c in zip(states, picks, choice):
        rs, phi, psi = index.entries[tuple(z)]
        j = p[c]
        scores.append(float(np.dot(prev_phi, psi[j])))
        refs.append(rs[j])
        prev_phi = phi[j]
    return refs, scores


def beam_search_plan(index, path, obs_feature, model, delta, per_state=10, beam=5,
                     rng=None, picks=None):
    """One frame per subgoal state maximizing the summed reachability.

    Prefixes are ranked by (number of pairs below ``delta``, -score), so a
    feasible assembly is preferred whenever the beam holds one. The
    observation anchors the first pair only.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    states = list(path.states[1:])
    if picks is None:
        picks = sample_candidates(index, states, per_state, rng)
    obs_phi = model.phi(np.asarray(obs_feature).reshape(1, -1))[0]
    if not states:
        return VisualPlan(path, [], [], True, 0.0, delta)
    # beam entries: (violations, -score, choice tuple), last phi kept alongside
    beams = [(0, -0.0, ())]
    last_phi = [obs_phi]
    for z, p in zip(states, picks):
        _, phi, psi = index.entries[tuple(z)]
        expanded = []
        for (viol, neg, choice), prev in zip(beams, last_phi):
            for c, j in enumerate(p):
                sc = float(np.dot(prev, psi[j]))
                expanded.append((viol + int(sc < delta), neg - sc, choice + (c,)))
        expanded.sort()
        beams = expanded[:beam]
        last_phi = [phi[p[b[2][-1]]] for b in beams]
    choice = beams[0][2]
    refs, scores = _assemble(index, states, picks, choice, obs_phi, delta)
    feasible = all(sc >= delta for sc in scores)
    return VisualPlan(path, refs, scores, feasible, float(np.sum(scores)), delta)


def exhaustive_plan(index, path, obs_feature, model, delta, picks):
    """Brute-force counterpart of ``beam_search_plan`` over the same picks."""
    states = list(path.states[1:])
    obs_phi = model.phi(np.asarray(obs_feature).reshape(1, -1))[0]
    best = None
    for choice in itertools.product(*[range(len(p)) for p in picks]):
        refs, scores = _assemble(index, states, picks, choice, obs_phi, delta)
        key = (sum(s < delta for s in scores), -float(np.sum(scores)), choice)
        if best is None or key < best[0]:
            best = (key, refs, scores)
    key, refs, scores = best
    feasible = all(sc >= delta for sc in scores)
    return VisualPlan(path, refs, scores, feasible, float(np.sum(scores)), delta)


@dataclass
class ModelBundle:
    graph: object
    symbol_models: list
    reachability: object      # ReachabilityArtifact
    predictor: object         # SoftmaxPredictor
    index: GoalIndex

    @property
    def delta(self):
        return self.reachability.delta


@dataclass
class PlannerConfig:
    m: int = 3
    per_state: int = 10
    beam: int = 5
    heuristic: str = "hamming"
    seed: int = 0
    cache_path: bool = False


def plan(bundle, obs_feature, goal, config=None, rng=None, observation_ref=None):
    """Candidates -> symbolic path -> beam-searched visual plan."""
    cfg = config or PlannerConfig()
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    t0 = time.perf_counter()
    goal = tuple(goal)
    if goal not in bundle.graph:
        raise GoalNotInGraph(f"goal {goal} is not a graph node")
    obs_feature = np.asarray(obs_feature, dtype=np.float64).reshape(-1)
    candidates = predict_next(bundle.predictor, obs_feature, cfg.m)
    current = label_feature(bundle.symbol_models, obs_feature)
    start = current if current in bundle.graph else None
    path = symbolic_plan(bundle.graph, [z for z, _ in candidates], goal, start, cfg.heuristic)
    vp = beam_search_plan(bundle.index, path, obs_feature, bundle.reachability.model,
                          bundle.delta, cfg.per_state, cfg.beam, rng)
    vp.candidates = candidates
    vp.observation_ref = observation_ref
    vp.timing_ms = (time.perf_counter() - t0) * 1000.0
    return vp


@dataclass
class EpisodeRecord:
    goal: tuple
    steps: list = field(default_factory=list)   # VisualPlan per iteration
    reached: bool = False

    def to_json(self, timing=True):
        return {"goal": list(self.goal), "reached": self.reached,
                "iterations": len(self.steps),
                "plans": [p.to_json(timing) for p in self.steps]}


def replan_loop(world, bundle, goal, max_steps=50, config=None, seed=0):
    """Plan from the latest observation, hand over the first subgoal, repeat.

    ``world`` provides ``observe()``, ``submit(frame_ref)`` and ``done()``.
    """
    cfg = config or PlannerConfig()
    rng = np.random.default_rng(seed)
    record = EpisodeRecord(tuple(goal))
    cached = None
    while not world.done():
        if len(record.steps) >= max_steps:
            raise MaxStepsExceeded(record)
        obs = world.observe()
        if cfg.cache_path and cached is not None:
            vp = _replan_cached(bundle, obs, cached, cfg, rng)
        else:
            vp = plan(bundle, obs, goal, cfg, rng)
        record.steps.append(vp)
        if not vp.subgoals:
            # planner believes it is at the goal but the world disagrees
            continue
        cached = vp.symbolic_path
        world.submit(vp.subgoals[0])
    record.reached = True
    return record


def _replan_cached(bundle, obs, cached, cfg, rng):
    """Reuse the previous symbolic path when the current state lies on it."""
    current = label_feature(bundle.symbol_models, obs)
    states = cached.states
    if current in states:
        path = SymbolicPath(states[states.index(current):])
        vp = beam_search_plan(bundle.index, path, obs, bundle.reachability.model,
                              bundle.delta, cfg.per_state, cfg.beam, rng)
        return vp
    return plan(bundle, obs, states[-1], cfg, rng)
