"""Synthetic play worlds with known ground truth.

A world has K objects, each with a handful of discrete states rendered as
unit prototype vectors. Skills flip one object's state. Play trajectories
random-walk over skills: dwell segments emit noisy prototypes, transitions
interpolate along the great circle between prototypes while the moving
object also picks up per-frame motion jitter (the hand in the crop).
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (InvalidParameter, NoSkillsPossible, SeparationUnsatisfiable,
                     UnresolvableFrameRef)
from .features import PlayDataset, PlayTrajectory


@dataclass(frozen=True, eq=False)
class WorldSpec:
    states_per_object: tuple
    prototypes: tuple          # per object: [n_i, D] unit rows
    skills: tuple              # sorted (before, after) tuple pairs
    initial: tuple
    seed: int = 0
    theta_min_deg: float = 30.0

    @property
    def num_objects(self):
        return len(self.states_per_object)

    @property
    def dim(self):
        return self.prototypes[0].shape[1]

    @property
    def skill_set(self):
        s = self.__dict__.get("_skill_set")
        if s is None:
            s = frozenset(self.skills)
            object.__setattr__(self, "_skill_set", s)
        return s

    def successors(self, z):
        return [b for a, b in self.skills if a == tuple(z)]

    def states(self):
        out = set()
        for a, b in self.skills:
            out.add(a)
            out.add(b)
        return sorted(out)

    def min_chord(self):
        best = math.inf
        for P in self.prototypes:
            for i in range(len(P)):
                for j in range(i + 1, len(P)):
                    best = min(best, float(np.linalg.norm(P[i] - P[j])))
        return best

    def separation_noise_ratio(self, noise):
        """Closest prototype chord over the expected noise-vector norm."""
        return math.inf if noise == 0 else self.min_chord() / (noise * math.sqrt(self.dim))

    def shortest_distance(self, start, goal):
        start, goal = tuple(start), tuple(goal)
        dist = {start: 0}
        frontier = [start]
        while frontier:
            nxt = []
            for z in frontier:
                if z == goal:
                    return dist[z]
                for b in self.successors(z):
                    if b not in dist:
                        dist[b] = dist[z] + 1
                        nxt.append(b)
            frontier = nxt
        return None

    def to_json(self):
        return {
            "states_per_object": list(self.states_per_object),
            "prototypes": [P.tolist() for P in self.prototypes],
            "skills": [[list(a), list(b)] for a, b in self.skills],
            "initial": list(self.initial),
            "seed": self.seed,
            "theta_min_deg": self.theta_min_deg,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["states_per_object"]),
                   tuple(np.asarray(P, dtype=np.float64) for P in obj["prototypes"]),
                   tuple((tuple(a), tuple(b)) for a, b in obj["skills"]),
                   tuple(obj["initial"]), obj.get("seed", 0), obj.get("theta_min_deg", 30.0))


def _random_prototypes(n, dim, theta_min, rng, retries):
    cos_max = math.cos(math.radians(theta_min))
    for _ in range(retries):
        P = rng.normal(size=(n, dim))
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        G = P @ P.T
        np.fill_diagonal(G, -1.0)
        if n == 1 or G.max() <= cos_max:
            return P
    raise SeparationUnsatisfiable(
        f"could not place {n} prototypes {theta_min} deg apart in {dim} dims")


def _neighbors(z, states_per_object):
    out = []
    for k, n in enumerate(states_per_object):
        for s in range(n):
            if s != z[k]:
                out.append(z[:k] + (s,) + z[k + 1:])
    return out


def generate_world(num_objects, states_per_object, num_skills, seed=0, dim=16,
                   theta_min_deg=30.0, retries=200):
    """Random world whose skill graph is strongly connected.

    The graph grows by ears: a new tuple ``v`` joins through ``u -> v`` and
    ``v -> w`` with ``u, w`` already present, so every skill stays on a
    cycle. Leftover budget goes to extra one-symbol edges between present
    tuples.
    """
    if isinstance(states_per_object, int):
        states_per_object = (states_per_object,) * num_objects
    states_per_object = tuple(int(n) for n in states_per_object)
    if len(states_per_object) != num_objects or num_objects < 1 or num_skills < 1:
        raise InvalidParameter("bad world parameters")
    if any(n < 1 for n in states_per_object):
        raise InvalidParameter("every object needs at least one state")
    if all(n == 1 for n in states_per_object):
        raise NoSkillsPossible("no object has more than one state")
    universe = math.prod(states_per_object)
    if num_skills > universe * sum(n - 1 for n in states_per_object):
        raise InvalidParameter("more skills requested than valid transitions")
    rng = np.random.default_rng(seed)
    prototypes = tuple(_random_prototypes(n, dim, theta_min_deg, rng, retries)
                       for n in states_per_object)
    for _ in range(retries):
        skills = _grow_skill_graph(states_per_object, num_skills, rng)
        if skills is not None:
            break
    else:
        raise SeparationUnsatisfiable("could not build a strongly connected skill graph")
    initial = min(a for a, _ in skills)
    return WorldSpec(states_per_object, prototypes, tuple(sorted(skills)), initial,
                     seed, theta_min_deg)


def _grow_skill_graph(states_per_object, num_skills, rng):
    start = tuple(int(rng.integers(n)) for n in states_per_object)
    nodes = [start]
    node_set = {start}
    edges = set()
    while len(edges) < num_skills:
        left = num_skills - len(edges)
        ears = [(u, v) for u in nodes for v in _neighbors(u, states_per_object)
                if v not in node_set]
        extras = [(u, v) for u in nodes for v in _neighbors(u, states_per_object)
                  if v in node_set and (u, v) not in edges]
        use_extra = extras and (left == 1 or not ears or rng.random() < 0.25)
        if use_extra:
            edges.add(extras[int(rng.integers(len(extras)))])
        elif ears and left >= 2:
            u, v = ears[int(rng.integers(len(ears)))]
            back = [w for w in _neighbors(v, states_per_object) if w in node_set]
            w = back[int(rng.integers(len(back)))]
            edges.add((u, v))
            edges.add((v, w))
            nodes.append(v)
            node_set.add(v)
        else:
            return None
    return edges


@dataclass
class TrajectoryTruth:
    id: str
    stable_frames: list
    frame_states: list
    script: list
    dwell_segments: list = field(default_factory=list)


@dataclass
class GroundTruth:
    world: WorldSpec
    trajectories: list

    def __post_init__(self):
        self._by_id = {t.id: t for t in self.trajectories}

    def trajectory(self, trajectory_id):
        try:
            return self._by_id[trajectory_id]
        except KeyError:
            raise UnresolvableFrameRef(f"unknown trajectory {trajectory_id!r}") from None

    def frame_state(self, ref):
        tr = self.trajectory(ref.trajectory_id)
        if not 0 <= ref.frame_index < len(tr.frame_states):
            raise UnresolvableFrameRef(f"frame {ref.frame_index} outside {ref.trajectory_id!r}")
        return tr.frame_states[ref.frame_index]

    def to_json(self):
        return {
            "world": self.world.to_json(),
            "trajectories": [
                {"id": t.id, "stable_frames": t.stable_frames,
                 "frame_states": [list(z) for z in t.frame_states],
                 "script": [[list(a), list(b)] for a, b in t.script],
                 "dwell_segments": [list(s) for s in t.dwell_segments]}
                for t in self.trajectories
            ],
        }

    @classmethod
    def from_json(cls, obj):
        trajs = [TrajectoryTruth(t["id"], list(t["stable_frames"]),
                                 [tuple(z) for z in t["frame_states"]],
                                 [(tuple(a), tuple(b)) for a, b in t["script"]],
                                 [tuple(s) for s in t.get("dwell_segments", [])])
                 for t in obj["trajectories"]]
        return cls(WorldSpec.from_json(obj["world"]), trajs)


def slerp(a, b, f):
    omega = math.acos(max(-1.0, min(1.0, float(np.dot(a, b)))))
    if omega < 1e-9:
        return a.copy()
    so = math.sin(omega)
    return (math.sin((1 - f) * omega) * a + math.sin(f * omega) * b) / so


def render_state(world, z, rng, noise):
    """Object features [K, D] for symbolic state ``z`` plus Gaussian noise."""
    out = np.stack([world.prototypes[k][z[k]] for k in range(world.num_objects)])
    if noise > 0:
        out = out + rng.normal(0.0, noise, out.shape)
    return out


def generate_play(world, num_traj, skills_per_traj, dwell=20, transit=8, noise=0.05,
                  motion_jitter=1.0, seed=0, id_prefix="traj"):
    """Random-walk play data; returns ``(PlayDataset, GroundTruth)``.

    ``skills_per_traj`` is an int or an inclusive ``(lo, hi)`` range. A
    transition takes ``transit`` steps, i.e. ``transit - 1`` in-between
    frames. Stable frames are the dwell-segment centres.
    """
    if dwell < 1 or transit < 1 or num_traj < 1 or noise < 0 or motion_jitter < 0:
        raise InvalidParameter("bad play parameters")
    lo, hi = (skills_per_traj, skills_per_traj) if isinstance(skills_per_traj, int) \
        else skills_per_traj
    rng = np.random.default_rng(seed)
    states = world.states()
    K, D = world.num_objects, world.dim
    trajs, truths = [], []
    for i in range(num_traj):
        z = states[int(rng.integers(len(states)))]
        n_skills = int(rng.integers(lo, hi + 1))
        frames, frame_states, stable, script, dwells = [], [], [], [], []

        def emit_dwell(z):
            start = len(frames)
            for _ in range(dwell):
                frames.append(render_state(world, z, rng, noise))
                frame_states.append(z)
            stable.append(start + (dwell - 1) // 2)
            dwells.append((start, start + dwell - 1))

        emit_dwell(z)
        for _ in range(n_skills):
            nxt = world.successors(z)
            z2 = nxt[int(rng.integers(len(nxt)))]
            moving = [k for k in range(K) if z[k] != z2[k]]
            for j in range(1, transit):
                f = j / transit
                fr = render_state(world, z, rng, noise)
                for k in moving:
                    v = slerp(world.prototypes[k][z[k]], world.prototypes[k][z2[k]], f)
                    if motion_jitter > 0:
                        v = v + rng.normal(0.0, motion_jitter / math.sqrt(D), D)
                    if noise > 0:
                        v = v + rng.normal(0.0, noise, D)
                    fr[k] = v
                frames.append(fr)
                frame_states.append(z if f < 0.5 else z2)
            script.append((z, z2))
            z = z2
            emit_dwell(z)
        feats = np.stack(frames).astype(np.float32).astype(np.float64)
        tid = f"{id_prefix}_{i:03d}"
        trajs.append(PlayTrajectory(tid, feats))
        truths.append(TrajectoryTruth(tid, stable, frame_states, script, dwells))
    names = tuple(f"object_{k}" for k in range(K))
    return PlayDataset(tuple(trajs), D, names), GroundTruth(world, truths)


def merge(datasets_and_truths):
    """Concatenate several (dataset, truth) pairs sharing K and D."""
    trajs, truths = [], []
    for ds, gt in datasets_and_truths:
        trajs.extend(ds.trajectories)
        truths.extend(gt.trajectories)
    first_ds, first_gt = datasets_and_truths[0]
    return PlayDataset(tuple(trajs), first_ds.dim, first_ds.object_names), \
        GroundTruth(first_gt.world, truths)


@dataclass
class PlanVerdict:
    meaningful: bool
    violation: int = -1        # index i of the first bad pair (subgoals[i], subgoals[i+1])
    pair: tuple = ()


def evaluate_plan(truth, plan, include_observation=False):
    """Meaningful iff every adjacent subgoal pair is equal or a real skill.

    With ``include_observation`` and a plan that carries its observation's
    FrameRef, the observation -> first subgoal pair is checked too (index -1
    then denotes that pair when it fails).
    """
    world = truth.world
    refs = list(plan.subgoals)
    tuples = [truth.frame_state(r) for r in refs]
    if include_observation and getattr(plan, "observation_ref", None) is not None and tuples:
        z0 = truth.frame_state(plan.observation_ref)
        if z0 != tuples[0] and (z0, tuples[0]) not in world.skill_set:
            return PlanVerdict(False, -1, (z0, tuples[0]))
    for i, (a, b) in enumerate(zip(tuples, tuples[1:])):
        if a != b and (a, b) not in world.skill_set:
            return PlanVerdict(False, i, (a, b))
    return PlanVerdict(True)


def symbolic_executor(world, current, requested, fail_prob=0.0, rng=None):
    """Advance to ``requested`` if one skill connects it; may fail at random."""
    current, requested = tuple(current), tuple(requested)
    if (current, requested) not in world.skill_set:
        return current
    if fail_prob > 0:
        rng = np.random.default_rng() if rng is None else rng
        if rng.random() < fail_prob:
            return current
    return requested


class SyntheticWorld:
    """Closed-loop stand-in for a robot: renders observations of its true
    state and executes subgoals through ``symbolic_executor``."""

    def __init__(self, truth, start, goal, fail_prob=0.0, noise=0.0, seed=0):
        self.truth = truth
        self.world = truth.world
        self.state = tuple(start)
        self.goal = tuple(goal)
        self.fail_prob = fail_prob
        self.noise = noise
        self.rng = np.random.default_rng(seed)

    def observe(self):
        return render_state(self.world, self.state, self.rng, self.noise).reshape(-1)

    def submit(self, subgoal_ref):
        target = self.truth.frame_state(subgoal_ref)
        self.state = symbolic_executor(self.world, self.state, target,
                                       self.fail_prob, self.rng)
        return self.state

    def done(self):
        return self.state == self.goal


def generate_contexts(num_contexts, traj_per_context, num_objects=3, states_per_object=2,
                      num_skills=6, skills_per_traj=(3, 6), noise=0.05, seed=0,
                      dim=16, play_seed=None, motion_jitter=0.0, **play_kwargs):
    """Play data from several independent worlds sharing K and D.

    Frames from different contexts never reach one another, which makes
    reachability ranking separable. Returns ``(dataset, truth, context_of)``
    where ``context_of`` maps trajectory id to context number. Worlds depend
    on ``seed`` only, so a different ``play_seed`` gives fresh trajectories
    from the same contexts. Transits default to pure geodesic motion so that
    every in-context frame pair is learnably reachable.
    """
    play_seed = seed if play_seed is None else play_seed
    parts = []
    context_of = {}
    for c in range(num_contexts):
        world = generate_world(num_objects, states_per_object, num_skills,
                               seed=seed * 1000 + c, dim=dim)
        ds, gt = generate_play(world, traj_per_context, skills_per_traj, noise=noise,
                               seed=play_seed * 1000 + c + 7, id_prefix=f"ctx{c:02d}",
                               motion_jitter=motion_jitter, **play_kwargs)
        parts.append((ds, gt))
        context_of.update({tr.id: c for tr in ds})
    ds, gt = merge(parts)
    return ds, gt, context_of
