"""Stage-by-stage orchestration over an artifact directory.

Every stage reads its inputs from disk and writes its outputs back, so the
CLI subcommands and ``run_pipeline`` produce the same files.
"""
import os
from collections import Counter

import numpy as np

from . import graph as graph_mod
from . import predictor as pred_mod
from . import reachability as reach_mod
from . import segmentation as seg_mod
from . import symbols as sym_mod
from . import synth
from .errors import NoPath, StageError, SymplanError
from .features import FrameRef, load_dataset, save_dataset
from .planner import (ModelBundle, PlannerConfig, build_goal_index, load_goal_index,
                      plan, save_goal_index)
from .store import read_artifact, read_json, write_artifact, write_json

STAGES = ("config", "features", "synth", "segment", "symbols", "graph",
          "train-reachability", "train-predictor", "index", "plan", "loop", "benchmark",
          "report")
EXIT_CODES = {name: 10 + i for i, name in enumerate(STAGES)}

KEYFRAMES = "keyframes.json"
SYMBOLS_BIN = "symbols.bin"
VOCAB = "symbols.json"
ASSIGNMENTS = "assignments.json"
GRAPH = "graph.json"
GRAPH_DOT = "graph.dot"
REACH = "reachability.bin"
PRED = "predictor.bin"
INDEX = "index.bin"
REPORT = "report.json"
GROUND_TRUTH = "ground_truth.json"


class _stage:
    """Context manager tagging any package error with the stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and \
                isinstance(exc, (SymplanError, OSError, ValueError, KeyError)):
            raise StageError(self.name, exc) from exc
        return False


def _art(cfg, name):
    return os.path.join(cfg.paths.artifacts, name)


def _dataset(cfg):
    with _stage("features"):
        return load_dataset(cfg.paths.dataset)


def _keyframes(cfg):
    return [seg_mod.KeyFrameSet.from_json(o) for o in read_json(_art(cfg, KEYFRAMES))]


def _symbol_models(cfg):
    header, arrays = read_artifact(_art(cfg, SYMBOLS_BIN))
    return sym_mod.models_from_arrays(header, arrays)


def _assignments(cfg):
    return {FrameRef.from_json(o["frame"]): tuple(o["state"])
            for o in read_json(_art(cfg, ASSIGNMENTS))}


def _graph(cfg):
    return graph_mod.TransitionGraph.from_json(read_json(_art(cfg, GRAPH)))


def run_synth(cfg):
    s = cfg.synth
    with _stage("synth"):
        world = synth.generate_world(s.num_objects, tuple(s.states_per_object), s.num_skills,
                                     seed=cfg.seed, dim=s.dim, theta_min_deg=s.theta_min_deg)
        ds, truth = synth.generate_play(world, s.num_traj, tuple(s.skills_per_traj),
                                        dwell=s.dwell, transit=s.transit, noise=s.noise,
                                        motion_jitter=s.motion_jitter, seed=cfg.seed)
        save_dataset(ds, cfg.paths.dataset)
        write_json(os.path.join(cfg.paths.dataset, GROUND_TRUTH), truth.to_json())
    return ds, truth


def run_segment(cfg, dataset=None):
    ds = dataset or _dataset(cfg)
    s = cfg.segmentation
    with _stage("segment"):
        os.makedirs(cfg.paths.artifacts, exist_ok=True)
        out, kfs = [], []
        for tr in ds:
            kf, series = seg_mod.find_keyframes(tr, s.sigma_t, s.sigma_v, s.k, s.w,
                                                s.min_prominence)
            kfs.append(kf)
            out.append(kf.to_json(series))
        write_json(_art(cfg, KEYFRAMES), out)
    return kfs


def run_symbols(cfg, dataset=None):
    ds = dataset or _dataset(cfg)
    with _stage("symbols"):
        kfs = _keyframes(cfg)
        y = cfg.symbols
        models = sym_mod.fit_object_models(ds, kfs, y.k_nn, (y.n_min, y.n_max))
        header, arrays = sym_mod.models_to_arrays(models)
        write_artifact(_art(cfg, SYMBOLS_BIN), header, arrays)
        write_json(_art(cfg, VOCAB), sym_mod.vocabulary_json(models, ds.object_names))
        labels = sym_mod.label_keyframes(ds, kfs, models)
        write_json(_art(cfg, ASSIGNMENTS),
                   [{"frame": r.to_json(), "state": list(z)} for r, z in labels.items()])
    return models


def run_graph(cfg, dataset=None):
    ds = dataset or _dataset(cfg)
    with _stage("graph"):
        kfs = _keyframes(cfg)
        models = _symbol_models(cfg)
        labels = _assignments(cfg)
        transitions = sym_mod.extract_transitions(ds, kfs, models, labels)
        g = graph_mod.build_graph(transitions, labels)
        write_json(_art(cfg, GRAPH), g.to_json())
        with open(_art(cfg, GRAPH_DOT), "w") as fh:
            fh.write(graph_mod.export_dot(g))
    return g


def reachability_config(cfg):
    r = cfg.reachability
    return reach_mod.ReachabilityConfig(
        gamma=r.gamma, batch_size=r.batch_size, hidden=r.hidden, embed=r.embed, lr=r.lr,
        epochs=r.epochs, steps_per_epoch=r.steps_per_epoch, grad_clip=r.grad_clip,
        percentile=r.delta_percentile, seed=cfg.seed)


def run_train_reachability(cfg, dataset=None):
    ds = dataset or _dataset(cfg)
    with _stage("train-reachability"):
        kfs = _keyframes(cfg)
        art = reach_mod.train_reachability(ds, reachability_config(cfg), kfs)
        reach_mod.save_reachability(_art(cfg, REACH), art)
    return art


def run_train_predictor(cfg, dataset=None):
    ds = dataset or _dataset(cfg)
    with _stage("train-predictor"):
        kfs = _keyframes(cfg)
        labels = _assignments(cfg)
        g = _graph(cfg)
        X, y = pred_mod.build_training_set(ds, kfs, labels, g.nodes)
        p = cfg.predictor
        pred, log = pred_mod.train_predictor(
            X, y, g.nodes, pred_mod.PredictorConfig(lr=p.lr, epochs=p.epochs, seed=cfg.seed))
        pred_mod.save_predictor(_art(cfg, PRED), pred, log)
    return pred, log


def run_index(cfg, dataset=None):
    ds = dataset or _dataset(cfg)
    with _stage("index"):
        art = reach_mod.load_reachability(_art(cfg, REACH))
        g = _graph(cfg)
        labels = {r: z for r, z in _assignments(cfg).items() if z in g}
        index = build_goal_index(ds, labels, art.model)
        save_goal_index(_art(cfg, INDEX), index)
    return index


def load_bundle(artifact_dir):
    """All planning artifacts from a finished pipeline run."""
    p = lambda name: os.path.join(artifact_dir, name)  # noqa: E731
    header, arrays = read_artifact(p(SYMBOLS_BIN))
    return ModelBundle(
        graph=graph_mod.TransitionGraph.from_json(read_json(p(GRAPH))),
        symbol_models=sym_mod.models_from_arrays(header, arrays),
        reachability=reach_mod.load_reachability(p(REACH)),
        predictor=pred_mod.load_predictor(p(PRED))[0],
        index=load_goal_index(p(INDEX)),
    )


def planner_config(cfg):
    pl = cfg.planner
    return PlannerConfig(m=pl.m, per_state=pl.per_state, beam=pl.beam,
                         heuristic=pl.heuristic, seed=cfg.seed, cache_path=pl.cache_path)


def build_report(cfg, dataset=None):
    ds = dataset or _dataset(cfg)
    kfs = _keyframes(cfg)
    models = _symbol_models(cfg)
    g = _graph(cfg)
    art = reach_mod.load_reachability(_art(cfg, REACH))
    _, plog = pred_mod.load_predictor(_art(cfg, PRED))
    return {
        "trajectories": len(ds),
        "keyframes": sum(len(k.indices) for k in kfs),
        "objects": [{"object_index": m.object_index, "n": m.num_clusters,
                     "silhouette": None if np.isnan(m.silhouette) else m.silhouette}
                    for m in models],
        "graph": {"nodes": len(g.nodes), "edges": g.num_edges,
                  "transitions": sum(len(v) for v in g.edges.values())},
        "reachability": {"final_loss": art.training_log[-1] if art.training_log else None,
                         "delta": art.delta},
        "predictor": {"final_loss": plog[-1] if plog else None},
        "seed": cfg.seed,
    }


def run_pipeline(cfg):
    """segment -> symbols -> graph -> reachability -> predictor -> index -> report."""
    ds = _dataset(cfg)
    os.makedirs(cfg.paths.artifacts, exist_ok=True)
    # paths depend on where the run happens, not on what it computes
    resolved = {k: v for k, v in cfg.to_dict().items() if k != "paths"}
    write_json(_art(cfg, "config.json"), resolved)
    run_segment(cfg, ds)
    run_symbols(cfg, ds)
    run_graph(cfg, ds)
    run_train_reachability(cfg, ds)
    run_train_predictor(cfg, ds)
    run_index(cfg, ds)
    with _stage("report"):
        report = build_report(cfg, ds)
        write_json(_art(cfg, REPORT), report)
    return cfg.paths.artifacts


def load_truth(cfg):
    path = os.path.join(cfg.paths.dataset, GROUND_TRUTH)
    return synth.GroundTruth.from_json(read_json(path)) if os.path.isfile(path) else None


def parse_state(text):
    return tuple(int(t) for t in text.strip().strip("()[]").split(",") if t.strip())


def parse_frame_ref(text):
    traj, _, frame = text.rpartition(":")
    if not traj:
        raise ValueError(f"frame reference {text!r} must look like TRAJ:FRAME")
    return FrameRef(traj, int(frame))


def resolve_goal(bundle, dataset, goal):
    """A goal is a symbol tuple or a FrameRef; frames are labelled first."""
    if isinstance(goal, FrameRef):
        return sym_mod.label_feature(bundle.symbol_models, dataset.resolve(goal))
    return tuple(goal)


def choose_goals(bundle, count, rng):
    nodes = list(bundle.graph.nodes)
    pick = rng.choice(len(nodes), size=min(count, len(nodes)), replace=False)
    return [nodes[i] for i in sorted(pick)]


def run_benchmark(cfg, goals=None, bundle=None, dataset=None, truth=None):
    """Plans from random indexed key frames toward each goal; quality and latency.

    Meaningful-rate uses the synthetic ground truth when available and the
    delta-feasibility rate otherwise.
    """
    ds = dataset or _dataset(cfg)
    bundle = bundle or load_bundle(cfg.paths.artifacts)
    truth = truth if truth is not None else load_truth(cfg)
    pcfg = planner_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    if goals is None:
        goals = choose_goals(bundle, cfg.benchmark.num_goals, rng)
    starts = [r for z in bundle.index.entries for r in bundle.index.refs(z)]
    per_goal, latencies, lengths = [], [], Counter()
    n_plans = n_meaningful = n_feasible = n_feasible_meaningful = 0
    for goal in goals:
        z_g = resolve_goal(bundle, ds, goal)
        entry = {"goal": list(z_g), "plans": 0, "meaningful": 0, "feasible": 0,
                 "no_path": 0, "error": None}
        for _ in range(cfg.benchmark.plans_per_goal):
            ref = starts[int(rng.integers(len(starts)))]
            try:
                vp = plan(bundle, ds.resolve(ref), z_g, pcfg, rng, observation_ref=ref)
            except NoPath as exc:
                # unreachable from this start only; other starts may still work
                entry["no_path"] += 1
                entry["error"] = f"NoPath: {exc}"
                continue
            except SymplanError as exc:
                entry["error"] = f"{type(exc).__name__}: {exc}"
                break
            latencies.append(vp.timing_ms / 1000.0)
            lengths[len(vp.subgoals)] += 1
            ok = synth.evaluate_plan(truth, vp).meaningful if truth is not None else vp.feasible
            entry["plans"] += 1
            entry["meaningful"] += ok
            entry["feasible"] += vp.feasible
            n_plans += 1
            n_meaningful += ok
            n_feasible += vp.feasible
            n_feasible_meaningful += ok and vp.feasible
        per_goal.append(entry)
    lat = np.array(latencies) if latencies else np.array([np.nan])
    return {
        "oracle": "ground_truth" if truth is not None else "delta_feasibility",
        "plans": n_plans,
        "meaningful_rate": n_meaningful / n_plans if n_plans else None,
        "feasible_rate": n_feasible / n_plans if n_plans else None,
        "feasible_meaningful_rate": n_feasible_meaningful / n_feasible if n_feasible else None,
        "latency_s": {"mean": float(np.mean(lat)), "median": float(np.median(lat)),
                      "p95": float(np.percentile(lat, 95))},
        "path_length_histogram": {str(k): v for k, v in sorted(lengths.items())},
        "goals": per_goal,
    }


def format_benchmark(metrics):
    lines = [f"oracle              {metrics['oracle']}",
             f"plans               {metrics['plans']}",
             f"meaningful rate     {metrics['meaningful_rate']}",
             f"feasible rate       {metrics['feasible_rate']}",
             f"latency median (s)  {metrics['latency_s']['median']:.5f}",
             f"latency p95 (s)     {metrics['latency_s']['p95']:.5f}",
             "subgoals -> plans   " + ", ".join(
                 f"{k}:{v}" for k, v in metrics["path_length_histogram"].items())]
    for g in metrics["goals"]:
        status = f"{g['meaningful']}/{g['plans']} meaningful"
        if g["no_path"]:
            status += f", {g['no_path']} starts without a path"
        if g["error"] and not g["plans"]:
            status = g["error"]
        lines.append(f"  goal {tuple(g['goal'])}: {status}")
    return "\n".join(lines)
