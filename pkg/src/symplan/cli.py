"""``symplan`` command-line entry point."""
import argparse
import json
import os
import sys


from . import pipeline as pl
from .config import load_config
from .errors import ConfigError, MaxStepsExceeded, StageError, SymplanError
from .features import FrameRef
from .graph import TransitionGraph, export_dot
from .planner import plan, replan_loop
from .store import dumps_json, read_json, write_json
from .synth import SyntheticWorld


def _emit(obj, out=None):
    text = dumps_json(obj)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _goal_arg(text):
    return pl.parse_frame_ref(text) if ":" in text else pl.parse_state(text)


def cmd_synth(cfg, args):
    ds, truth = pl.run_synth(cfg)
    print(f"wrote {len(ds)} trajectories to {cfg.paths.dataset}")


def cmd_segment(cfg, args):
    kfs = pl.run_segment(cfg)
    print(f"{sum(len(k.indices) for k in kfs)} key frames in {len(kfs)} trajectories")


def cmd_symbols(cfg, args):
    models = pl.run_symbols(cfg)
    _emit(read_json(pl._art(cfg, pl.VOCAB)))
    if args.assignments:
        _emit(read_json(pl._art(cfg, pl.ASSIGNMENTS)), args.assignments)
    return models


def cmd_graph(cfg, args):
    if not args.no_build:
        g = pl.run_graph(cfg)
    else:
        g = TransitionGraph.from_json(read_json(pl._art(cfg, pl.GRAPH)))
    if args.dot:
        sys.stdout.write(export_dot(g))
    else:
        print(f"{len(g.nodes)} nodes, {g.num_edges} edges")


def cmd_train_reachability(cfg, args):
    art = pl.run_train_reachability(cfg)
    print(f"final loss {art.training_log[-1] if art.training_log else float('nan'):.4f}, "
          f"delta {art.delta:.4f}")


def cmd_train_predictor(cfg, args):
    _, log = pl.run_train_predictor(cfg)
    print(f"final loss {log[-1] if log else float('nan'):.4f}")


def cmd_index(cfg, args):
    index = pl.run_index(cfg)
    print(f"indexed {index.size()} key frames over {len(index.entries)} states")


def cmd_pipeline(cfg, args):
    pl.run_pipeline(cfg)
    _emit(read_json(pl._art(cfg, pl.REPORT)))


def cmd_plan(cfg, args):
    with pl._stage("plan"):
        ds = pl._dataset(cfg)
        bundle = pl.load_bundle(cfg.paths.artifacts)
        obs_ref = pl.parse_frame_ref(args.obs)
        goal = pl.resolve_goal(bundle, ds, _goal_arg(args.goal))
        vp = plan(bundle, ds.resolve(obs_ref), goal, pl.planner_config(cfg),
                  observation_ref=obs_ref)
    _emit(vp.to_json(timing=not args.no_timing), args.out)


def cmd_loop(cfg, args):
    with pl._stage("loop"):
        ds = pl._dataset(cfg)
        truth = pl.load_truth(cfg)
        if truth is None:
            raise ConfigError("loop needs a synthetic dataset with ground_truth.json")
        bundle = pl.load_bundle(cfg.paths.artifacts)
        start_ref = pl.parse_frame_ref(args.start)
        goal_ref = pl.parse_frame_ref(args.goal)
        world = SyntheticWorld(truth, truth.frame_state(start_ref), truth.frame_state(goal_ref),
                               fail_prob=args.fail_prob, noise=cfg.synth.noise, seed=cfg.seed)
        goal = pl.resolve_goal(bundle, ds, goal_ref)
        try:
            rec = replan_loop(world, bundle, goal, args.max_steps, pl.planner_config(cfg),
                              seed=cfg.seed)
        except MaxStepsExceeded as exc:
            rec = exc.record
    _emit(rec.to_json(timing=not args.no_timing), args.out)
    return 0 if rec.reached else pl.EXIT_CODES["loop"]


def cmd_benchmark(cfg, args):
    goals = None
    if args.goals:
        goals = []
        for g in read_json(args.goals):
            goals.append(FrameRef.from_json(g["frame"]) if "frame" in g else tuple(g["state"]))
    with pl._stage("benchmark"):
        metrics = pl.run_benchmark(cfg, goals)
    if args.out:
        write_json(args.out, metrics)
    print(pl.format_benchmark(metrics))


def cmd_report(cfg, args):
    path = pl._art(cfg, pl.REPORT)
    report = read_json(path) if os.path.isfile(path) else pl.build_report(cfg)
    for key, value in report.items():
        print(f"{key:14s} {json.dumps(value)}")


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic play dataset with ground truth"),
    "segment": (cmd_segment, "detect stable key frames per trajectory"),
    "symbols": (cmd_symbols, "cluster per-object states and label key frames"),
    "graph": (cmd_graph, "build the symbolic transition graph"),
    "train-reachability": (cmd_train_reachability, "train the two-tower reachability model"),
    "train-predictor": (cmd_train_predictor, "train the next-state predictor"),
    "index": (cmd_index, "precompute tower embeddings of every key frame"),
    "pipeline": (cmd_pipeline, "run every stage from segment to index"),
    "plan": (cmd_plan, "plan from an observation frame to a goal"),
    "loop": (cmd_loop, "closed-loop replanning against the synthetic executor"),
    "benchmark": (cmd_benchmark, "plan quality and latency over many goals"),
    "report": (cmd_report, "print the pipeline report"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="symplan", description=__doc__)
    parser.add_argument("--config", "-c", help="JSON or YAML run configuration")
    parser.add_argument("--seed", type=int, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        if name == "symbols":
            p.add_argument("--assignments", metavar="FILE",
                           help="also write key frame -> symbolic state labels")
        elif name == "graph":
            p.add_argument("--dot", action="store_true", help="print the graph as DOT")
            p.add_argument("--no-build", action="store_true",
                           help="read the existing graph.json instead of rebuilding")
        elif name == "plan":
            p.add_argument("--goal", required=True, help="symbol tuple 0,1,2 or frame TRAJ:FRAME")
            p.add_argument("--obs", required=True, help="observation frame TRAJ:FRAME")
            p.add_argument("--out", help="write JSON here instead of stdout")
            p.add_argument("--no-timing", action="store_true",
                           help="omit timing_ms so output is byte-reproducible")
        elif name == "loop":
            p.add_argument("--start", required=True, help="start frame TRAJ:FRAME")
            p.add_argument("--goal", required=True, help="goal frame TRAJ:FRAME")
            p.add_argument("--fail-prob", type=float, default=0.0)
            p.add_argument("--max-steps", type=int, default=50)
            p.add_argument("--out")
            p.add_argument("--no-timing", action="store_true")
        elif name == "benchmark":
            p.add_argument("--goals", help="JSON list of {state: [...]} or {frame: {...}}")
            p.add_argument("--out", help="write metrics JSON here")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
    except (ConfigError, OSError) as exc:
        print(f"symplan: config: {exc}", file=sys.stderr)
        return pl.EXIT_CODES["config"]
    func = COMMANDS[args.command][0]
    try:
        rc = func(cfg, args)
    except StageError as exc:
        print(f"symplan: {exc}", file=sys.stderr)
        return pl.EXIT_CODES.get(exc.stage, 1)
    except SymplanError as exc:
        stage = args.command
        print(f"symplan: [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return pl.EXIT_CODES.get(stage, 1)
    return rc if isinstance(rc, int) else 0


if __name__ == "__main__":
    sys.exit(main())
