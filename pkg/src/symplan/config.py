"""Run configuration: one JSON or YAML file, every default listed here."""
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError


@dataclass
class PathsConfig:
    dataset: str = "data"
    artifacts: str = "artifacts"


@dataclass
class SegmentationConfig:
    k: int = 7
    sigma_t: float = 2.0
    sigma_v: float = math.inf       # null in the file means infinity
    w: int = 10
    min_prominence: float = None    # null means 0.05 * K


@dataclass
class SymbolsConfig:
    k_nn: int = 5
    n_min: int = 2
    n_max: int = 8


@dataclass
class ReachabilitySection:
    gamma: float = 0.95
    batch_size: int = 256
    hidden: int = 64
    embed: int = 16
    lr: float = 1e-2
    epochs: int = 200
    steps_per_epoch: int = 10
    grad_clip: float = 10.0
    delta_percentile: float = 0.0


@dataclass
class PredictorSection:
    lr: float = 0.5
    epochs: int = 300


@dataclass
class PlannerSection:
    m: int = 3
    per_state: int = 10
    beam: int = 5
    heuristic: str = "hamming"
    cache_path: bool = False


@dataclass
class SynthConfig:
    num_objects: int = 3
    states_per_object: list = field(default_factory=lambda: [3, 3, 2])
    num_skills: int = 24
    dim: int = 16
    theta_min_deg: float = 30.0
    num_traj: int = 15
    skills_per_traj: list = field(default_factory=lambda: [5, 15])
    dwell: int = 20
    transit: int = 8
    noise: float = 0.05
    motion_jitter: float = 1.0


@dataclass
class BenchmarkConfig:
    plans_per_goal: int = 20
    num_goals: int = 5


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    symbols: SymbolsConfig = field(default_factory=SymbolsConfig)
    reachability: ReachabilitySection = field(default_factory=ReachabilitySection)
    predictor: PredictorSection = field(default_factory=PredictorSection)
    planner: PlannerSection = field(default_factory=PlannerSection)
    synth: SynthConfig = field(default_factory=SynthConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    seed: int = 0

    def validate(self):
        s, y, r, p, pl, sy = (self.segmentation, self.symbols, self.reachability,
                              self.predictor, self.planner, self.synth)
        checks = [
            (s.k >= 1, "segmentation.k must be >= 1"),
            (s.sigma_t > 0, "segmentation.sigma_t must be > 0"),
            (s.sigma_v > 0, "segmentation.sigma_v must be > 0"),
            (s.w >= 1, "segmentation.w must be >= 1"),
            (s.min_prominence is None or s.min_prominence >= 0,
             "segmentation.min_prominence must be >= 0"),
            (y.k_nn >= 1, "symbols.k_nn must be >= 1"),
            (2 <= y.n_min <= y.n_max, "symbols needs 2 <= n_min <= n_max"),
            (0 <= r.gamma < 1, "reachability.gamma must be in [0, 1)"),
            (r.batch_size >= 1 and r.hidden >= 1 and r.embed >= 1,
             "reachability sizes must be >= 1"),
            (r.lr > 0 and r.grad_clip > 0, "reachability.lr and grad_clip must be > 0"),
            (r.epochs >= 0 and r.steps_per_epoch >= 1, "reachability epochs/steps invalid"),
            (0 <= r.delta_percentile <= 100, "reachability.delta_percentile must be in [0, 100]"),
            (p.lr > 0 and p.epochs >= 0, "predictor.lr must be > 0 and epochs >= 0"),
            (pl.m >= 1 and pl.per_state >= 1 and pl.beam >= 1, "planner m/per_state/beam must be >= 1"),
            (pl.heuristic in ("hamming", "zero"), "planner.heuristic must be hamming or zero"),
            (sy.num_objects >= 1 and len(sy.states_per_object) == sy.num_objects,
             "synth.states_per_object must list one count per object"),
            (len(sy.skills_per_traj) == 2 and 1 <= sy.skills_per_traj[0] <= sy.skills_per_traj[1],
             "synth.skills_per_traj must be [lo, hi]"),
            (sy.dwell >= 1 and sy.transit >= 1 and sy.num_traj >= 1, "synth sizes must be >= 1"),
            (sy.noise >= 0 and sy.motion_jitter >= 0, "synth noise must be >= 0"),
            (self.benchmark.plans_per_goal >= 1 and self.benchmark.num_goals >= 1,
             "benchmark counts must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        if math.isinf(d["segmentation"]["sigma_v"]):
            d["segmentation"]["sigma_v"] = None
        return d


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING \
            else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}{name}.")
        elif name == "sigma_v" and value is None:
            kwargs[name] = math.inf
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data):
    return _build(PipelineConfig, data or {}, "").validate()


def load_config(path=None, env=None):
    """Read a config file (JSON, or YAML by suffix); SYMPLAN_SEED overrides the seed."""
    data = {}
    if path:
        with open(path) as fh:
            text = fh.read()
        if path.endswith((".yaml", ".yml")):
            try:
                data = yaml.safe_load(text) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        else:
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    cfg = config_from_dict(data)
    env = os.environ if env is None else env
    if env.get("SYMPLAN_SEED"):
        try:
            cfg.seed = int(env["SYMPLAN_SEED"])
        except ValueError:
            raise ConfigError("SYMPLAN_SEED must be an integer") from None
    if path:
        base = os.path.dirname(os.path.abspath(path))
        for attr in ("dataset", "artifacts"):
            val = getattr(cfg.paths, attr)
            if not os.path.isabs(val):
                setattr(cfg.paths, attr, os.path.join(base, val))
    return cfg
