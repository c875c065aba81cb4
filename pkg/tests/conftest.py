import numpy as np
import pytest

from symplan import synth
from symplan.config import PipelineConfig
from symplan.features import PlayDataset, PlayTrajectory
from symplan.pipeline import load_bundle, run_pipeline, run_synth


def make_dataset(arrays, names=None):
    trajs = tuple(PlayTrajectory(f"t{i}", a) for i, a in enumerate(arrays))
    return PlayDataset(trajs, trajs[0].dim, tuple(names or ()))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_world():
    world = synth.generate_world(3, (3, 3, 2), 24, seed=5)
    ds, truth = synth.generate_play(world, 15, (5, 15), seed=5)
    return world, ds, truth


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory):
    """One finished pipeline on the default synthetic config."""
    root = tmp_path_factory.mktemp("run")
    cfg = PipelineConfig()
    cfg.paths.dataset = str(root / "data")
    cfg.paths.artifacts = str(root / "art")
    cfg.seed = 2
    cfg.reachability.epochs = 60
    ds, truth = run_synth(cfg)
    run_pipeline(cfg)
    return cfg, ds, truth, load_bundle(cfg.paths.artifacts)


def state_maps(bundle, truth):
    """Learned symbol tuple <-> ground-truth tuple, by majority over key frames."""
    from collections import Counter

    votes = {}
    for z in bundle.index.entries:
        votes[z] = Counter(truth.frame_state(r) for r in bundle.index.refs(z))
    to_gt = {z: c.most_common(1)[0][0] for z, c in votes.items()}
    return to_gt, {g: z for z, g in to_gt.items()}


def visited_graph(truth):
    import networkx as nx

    G = nx.DiGraph()
    for t in truth.trajectories:
        G.add_edges_from(t.script)
    return G


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
