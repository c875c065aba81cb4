"""Symbolic transition graph and shortest-path search."""
import heapq
import math
from dataclasses import dataclass

from .errors import ArityMismatch, EmptyTransitionSet, NoPath, UnknownState
from .features import FrameRef
from .symbols import SymbolicTransition


@dataclass(frozen=True)
class SymbolicPath:
    states: tuple

    @property
    def cost(self):
        return len(self.states) - 1

    def __len__(self):
        return len(self.states)


class TransitionGraph:
    """Directed graph over symbolic states with provenance on every edge.

    Parallel observations of the same (before, after) pair collapse into one
    logical edge of unit cost carrying all provenance records.
    """

    def __init__(self, edges, state_index, nodes=()):
        # edges: {(before, after): [(FrameRef, FrameRef), ...]}
        self.edges = {k: list(v) for k, v in sorted(edges.items())}
        nodes = {tuple(z) for z in nodes}
        for a, b in self.edges:
            nodes.add(a)
            nodes.add(b)
        self.nodes = tuple(sorted(nodes))
        self._node_set = frozenset(nodes)
        self.state_index = {z: sorted(state_index.get(z, ())) for z in self.nodes}
        succ = {z: [] for z in self.nodes}
        for a, b in self.edges:
            succ[a].append(b)
        self.successors = {z: tuple(sorted(v)) for z, v in succ.items()}
        self.c_max = max((hamming(a, b) for a, b in self.edges), default=1) or 1

    def __contains__(self, z):
        return tuple(z) in self._node_set

    def has_edge(self, a, b):
        return (tuple(a), tuple(b)) in self.edges

    @property
    def num_edges(self):
        return len(self.edges)

    def is_walk(self, states):
        return all(self.has_edge(a, b) for a, b in zip(states, states[1:]))

    def to_json(self):
        return {
            "nodes": [list(z) for z in self.nodes],
            "edges": [
                {"before": list(a), "after": list(b),
                 "provenance": [{"traj": s.trajectory_id, "start": s.frame_index,
                                 "end": e.frame_index} for s, e in prov]}
                for (a, b), prov in self.edges.items()
            ],
            "state_index": [
                {"state": list(z), "frames": [r.to_json() for r in refs]}
                for z, refs in self.state_index.items()
            ],
        }

    @classmethod
    def from_json(cls, obj):
        edges = {}
        for e in obj["edges"]:
            key = (tuple(e["before"]), tuple(e["after"]))
            edges[key] = [(FrameRef(p["traj"], p["start"]), FrameRef(p["traj"], p["end"]))
                          for p in e["provenance"]]
        index = {tuple(s["state"]): [FrameRef.from_json(r) for r in s["frames"]]
                 for s in obj.get("state_index", ())}
        return cls(edges, index, [tuple(z) for z in obj.get("nodes", ())])

    def transitions(self):
        """Flat transition dump; ``build_graph`` on it reproduces this graph."""
        return [SymbolicTransition(a, b, p) for (a, b), prov in self.edges.items()
                for p in prov]


def build_graph(transitions, state_frame_index=None):
    transitions = list(transitions)
    if not transitions:
        raise EmptyTransitionSet("cannot build a graph from zero transitions")
    edges = {}
    for tr in transitions:
        edges.setdefault((tuple(tr.before), tuple(tr.after)), []).append(tr.provenance)
    index = {}
    for ref, z in (state_frame_index or {}).items():
        index.setdefault(tuple(z), []).append(ref)
    return TransitionGraph(edges, index)


def hamming(z1, z2):
    if len(z1) != len(z2):
        raise ArityMismatch(f"arity {len(z1)} vs {len(z2)}")
    return sum(1 for a, b in zip(z1, z2) if a != b)


def astar(graph, start, goal, heuristic="hamming"):
    """Minimum edge-count path from ``start`` to ``goal``.

    The default heuristic ``ceil(hamming(z, goal) / c_max)`` is consistent
    because no edge changes more than ``c_max`` symbols. ``heuristic="zero"``
    degrades to uniform-cost search. Frontier ties break on node order.
    """
    start, goal = tuple(start), tuple(goal)
    if start not in graph:
        raise UnknownState("start", start)
    if goal not in graph:
        raise UnknownState("goal", goal)
    if heuristic == "zero":
        def h(z):
            return 0
    else:
        c_max = graph.c_max

        def h(z):
            return math.ceil(hamming(z, goal) / c_max)

    g = {start: 0}
    parent = {start: None}
    frontier = [(h(start), start)]
    closed = set()
    while frontier:
        _, z = heapq.heappop(frontier)
        if z in closed:
            continue
        if z == goal:
            path = []
            while z is not None:
                path.append(z)
                z = parent[z]
            return SymbolicPath(tuple(reversed(path)))
        closed.add(z)
        for nxt in graph.successors[z]:
            cand = g[z] + 1
            if nxt not in g or cand < g[nxt]:
                g[nxt] = cand
                parent[nxt] = z
                heapq.heappush(frontier, (cand + h(nxt), nxt))
    raise NoPath(f"no path from {start} to {goal}")


def _state_label(z):
    return "(" + ",".join(str(s) for s in z) + ")"


def export_dot(graph, name="symbolic_graph"):
    ids = {z: f"n{i}" for i, z in enumerate(graph.nodes)}
    lines = [f"digraph {name} {{"]
    for z in graph.nodes:
        lines.append(f'  {ids[z]} [label="{_state_label(z)}"];')
    for (a, b), prov in graph.edges.items():
        lines.append(f'  {ids[a]} -> {ids[b]} [label="{len(prov)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
