"""CPPN genomes and their evaluation over 3D coordinate grids.

A genome is a small feed-forward function graph with five inputs
(x, y, z, r, bias) and one sigmoid output, queried per voxel to decide
whether that voxel is filled.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CyclicGenomeError
from .voxel_core import BooleanLattice

INPUT_IDS = (0, 1, 2, 3, 4)  # x, y, z, r, bias
OUTPUT_ID = 5
N_INPUTS = 5

HIDDEN_ACTIVATIONS = ("sigmoid", "tanh", "sine", "gaussian", "abs")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


ACTIVATIONS = {
    "sigmoid": _sigmoid,
    "tanh": np.tanh,
    "sine": np.sin,
    "gaussian": lambda x: np.exp(-np.square(x)),
    "abs": np.abs,
}


@dataclass
class NodeGene:
    id: int
    kind: str  # input | hidden | output
    activation: str | None = None


@dataclass
class ConnectionGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool = True


@dataclass
class CppnGenome:
    nodes: dict = field(default_factory=dict)  # id -> NodeGene
    connections: dict = field(default_factory=dict)  # innovation -> ConnectionGene
    fitness: float = 0.0

    def clone(self) -> "CppnGenome":
        return CppnGenome(
            nodes={i: NodeGene(n.id, n.kind, n.activation) for i, n in self.nodes.items()},
            connections={
                i: ConnectionGene(c.innovation, c.src, c.dst, c.weight, c.enabled)
                for i, c in self.connections.items()
            },
            fitness=self.fitness,
        )

    def hidden_ids(self) -> list:
        return sorted(i for i, n in self.nodes.items() if n.kind == "hidden")


def topological_order(genome: CppnGenome) -> list:
    """Kahn's algorithm over all connections (disabled included); raises
    CyclicGenomeError on a cycle. Ties resolve by node id for determinism."""
    indeg = {nid: 0 for nid in genome.nodes}
    out_edges = {nid: [] for nid in genome.nodes}
    for c in genome.connections.values():
        indeg[c.dst] += 1
        out_edges[c.src].append(c.dst)
    ready = sorted(nid for nid, d in indeg.items() if d == 0)
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        changed = False
        for dst in out_edges[nid]:
            indeg[dst] -= 1
            if indeg[dst] == 0:
                ready.append(dst)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(genome.nodes):
        raise CyclicGenomeError("genome connection graph contains a cycle")
    return order


def creates_cycle(connections, src: int, dst: int) -> bool:
    """Would adding src->dst close a directed cycle over `connections`?"""
    if src == dst:
        return True
    out_edges = {}
    for c in connections:
        out_edges.setdefault(c.src, []).append(c.dst)
    stack = [dst]
    seen = set()
    while stack:
        nid = stack.pop()
        if nid == src:
            return True
        if nid in seen:
            continue
        seen.add(nid)
        stack.extend(out_edges.get(nid, ()))
    return False


def eval_batch(genome: CppnGenome, xs, ys, zs) -> np.ndarray:
    """Feed-forward evaluation over coordinate arrays; returns the output
    node's activation for every coordinate."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    values = {
        0: xs,
        1: ys,
        2: zs,
        3: np.sqrt(xs * xs + zs * zs),
        4: np.ones_like(xs),
    }
    incoming = {}
    for innov in sorted(genome.connections):
        c = genome.connections[innov]
        if c.enabled:
            incoming.setdefault(c.dst, []).append(c)
    for nid in topological_order(genome):
        node = genome.nodes[nid]
        if node.kind == "input":
            continue
        total = np.zeros_like(xs)
        for c in incoming.get(nid, ()):
            total = total + c.weight * values[c.src]
        act = "sigmoid" if node.kind == "output" else node.activation
        values[nid] = ACTIVATIONS[act](total)
    return values[OUTPUT_ID]


def eval_network(genome: CppnGenome, coords) -> float:
    """Evaluate the genome at a single (x, y, z) coordinate."""
    x, y, z = coords
    return float(eval_batch(genome, np.array([x]), np.array([y]), np.array([z]))[0])


def _axis_coords(dim: int) -> np.ndarray:
    if dim == 1:
        return np.zeros(1)
    return 2.0 * np.arange(dim) / (dim - 1) - 1.0


def generate_hull(genome: CppnGenome, dims=(20, 20, 20)) -> BooleanLattice:
    """Voxel (i, j, k) is filled iff the network output at the normalized
    coordinates exceeds 0.5 (strict)."""
    cx, cy, cz = (_axis_coords(d) for d in dims)
    xs = np.broadcast_to(cx[:, None, None], dims).ravel()
    ys = np.broadcast_to(cy[None, :, None], dims).ravel()
    zs = np.broadcast_to(cz[None, None, :], dims).ravel()
    out = eval_batch(genome, xs, ys, zs)
    return BooleanLattice((out > 0.5).reshape(dims))


def seed_genome(rng) -> CppnGenome:
    """Fully-connected inputs->output genome, no hidden nodes, weights
    uniform in (-1, 1). Accepts a Generator or an integer seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    nodes = {i: NodeGene(i, "input") for i in INPUT_IDS}
    nodes[OUTPUT_ID] = NodeGene(OUTPUT_ID, "output", "sigmoid")
    connections = {}
    for i in INPUT_IDS:
        connections[i] = ConnectionGene(i, i, OUTPUT_ID, float(rng.uniform(-1.0, 1.0)))
    return CppnGenome(nodes, connections)


def genome_to_dict(genome: CppnGenome, generation: int = 0) -> dict:
    return {
        "nodes": [
            {"id": n.id, "kind": n.kind, "activation": n.activation}
            for n in (genome.nodes[i] for i in sorted(genome.nodes))
        ],
        "connections": [
            {
                "innovation": c.innovation,
                "src": c.src,
                "dst": c.dst,
                "weight": c.weight,
                "enabled": c.enabled,
            }
            for c in (genome.connections[i] for i in sorted(genome.connections))
        ],
        "novelty": genome.fitness,
        "generation": generation,
    }


def genome_from_dict(data: dict) -> CppnGenome:
    nodes = {n["id"]: NodeGene(n["id"], n["kind"], n["activation"]) for n in data["nodes"]}
    connections = {
        c["innovation"]: ConnectionGene(
            c["innovation"], c["src"], c["dst"], c["weight"], c["enabled"]
        )
        for c in data["connections"]
    }
    return CppnGenome(nodes, connections, fitness=data.get("novelty", 0.0))
