"""NEAT reproduction machinery: speciation, crossover, mutation and the
generation step, driving populations of CPPN genomes whose fitness (novelty)
is assigned externally.

Infeasible genomes get fitness 0 and never act as parents. A generation in
which no genome is feasible degenerates to pure drift (every genome is
cloned and mutated) so that topology growth can eventually reach the
feasible region; reseeding fresh minimal genomes can provably never escape
it.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .cppn import (
    HIDDEN_ACTIVATIONS,
    ConnectionGene,
    CppnGenome,
    NodeGene,
    creates_cycle,
    seed_genome,
)


@dataclass
class NeatParams:
    c_excess: float = 1.0
    c_disjoint: float = 1.0
    c_weight: float = 0.4
    compat_threshold: float = 3.0
    threshold_step: float = 0.1
    min_threshold: float = 0.1
    target_species: int = 10
    p_weight_mutate: float = 0.8
    p_weight_replace: float = 0.1
    weight_sigma: float = 0.5
    p_add_connection: float = 0.1
    p_add_node: float = 0.05
    p_activation: float = 0.1
    add_connection_tries: int = 20
    elite_min_size: int = 5
    survival_fraction: float = 0.4
    stagnation_limit: int = 20
    p_disable_inherit: float = 0.75

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "NeatParams":
        return cls(**d)


@dataclass
class Species:
    id: int
    representative: CppnGenome
    staleness: int = 0
    best_fitness: float = -math.inf
    members: list = field(default_factory=list)


class InnovationRegistry:
    """Mints innovation and node ids. The per-generation memo guarantees the
    same structural mutation gets the same numbers within one generation."""

    def __init__(self, next_innovation: int, next_node: int):
        self.next_innovation = next_innovation
        self.next_node = next_node
        self._conn_memo = {}
        self._split_memo = {}

    def begin_generation(self) -> None:
        self._conn_memo.clear()
        self._split_memo.clear()

    def connection_innovation(self, src: int, dst: int) -> int:
        key = (src, dst)
        if key not in self._conn_memo:
            self._conn_memo[key] = self.next_innovation
            self.next_innovation += 1
        return self._conn_memo[key]

    def split_ids(self, connection_innovation: int):
        """(new node id, in-connection innovation, out-connection innovation)
        for splitting the given connection."""
        if connection_innovation not in self._split_memo:
            node_id = self.next_node
            self.next_node += 1
            i1 = self.next_innovation
            i2 = self.next_innovation + 1
            self.next_innovation += 2
            self._split_memo[connection_innovation] = (node_id, i1, i2)
        return self._split_memo[connection_innovation]

    def to_dict(self) -> dict:
        return {"next_innovation": self.next_innovation, "next_node": self.next_node}

    @classmethod
    def from_dict(cls, d: dict) -> "InnovationRegistry":
        return cls(d["next_innovation"], d["next_node"])


def compatibility_distance(a: CppnGenome, b: CppnGenome, params: NeatParams) -> float:
    """delta = (c1*E + c2*D)/N + c3*mean|dw| over matching genes."""
    ia = set(a.connections)
    ib = set(b.connections)
    if not ia and not ib:
        return 0.0
    matching = ia & ib
    if matching:
        wbar = sum(
            abs(a.connections[i].weight - b.connections[i].weight) for i in sorted(matching)
        ) / len(matching)
    else:
        wbar = 0.0
    max_a = max(ia) if ia else -1
    max_b = max(ib) if ib else -1
    cutoff = min(max_a, max_b)
    non_matching = ia ^ ib
    excess = sum(1 for i in non_matching if i > cutoff)
    disjoint = len(non_matching) - excess
    n = max(len(ia), len(ib), 1)
    return (params.c_excess * excess + params.c_disjoint * disjoint) / n + params.c_weight * wbar


def speciate(genomes, previous_species, threshold: float, params: NeatParams, next_species_id: int):
    """Assign each genome to the first species whose representative is within
    `threshold`, else found a new species. Empty species are dropped.

    Returns (species list with members filled, next_species_id).
    """
    species = [
        Species(s.id, s.representative, s.staleness, s.best_fitness, []) for s in previous_species
    ]
    for g in genomes:
        for s in species:
            if compatibility_distance(g, s.representative, params) <= threshold:
                s.members.append(g)
                break
        else:
            species.append(Species(next_species_id, g, members=[g]))
            next_species_id += 1
    return [s for s in species if s.members], next_species_id


def crossover(parent_a: CppnGenome, parent_b: CppnGenome, rng: np.random.Generator,
              p_disable: float = 0.75) -> CppnGenome:
    """Matching genes inherit weight/enabled from a random parent; disjoint
    and excess genes come from the fitter parent (each with probability 0.5
    on a fitness tie). A gene disabled in exactly one parent stays disabled
    with probability `p_disable`. The child is kept acyclic by skipping
    genes that would close a cycle."""
    if parent_b.fitness > parent_a.fitness:
        parent_a, parent_b = parent_b, parent_a
    tie = parent_a.fitness == parent_b.fitness

    child_conns = {}
    edges = set()
    for innov in sorted(set(parent_a.connections) | set(parent_b.connections)):
        ca = parent_a.connections.get(innov)
        cb = parent_b.connections.get(innov)
        if ca is not None and cb is not None:
            pick = ca if rng.random() < 0.5 else cb
            if ca.enabled == cb.enabled:
                enabled = ca.enabled
            else:
                enabled = not (rng.random() < p_disable)
            gene = ConnectionGene(innov, pick.src, pick.dst, pick.weight, enabled)
        elif ca is not None:
            if tie and rng.random() >= 0.5:
                continue
            gene = ConnectionGene(innov, ca.src, ca.dst, ca.weight, ca.enabled)
        else:
            if not tie or rng.random() >= 0.5:
                continue
            gene = ConnectionGene(innov, cb.src, cb.dst, cb.weight, cb.enabled)
        if (gene.src, gene.dst) in edges:
            continue
        if creates_cycle(child_conns.values(), gene.src, gene.dst):
            continue
        child_conns[innov] = gene
        edges.add((gene.src, gene.dst))

    child_nodes = {}
    needed = set()
    for c in child_conns.values():
        needed.add(c.src)
        needed.add(c.dst)
    needed.update(parent_a.nodes)  # inputs/output and fitter parent's nodes
    for nid in sorted(needed):
        src = parent_a.nodes.get(nid) or parent_b.nodes.get(nid)
        child_nodes[nid] = NodeGene(src.id, src.kind, src.activation)
    return CppnGenome(child_nodes, child_conns, fitness=0.0)


def _mutate_weights(genome: CppnGenome, params: NeatParams, rng) -> None:
    for innov in sorted(genome.connections):
        c = genome.connections[innov]
        if rng.random() < params.p_weight_replace:
            c.weight = float(rng.uniform(-1.0, 1.0))
        else:
            c.weight = float(c.weight + rng.normal(0.0, params.weight_sigma))


def _mutate_add_connection(genome: CppnGenome, registry, params: NeatParams, rng) -> None:
    node_ids = sorted(genome.nodes)
    sources = [i for i in node_ids if genome.nodes[i].kind != "output"]
    targets = [i for i in node_ids if genome.nodes[i].kind != "input"]
    existing = {(c.src, c.dst) for c in genome.connections.values()}
    for _ in range(params.add_connection_tries):
        src = sources[int(rng.integers(len(sources)))]
        dst = targets[int(rng.integers(len(targets)))]
        if src == dst or (src, dst) in existing:
            continue
        if creates_cycle(genome.connections.values(), src, dst):
            continue
        innov = registry.connection_innovation(src, dst)
        genome.connections[innov] = ConnectionGene(
            innov, src, dst, float(rng.uniform(-1.0, 1.0))
        )
        return


def _mutate_add_node(genome: CppnGenome, registry, rng) -> None:
    enabled = [genome.connections[i] for i in sorted(genome.connections) if genome.connections[i].enabled]
    if not enabled:
        return
    conn = enabled[int(rng.integers(len(enabled)))]
    node_id, innov_in, innov_out = registry.split_ids(conn.innovation)
    if node_id in genome.nodes:
        return
    activation = HIDDEN_ACTIVATIONS[int(rng.integers(len(HIDDEN_ACTIVATIONS)))]
    conn.enabled = False
    genome.nodes[node_id] = NodeGene(node_id, "hidden", activation)
    genome.connections[innov_in] = ConnectionGene(innov_in, conn.src, node_id, 1.0)
    genome.connections[innov_out] = ConnectionGene(innov_out, node_id, conn.dst, conn.weight)


def _mutate_activation(genome: CppnGenome, params: NeatParams, rng) -> None:
    hidden = genome.hidden_ids()
    if not hidden:
        return
    nid = hidden[int(rng.integers(len(hidden)))]
    genome.nodes[nid].activation = HIDDEN_ACTIVATIONS[int(rng.integers(len(HIDDEN_ACTIVATIONS)))]


def mutate(genome: CppnGenome, registry: InnovationRegistry, params: NeatParams, rng) -> CppnGenome:
    """Return a mutated clone. Operators apply independently: weight jitter,
    add-connection (cycle-safe), add-node via connection split, activation
    change on a random hidden node."""
    g = genome.clone()
    if rng.random() < params.p_weight_mutate:
        _mutate_weights(g, params, rng)
    if rng.random() < params.p_add_connection:
        _mutate_add_connection(g, registry, params, rng)
    if rng.random() < params.p_add_node:
        _mutate_add_node(g, registry, rng)
    if rng.random() < params.p_activation:
        _mutate_activation(g, params, rng)
    return g


class NeatPopulation:
    """One evolving population plus its speciation state, innovation
    registry and RNG stream."""

    def __init__(self, genomes, params: NeatParams, registry: InnovationRegistry, rng,
                 species=None, threshold=None, generation=0, next_species_id=1):
        self.genomes = list(genomes)
        self.params = params
        self.registry = registry
        self.rng = rng
        self.species = list(species) if species else []
        self.threshold = params.compat_threshold if threshold is None else threshold
        self.generation = generation
        self.next_species_id = next_species_id

    @classmethod
    def seeded(cls, size: int, params: NeatParams, rng) -> "NeatPopulation":
        genomes = [seed_genome(rng) for _ in range(size)]
        registry = InnovationRegistry(next_innovation=5, next_node=6)
        return cls(genomes, params, registry, rng)

    def advance(self, fitness, feasible) -> dict:
        """One reproduction step. Returns an event dict ({} if nothing of
        note happened)."""
        params = self.params
        size = len(self.genomes)
        self.registry.begin_generation()
        for g, f, ok in zip(self.genomes, fitness, feasible):
            g.fitness = float(f) if ok else 0.0

        if not any(feasible):
            # Degenerate generation: no selection signal exists; drift.
            self.genomes = [mutate(g, self.registry, params, self.rng) for g in self.genomes]
            self.generation += 1
            return {"event": "degenerate_generation", "generation": self.generation}

        self.species, self.next_species_id = speciate(
            self.genomes, self.species, self.threshold, params, self.next_species_id
        )
        if len(self.species) > params.target_species:
            self.threshold += params.threshold_step
        elif len(self.species) < params.target_species:
            self.threshold = max(params.min_threshold, self.threshold - params.threshold_step)

        for s in self.species:
            best = max(m.fitness for m in s.members)
            if best > s.best_fitness:
                s.best_fitness = best
                s.staleness = 0
            else:
                s.staleness += 1
        live = [s for s in self.species if s.staleness <= params.stagnation_limit]
        if not live:
            live = [max(self.species, key=lambda s: s.best_fitness)]

        feasible_ids = {id(g) for g, ok in zip(self.genomes, feasible) if ok}
        feasible_members = {
            s.id: [m for m in s.members if id(m) in feasible_ids] for s in live
        }
        # Fitness sharing over members; infeasible members hold fitness 0.
        adjusted = {s.id: sum(m.fitness for m in s.members) / len(s.members) for s in live}
        total = sum(adjusted.values())
        quotas = self._quotas(live, adjusted, total, feasible_members, size)

        children = []
        for s in live:
            quota = quotas[s.id]
            if quota == 0:
                continue
            pool = sorted(feasible_members[s.id], key=lambda m: -m.fitness)
            if len(s.members) >= params.elite_min_size:
                children.append(pool[0].clone())
                quota -= 1
            keep = max(1, math.ceil(params.survival_fraction * len(pool)))
            pool = pool[:keep]
            for _ in range(quota):
                pa = pool[int(self.rng.integers(len(pool)))]
                pb = pool[int(self.rng.integers(len(pool)))]
                child = crossover(pa, pb, self.rng, params.p_disable_inherit)
                children.append(mutate(child, self.registry, params, self.rng))

        for s in live:
            s.representative = s.members[0]
            s.members = []
        self.species = live
        self.genomes = children
        self.generation += 1
        return {}

    def _quotas(self, live, adjusted, total, feasible_members, size) -> dict:
        # adjusted > 0 implies the species has a feasible member (infeasible
        # fitness is forced to 0), so quota mass only lands on species that
        # can actually reproduce.
        eligible = [s for s in live if feasible_members[s.id]]
        if total > 0.0:
            raw = {s.id: adjusted[s.id] / total * size for s in live}
        else:
            raw = {s.id: (size / len(eligible) if feasible_members[s.id] else 0.0) for s in live}
        quotas = {k: int(math.floor(v)) for k, v in raw.items()}
        remainder = size - sum(quotas.values())
        order = sorted(raw, key=lambda k: (-(raw[k] - quotas[k]), k))
        for k in order[:remainder]:
            quotas[k] += 1
        return quotas

    def to_dict(self) -> dict:
        from .cppn import genome_to_dict

        return {
            "generation": self.generation,
            "threshold": self.threshold,
            "next_species_id": self.next_species_id,
            "params": self.params.to_dict(),
            "registry": self.registry.to_dict(),
            "rng_state": _rng_state_to_jsonable(self.rng),
            "genomes": [genome_to_dict(g, self.generation) for g in self.genomes],
            "species": [
                {
                    "id": s.id,
                    "staleness": s.staleness,
                    "best_fitness": s.best_fitness,
                    "representative": genome_to_dict(s.representative, self.generation),
                }
                for s in self.species
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeatPopulation":
        from .cppn import genome_from_dict

        params = NeatParams.from_dict(d["params"])
        registry = InnovationRegistry.from_dict(d["registry"])
        rng = _rng_from_jsonable(d["rng_state"])
        genomes = [genome_from_dict(g) for g in d["genomes"]]
        species = [
            Species(
                s["id"],
                genome_from_dict(s["representative"]),
                s["staleness"],
                s["best_fitness"],
            )
            for s in d["species"]
        ]
        return cls(
            genomes,
            params,
            registry,
            rng,
            species=species,
            threshold=d["threshold"],
            generation=d["generation"],
            next_species_id=d["next_species_id"],
        )


def next_generation(population: NeatPopulation, fitness, feasible) -> list:
    """Advance `population` one generation in place; returns the new genome
    list. Population size is preserved exactly."""
    population.advance(fitness, feasible)
    return population.genomes


def _rng_state_to_jsonable(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": {"state": str(state["state"]["state"]), "inc": str(state["state"]["inc"])},
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }


def _rng_from_jsonable(d: dict) -> np.random.Generator:
    if d["bit_generator"] != "PCG64":
        raise ValueError(f"unsupported bit generator {d['bit_generator']!r}")
    bg = np.random.PCG64()
    bg.state = {
        "bit_generator": "PCG64",
        "state": {"state": int(d["state"]["state"]), "inc": int(d["state"]["inc"])},
        "has_uint32": d["has_uint32"],
        "uinteger": d["uinteger"],
    }
    return np.random.Generator(bg)
