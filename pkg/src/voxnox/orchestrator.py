"""The exploration-transformation outer loop.

Each iteration runs CPPN-NEAT novelty search per population against the
current autoencoder (exploration), then rebuilds the autoencoder per the
configured strategy (transformation) and re-encodes the archives.

Determinism: every random draw comes from a stream derived from the master
seed by stable hashing, so (config, master seed) -> bit-identical run
directory, and a resumed run reproduces the uninterrupted one exactly.
Checkpoints are whole phase directories written to a temp name and renamed.
"""

import csv
import json
import math
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import (
    AeParams,
    AutoencoderModel,
    encode_batch,
    load_model,
    reconstruction_error,
    save_model,
    train,
)
from .cppn import generate_hull, genome_from_dict, genome_to_dict
from .errors import ConfigError, EmptyTrainingSetError, VoxnoxError
from .metrics import latent_phenotype_correlation, divergence_from_seed, population_diversity
from .neat import NeatParams, NeatPopulation
from .novelty import NoveltyArchive, novelty_scores, reencode_archive, update_archive
from .voxel_core import repair_pipeline, structural_stats

STRATEGIES = ("static", "random", "latest_set", "full_history", "novelty_archive")

# Stream domains for per-purpose RNGs derived from the master seed.
_DOMAIN_POPULATION = 1
_DOMAIN_AE_INIT = 2
_DOMAIN_TRAIN = 3
_DOMAIN_RANDOM_WEIGHTS = 4


def rng_stream(master_seed: int, domain: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((master_seed, domain, index))))


def derived_seed(master_seed: int, domain: int, index: int = 0) -> int:
    return int(np.random.SeedSequence((master_seed, domain, index)).generate_state(1)[0])


def worker_count() -> int:
    raw = os.environ.get("VOXNOX_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class ExperimentConfig:
    strategy: str = "latest_set"
    iterations: int = 10
    populations: int = 10
    population_size: int = 200
    generations_per_phase: int = 100
    k_neighbors: int = 15
    archive_per_generation: int = 3
    latest_set_count: int = 100
    lattice_dims: tuple = (20, 20, 20)
    epochs: int = 100
    batch_size: int = 64
    master_seed: int = 0
    neat: NeatParams = field(default_factory=NeatParams)
    ae: AeParams = field(default_factory=AeParams)
    schema_version: int = 1

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"{self.strategy!r} is not one of {list(STRATEGIES)}")
        for name in ("iterations", "populations", "population_size", "generations_per_phase",
                     "k_neighbors", "archive_per_generation", "latest_set_count",
                     "epochs", "batch_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(name, f"expected a positive integer, got {v!r}")
        if self.population_size < 2:
            raise ConfigError("population_size", "must be at least 2")
        if tuple(self.lattice_dims) != tuple(self.ae.dims):
            raise ConfigError("ae.dims", f"must match lattice_dims {tuple(self.lattice_dims)}")

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "strategy": self.strategy,
            "iterations": self.iterations,
            "populations": self.populations,
            "population_size": self.population_size,
            "generations_per_phase": self.generations_per_phase,
            "k_neighbors": self.k_neighbors,
            "archive_per_generation": self.archive_per_generation,
            "latest_set_count": self.latest_set_count,
            "lattice_dims": list(self.lattice_dims),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "master_seed": self.master_seed,
            "neat": self.neat.to_dict(),
            "ae": self.ae.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "expected a JSON object")
        known = {
            "schema_version", "strategy", "iterations", "populations", "population_size",
            "generations_per_phase", "k_neighbors", "archive_per_generation",
            "latest_set_count", "lattice_dims", "epochs", "batch_size", "master_seed",
            "neat", "ae",
        }
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown config field")
        kwargs = dict(d)
        if "lattice_dims" in kwargs:
            kwargs["lattice_dims"] = tuple(kwargs["lattice_dims"])
        if "neat" in kwargs:
            try:
                kwargs["neat"] = NeatParams.from_dict(kwargs["neat"])
            except TypeError as exc:
                raise ConfigError("neat", str(exc)) from None
        if "ae" in kwargs:
            try:
                kwargs["ae"] = AeParams.from_dict(kwargs["ae"])
            except TypeError as exc:
                raise ConfigError("ae", str(exc)) from None
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<json>", f"line {exc.lineno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(data)


@dataclass
class RunState:
    config: ExperimentConfig
    model: AutoencoderModel
    populations: list
    archives: list
    seed_genomes: list  # per population, the bootstrap genomes (clones)
    final_snapshots: list = field(default_factory=list)  # one item per exploration phase
    phase: int = 0  # completed phases

    def seed_lattices(self, pop_index: int) -> list:
        dims = tuple(self.config.lattice_dims)
        return [repair_pipeline(generate_hull(g, dims))[0] for g in self.seed_genomes[pop_index]]


def _evaluate_genomes(genomes, dims):
    lattices = []
    feasible = []
    for g in genomes:
        lat, ok = repair_pipeline(generate_hull(g, dims))
        lattices.append(lat)
        feasible.append(ok)
    return lattices, feasible


def _ci95(values) -> float:
    if len(values) < 2:
        return 0.0
    return float(1.96 * np.std(values, ddof=1) / math.sqrt(len(values)))


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------

def bootstrap(config: ExperimentConfig) -> tuple:
    """Seed all populations, repair their lattices, train the initial
    (static) model on the seed lattices. Strategy-independent: two
    strategies with one master seed share a bit-identical bootstrap.

    Returns (RunState, phase_record).
    """
    config.validate()
    log = []
    events = []
    populations = []
    archives = []
    seed_genomes = []
    all_lattices = []
    feasible_lattices = []
    dims = tuple(config.lattice_dims)
    for i in range(config.populations):
        rng = rng_stream(config.master_seed, _DOMAIN_POPULATION, i)
        pop = NeatPopulation.seeded(config.population_size, config.neat, rng)
        populations.append(pop)
        archives.append(NoveltyArchive())
        seed_genomes.append([g.clone() for g in pop.genomes])
        lattices, feasible = _evaluate_genomes(pop.genomes, dims)
        all_lattices.extend(lattices)
        feasible_lattices.extend(l for l, ok in zip(lattices, feasible) if ok)
        log.append(f"[bootstrap] population {i:02d}: {sum(feasible)}/{len(feasible)} feasible seeds")

    if len(feasible_lattices) >= 2:
        training = feasible_lattices
    elif all_lattices:
        # Minimal seed genomes cannot enclose interior air, so feasible seeds
        # are typically absent; pre-train on every repaired seed lattice.
        training = all_lattices
        events.append({"event": "bootstrap_feasible_fallback", "feasible": len(feasible_lattices)})
        log.append(
            f"[bootstrap] only {len(feasible_lattices)} feasible seed lattices; "
            f"pre-training on all {len(all_lattices)} repaired seed lattices"
        )
    else:
        raise EmptyTrainingSetError("bootstrap produced no seed lattices")

    model = AutoencoderModel(config.ae, derived_seed(config.master_seed, _DOMAIN_AE_INIT))
    train(model, training, epochs=config.epochs, batch_size=config.batch_size,
          rng=rng_stream(config.master_seed, _DOMAIN_TRAIN, 0))
    log.append(
        f"[bootstrap] initial model trained on {len(training)} lattices for "
        f"{config.epochs} epochs; final loss {model.history[-1]:.6f}"
    )
    state = RunState(config, model, populations, archives, seed_genomes)
    record = {"kind": "bootstrap", "phase": 0, "events": events, "log": log, "metrics": {}}
    return state, record


# ---------------------------------------------------------------------------
# exploration
# ---------------------------------------------------------------------------

def _explore_population(pop, archive, model, config, phase_index, pop_index):
    """Run one population through a full exploration phase. Returns a dict
    with the final snapshot, metric rows and events."""
    dims = tuple(config.lattice_dims)
    rows_div = []
    rows_exp = []
    events = []
    snapshot = None
    gens = config.generations_per_phase
    for gen in range(1, gens + 1):
        lattices, feasible = _evaluate_genomes(pop.genomes, dims)
        feas_idx = [i for i, ok in enumerate(feasible) if ok]
        feas_lattices = [lattices[i] for i in feas_idx]
        if feas_lattices:
            latents = encode_batch(model, feas_lattices, config.batch_size)
            scores = novelty_scores(latents, archive, config.k_neighbors)
            update_archive(
                archive,
                [(feas_lattices[j], latents[j], float(scores[j])) for j in range(len(feas_idx))],
                config.archive_per_generation,
                phase_index,
                gen,
            )
        else:
            scores = np.zeros(0)

        fitness = [0.0] * len(pop.genomes)
        for j, i in enumerate(feas_idx):
            fitness[i] = float(scores[j])

        div = population_diversity(lattices)
        stats = [structural_stats(l) for l in lattices]
        rows_div.append([phase_index, gen, pop_index, float(np.mean(div)), _ci95(div)])
        rows_exp.append([
            phase_index, gen, pop_index,
            len(feas_idx),
            float(np.mean(scores)) if len(feas_idx) else 0.0,
            float(np.max(scores)) if len(feas_idx) else 0.0,
            len(archive),
            float(np.mean([s.bounding_box[0] for s in stats])),
            float(np.mean([s.bounding_box[1] for s in stats])),
            float(np.mean([s.bounding_box[2] for s in stats])),
            float(np.mean([s.symmetry for s in stats])),
            float(np.mean([s.instability for s in stats])),
            float(np.mean([s.surface_area for s in stats])),
        ])

        if gen == gens:
            snapshot = {
                "genomes": [g.clone() for g in pop.genomes],
                "fitness": list(fitness),
                "feasible": list(feasible),
            }
            for g, f in zip(snapshot["genomes"], fitness):
                g.fitness = f
        event = pop.advance(fitness, feasible)
        if event:
            event.update({"population": pop_index, "phase": phase_index})
            events.append(event)
    return {
        "snapshot": snapshot,
        "rows_div": rows_div,
        "rows_exp": rows_exp,
        "events": events,
    }


def exploration_phase(state: RunState) -> dict:
    """Evolve every population `generations_per_phase` generations against
    the current model; append the final evaluated snapshot to history."""
    config = state.config
    phase_index = state.phase + 1
    workers = worker_count()
    jobs = list(range(config.populations))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    lambda i: _explore_population(
                        state.populations[i], state.archives[i], state.model,
                        config, phase_index, i,
                    ),
                    jobs,
                )
            )
    else:
        results = [
            _explore_population(
                state.populations[i], state.archives[i], state.model, config, phase_index, i
            )
            for i in jobs
        ]

    log = []
    events = []
    snapshots = []
    metrics = {"diversity": [], "exploration": []}
    for i, res in enumerate(results):
        snapshots.append(res["snapshot"])
        metrics["diversity"].extend(res["rows_div"])
        metrics["exploration"].extend(res["rows_exp"])
        events.extend(res["events"])
        n_feas = sum(res["snapshot"]["feasible"])
        log.append(
            f"[phase {phase_index:02d}|exploration] population {i:02d}: "
            f"{n_feas}/{config.population_size} feasible finals, archive {len(state.archives[i])}"
        )
    for ev in events:
        log.append(
            f"[phase {phase_index:02d}|exploration] population {ev['population']:02d} "
            f"generation {ev['generation']}: {ev['event']}"
        )
    state.final_snapshots.append(snapshots)
    state.phase = phase_index

    metrics.update(_phase_reports(state, phase_index))
    record = {
        "kind": "exploration",
        "phase": phase_index,
        "iteration": (phase_index + 1) // 2,
        "events": events,
        "log": log,
        "metrics": metrics,
    }
    return record


def _snapshot_lattices(snapshot, dims, feasible_only=False):
    out = []
    for g, ok in zip(snapshot["genomes"], snapshot["feasible"]):
        if feasible_only and not ok:
            continue
        out.append(repair_pipeline(generate_hull(g, dims))[0])
    return out


def _phase_reports(state: RunState, phase_index: int) -> dict:
    """Final-population reports for the phase: diversity, divergence from
    seeds, latent/KL correlation and reconstruction error under the current
    model."""
    config = state.config
    dims = tuple(config.lattice_dims)
    rows_final = []
    rows_seed = []
    rows_corr = []
    rows_reco = []
    last = state.final_snapshots[-1]
    for i, snap in enumerate(last):
        lattices = _snapshot_lattices(snap, dims)
        div = population_diversity(lattices)
        rows_final.append([phase_index, i, float(np.mean(div)), _ci95(div)])
        seed_lat = state.seed_lattices(i)
        sd = divergence_from_seed(lattices, seed_lat)
        rows_seed.append([phase_index, i, float(np.mean(sd)), _ci95(sd)])
        r = latent_phenotype_correlation(lattices, state.model)
        rows_corr.append([phase_index, i, r, len(lattices) * (len(lattices) - 1) // 2,
                          not math.isnan(r)])
        rows_reco.append([phase_index, i, reconstruction_error(state.model, lattices,
                                                               config.batch_size)])
    return {
        "final_diversity": rows_final,
        "seed_divergence": rows_seed,
        "correlation": rows_corr,
        "reconstruction": rows_reco,
    }


# ---------------------------------------------------------------------------
# transformation
# ---------------------------------------------------------------------------

def assemble_training_set(state: RunState, strategy: str):
    """Build the transformation training set per strategy. Returns
    (lattices, events).

    While topology is still growing toward the entrance constraint a
    selection can come back empty; each strategy then falls back to its own
    selection shape without the feasibility filter (logged), so that the
    strategies keep their distinct data profiles instead of aborting.
    """
    config = state.config
    dims = tuple(config.lattice_dims)
    events = []
    if strategy in ("static", "random"):
        return [], events
    lattices = []
    if strategy == "latest_set":
        phases = [len(state.final_snapshots) - 1]
    elif strategy == "full_history":
        phases = list(range(len(state.final_snapshots)))
    elif strategy == "novelty_archive":
        for archive in state.archives:
            lattices.extend(e.lattice for e in archive.entries)
        if not lattices:
            events.append({"event": "training_set_fallback", "strategy": strategy})
            for snaps in state.final_snapshots:
                for snap in snaps:
                    lattices.extend(_snapshot_lattices(snap, dims))
        return lattices, events
    else:
        raise ConfigError("strategy", f"unknown strategy {strategy!r}")

    for p in phases:
        for i, snap in enumerate(state.final_snapshots[p]):
            order = sorted(
                (j for j, ok in enumerate(snap["feasible"]) if ok),
                key=lambda j: -snap["fitness"][j],
            )
            take = order[: config.latest_set_count]
            if len(take) < config.latest_set_count:
                events.append({
                    "event": "latest_set_shortfall",
                    "phase": p + 1,
                    "population": i,
                    "feasible": len(take),
                })
            for j in take:
                lattices.append(repair_pipeline(generate_hull(snap["genomes"][j], dims))[0])
    if not lattices:
        events.append({"event": "training_set_fallback", "strategy": strategy})
        for p in phases:
            for snap in state.final_snapshots[p]:
                lattices.extend(_snapshot_lattices(snap, dims))
    return lattices, events


def transformation_phase(state: RunState) -> dict:
    """Rebuild the model per strategy and re-encode all archives with it."""
    config = state.config
    phase_index = state.phase + 1
    strategy = config.strategy
    log = []
    events = []
    training_size = 0

    if strategy == "static":
        log.append(f"[phase {phase_index:02d}|transformation] static model kept unchanged")
    elif strategy == "random":
        state.model.randomize(rng_stream(config.master_seed, _DOMAIN_RANDOM_WEIGHTS, phase_index))
        log.append(f"[phase {phase_index:02d}|transformation] model re-randomized, no training")
    else:
        training, events = assemble_training_set(state, strategy)
        if any(ev["event"] == "training_set_fallback" for ev in events):
            log.append(
                f"[phase {phase_index:02d}|transformation] empty {strategy} selection; "
                f"falling back to {len(training)} unfiltered final lattices"
            )
        if not training:
            raise EmptyTrainingSetError(f"strategy {strategy}: no lattices to train on")
        training_size = len(training)
        train(state.model, training, epochs=config.epochs, batch_size=config.batch_size,
              rng=rng_stream(config.master_seed, _DOMAIN_TRAIN, phase_index))
        log.append(
            f"[phase {phase_index:02d}|transformation] retrained on {training_size} lattices; "
            f"final loss {state.model.history[-1]:.6f}"
        )
        for ev in events:
            if ev["event"] == "latest_set_shortfall":
                log.append(
                    f"[phase {phase_index:02d}|transformation] phase {ev['phase']} population "
                    f"{ev['population']:02d}: only {ev['feasible']} feasible finals"
                )

    if strategy != "static":
        for archive in state.archives:
            reencode_archive(archive, state.model)
        log.append(f"[phase {phase_index:02d}|transformation] archives re-encoded")

    state.phase = phase_index
    metrics = _phase_reports(state, phase_index) if state.final_snapshots else {}
    record = {
        "kind": "transformation",
        "phase": phase_index,
        "iteration": phase_index // 2,
        "events": events,
        "log": log,
        "metrics": metrics,
        "training_set_size": training_size,
    }
    return record


# ---------------------------------------------------------------------------
# run directory
# ---------------------------------------------------------------------------

def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _phase_dir(out_dir, phase_index: int) -> str:
    if phase_index == 0:
        return os.path.join(out_dir, "bootstrap")
    return os.path.join(out_dir, f"phase_{phase_index:02d}")


def _write_checkpoint(out_dir, state: RunState, record: dict, snapshots=None) -> None:
    final = _phase_dir(out_dir, record["phase"])
    tmp = final + ".tmp"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    for i, pop in enumerate(state.populations):
        data = pop.to_dict()
        if snapshots is not None:
            snap = snapshots[i]
            data["final_snapshot"] = {
                "genomes": [
                    genome_to_dict(g, pop.generation) for g in snap["genomes"]
                ],
                "feasible": snap["feasible"],
            }
        _write_json(os.path.join(tmp, f"population_{i:02d}.json"), data)
        _write_json(os.path.join(tmp, f"archive_{i:02d}.json"), state.archives[i].to_dict())
    save_model(state.model, os.path.join(tmp, "model.bin"), os.path.join(tmp, "model.json"))
    _write_json(os.path.join(tmp, "phase.json"), record)
    os.rename(tmp, final)


_METRIC_SCHEMAS = {
    "diversity": ["phase", "generation", "population", "mean_kl", "ci95"],
    "exploration": [
        "phase", "generation", "population", "feasible", "novelty_mean", "novelty_max",
        "archive_size", "bbox_w", "bbox_h", "bbox_d", "symmetry", "instability",
        "surface_area",
    ],
    "final_diversity": ["phase", "population", "mean_kl", "ci95"],
    "seed_divergence": ["phase", "population", "mean_kl", "ci95"],
    "correlation": ["phase", "population", "pearson_r", "n_pairs", "defined"],
    "reconstruction": ["phase", "population", "error_pct"],
}


def rebuild_outputs(out_dir) -> None:
    """Regenerate metrics/*.csv and log.txt from the completed phase
    checkpoints; deterministic for a given set of checkpoints."""
    records = []
    boot = os.path.join(out_dir, "bootstrap", "phase.json")
    if os.path.exists(boot):
        records.append(_read_json(boot))
    i = 1
    while True:
        path = os.path.join(_phase_dir(out_dir, i), "phase.json")
        if not os.path.exists(path):
            break
        records.append(_read_json(path))
        i += 1

    metrics_dir = os.path.join(out_dir, "metrics")
    os.makedirs(metrics_dir, exist_ok=True)
    for name, header in _METRIC_SCHEMAS.items():
        rows = []
        for rec in records:
            rows.extend(rec.get("metrics", {}).get(name, []))
        with open(os.path.join(metrics_dir, f"{name}.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)

    with open(os.path.join(out_dir, "log.txt"), "w", encoding="utf-8") as fh:
        for rec in records:
            for line in rec.get("log", []):
                fh.write(line + "\n")


def completed_phases(out_dir) -> int:
    """Number of completed phase checkpoints (bootstrap not counted)."""
    i = 1
    while os.path.isdir(_phase_dir(out_dir, i)):
        i += 1
    return i - 1


def _load_state(out_dir, config: ExperimentConfig) -> RunState:
    last = completed_phases(out_dir)
    src = _phase_dir(out_dir, last)
    populations = []
    archives = []
    for i in range(config.populations):
        pop_data = _read_json(os.path.join(src, f"population_{i:02d}.json"))
        populations.append(NeatPopulation.from_dict(pop_data))
        archives.append(
            NoveltyArchive.from_dict(_read_json(os.path.join(src, f"archive_{i:02d}.json")))
        )
    model = load_model(os.path.join(src, "model.bin"), os.path.join(src, "model.json"))

    boot_dir = _phase_dir(out_dir, 0)
    seed_genomes = []
    for i in range(config.populations):
        data = _read_json(os.path.join(boot_dir, f"population_{i:02d}.json"))
        seed_genomes.append([genome_from_dict(g) for g in data["genomes"]])

    final_snapshots = []
    for p in range(1, last + 1, 2):  # odd phases are exploration
        snaps = []
        pdir = _phase_dir(out_dir, p)
        for i in range(config.populations):
            data = _read_json(os.path.join(pdir, f"population_{i:02d}.json"))
            snap = data["final_snapshot"]
            genomes = [genome_from_dict(g) for g in snap["genomes"]]
            snaps.append({
                "genomes": genomes,
                "fitness": [g.fitness for g in genomes],
                "feasible": snap["feasible"],
            })
        final_snapshots.append(snaps)
    return RunState(config, model, populations, archives, seed_genomes,
                    final_snapshots, phase=last)


def _run_phases(out_dir, state: RunState, stop_after_phase=None) -> None:
    total = 2 * state.config.iterations
    while state.phase < total:
        next_phase = state.phase + 1
        if next_phase % 2 == 1:
            record = exploration_phase(state)
            snapshots = state.final_snapshots[-1]
        else:
            record = transformation_phase(state)
            snapshots = None
        _write_checkpoint(out_dir, state, record, snapshots)
        rebuild_outputs(out_dir)
        if stop_after_phase is not None and state.phase >= stop_after_phase:
            return


def run(config: ExperimentConfig, out_dir, stop_after_phase=None) -> str:
    """Execute a full experiment into a fresh run directory."""
    config.validate()
    if os.path.exists(out_dir) and os.listdir(out_dir):
        raise VoxnoxError(f"run directory {out_dir} already exists; use resume")
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "config.json"), config.to_dict())
    state, record = bootstrap(config)
    _write_checkpoint(out_dir, state, record, None)
    rebuild_outputs(out_dir)
    _run_phases(out_dir, state, stop_after_phase)
    return out_dir


def resume(out_dir, stop_after_phase=None) -> str:
    """Continue an interrupted run from its last complete checkpoint."""
    config_path = os.path.join(out_dir, "config.json")
    if not os.path.exists(config_path):
        raise VoxnoxError(f"{out_dir} is not a run directory (missing config.json)")
    config = ExperimentConfig.from_dict(_read_json(config_path))
    if not os.path.isdir(_phase_dir(out_dir, 0)):
        raise VoxnoxError(f"{out_dir} has no bootstrap checkpoint")
    # Drop debris from an interrupted checkpoint write.
    for name in os.listdir(out_dir):
        if name.endswith(".tmp"):
            shutil.rmtree(os.path.join(out_dir, name))
    state = _load_state(out_dir, config)
    _run_phases(out_dir, state, stop_after_phase)
    rebuild_outputs(out_dir)
    return out_dir
