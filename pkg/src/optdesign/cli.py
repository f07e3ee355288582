"""Batch experiment runner for seeded design studies.

Subcommands:

* ``run config.json [--workers N]``: execute every seed in the config,
  writing ``design_<seed>.csv`` (and ``trace_<seed>.csv`` for the search
  algorithms) plus a ``summary.json`` with per-seed criterion values,
  efficiency against an optional reference design, wall times, and the
  configuration hash.
* ``compare summary.json ... -o out.csv``: merge runs into per-algorithm
  median and 5th/95th percentile criterion trajectories per iteration
  (nearest-rank percentiles).
* ``verify [--fixture F1|random] [--seed S]``: run the exact-oracle
  identity and bound checks, printing one PASS/FAIL line per check.

Exit codes: 0 success, 1 runtime failure, 2 configuration or validation
failure (line-numbered when the JSON parser localizes the problem).  The
``OPTDESIGN_SEED`` environment variable (comma-separated integers)
overrides the config's seed list.

Design and weight CSVs are byte-reproducible for a fixed config and seed;
the seconds column of trace CSVs and the wall times in summary.json are
wall-clock measurements and are exempt from that guarantee.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .design_space import DesignSpace, FiniteSpace, builtin_space, space_from_descriptor
from .features import (
    AtomicMeasure,
    SingularGramianError,
    SingularMatrixError,
    UniformMeasure,
    a_efficiency,
    basis_from_descriptor,
    criterion,
    d_efficiency,
    information_matrix,
    monomial_basis,
    read_design_csv,
    validate_prior,
    write_design_csv,
)
from .oracle import (
    conditional_a_bound,
    conditional_d_bound,
    enumerate_conditional_pvs,
    exact_conditional_expectation,
    iid_expectation,
    reciprocal_iid_mean_det,
    truncated_unconditional_check,
)
from .pvs_sampler import build_model, sample_pvs, sample_pvs_conditional
from .relaxation import (
    density_from_weights,
    monomial_mixture_family,
    solve_density_weights,
    solve_discrete_weights,
)
from .search import (
    ProposalConfig,
    dogs,
    exchange_continuous,
    exchange_discrete,
    grid_candidates,
    lsa,
)

ALGORITHMS = (
    "pvs",
    "pvs-conditional",
    "dogs",
    "lsa",
    "exm",
    "exm-discrete",
    "relax",
    "verify",
)
# Fixed stream for Monte Carlo Gramians so the spectral model is identical
# across seeds and reruns.
GRAM_SEED = 1_000_003


class ConfigError(ValueError):
    """A configuration file failed validation."""


# ---------------------------------------------------------------------------
# config loading


def _load_json(path: str) -> dict:
    try:
        with open(path) as handle:
            return json.load(handle)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def _resolve(path: str, base_dir: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _require_file(path: str, what: str) -> str:
    if not os.path.isfile(path):
        raise ConfigError(f"{what} {path!r} does not exist")
    return path


def _space_from_config(block) -> object:
    if not isinstance(block, dict):
        raise ConfigError("space: expected an object")
    if "atoms" in block or "atoms_file" in block:
        try:
            if "atoms_file" in block:
                atoms = read_design_csv(
                    _require_file(block["atoms_file"], "space.atoms_file")
                )
            else:
                atoms = np.asarray(block["atoms"], dtype=float)
                if atoms.ndim == 1:
                    atoms = atoms[:, None]
            return FiniteSpace(atoms)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"space: {exc}") from exc
    if "name" in block and "bounding_box" not in block:
        try:
            return builtin_space(block["name"], dimension=int(block.get("dimension", 3)))
        except ValueError as exc:
            raise ConfigError(f"space: {exc}") from exc
    try:
        return space_from_descriptor(block)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"space: {exc}") from exc


def _basis_from_config(block, space) -> object:
    if not isinstance(block, dict):
        raise ConfigError("basis: expected an object")
    desc = dict(block)
    if isinstance(space, FiniteSpace):
        desc.setdefault("dimension", space.dimension)
        design_space = None
    else:
        design_space = space
    try:
        return basis_from_descriptor(desc, design_space)
    except (ValueError, KeyError, TypeError, SingularGramianError) as exc:
        raise ConfigError(f"basis: {exc}") from exc


def _prior_from_config(block, base_dir: str, p: int):
    """Return the validated (p, p) prior matrix, or None for a zero prior."""
    if block is None:
        return None
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigError("prior: expected an object with a 'kind' field")
    kind = block["kind"]
    if kind == "zero":
        raw = None
    elif kind == "scaled-identity":
        if "scale" not in block:
            raise ConfigError("prior: scaled-identity needs a 'scale' field")
        raw = float(block["scale"])
    elif kind == "matrix-file":
        path = _require_file(_resolve(block["path"], base_dir), "prior matrix file")
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
    else:
        raise ConfigError(f"prior: unknown kind {kind!r}")
    try:
        matrix = validate_prior(raw, p)
    except ValueError as exc:
        raise ConfigError(f"prior: {exc}") from exc
    return None if raw is None else matrix


def _check_positive_int(params: dict, key: str, default: int, minimum: int = 1) -> int:
    value = int(params.get(key, default))
    if value < minimum:
        raise ConfigError(f"algorithm.{key} must be >= {minimum}, got {value}")
    return value


def _check_positive_float(params: dict, key: str, default: float) -> float:
    value = float(params.get(key, default))
    if value <= 0.0:
        raise ConfigError(f"algorithm.{key} must be positive, got {value}")
    return value


def _normalize_algorithm(block, space, base_dir: str, k: int) -> dict:
    """Validate the algorithm block and fill in defaults."""
    if not isinstance(block, dict) or "name" not in block:
        raise ConfigError("algorithm: expected an object with a 'name' field")
    name = block["name"]
    if name not in ALGORITHMS:
        raise ConfigError(
            f"algorithm: unknown name {name!r}, expected one of {', '.join(ALGORITHMS)}"
        )
    out = {"name": name}
    if name == "pvs":
        out["mass"] = _check_positive_float(block, "mass", float(k))
    elif name == "pvs-conditional":
        measure = block.get("measure", "uniform")
        if measure not in ("uniform", "optimized-mixture"):
            raise ConfigError(
                f"algorithm.measure must be 'uniform' or 'optimized-mixture', got {measure!r}"
            )
        if measure == "optimized-mixture" and not isinstance(space, DesignSpace):
            raise ConfigError("algorithm: optimized-mixture needs a continuous space")
        out["measure"] = measure
        out["max_degree"] = _check_positive_int(block, "max_degree", 4, minimum=0)
        out["relax_tol"] = _check_positive_float(block, "relax_tol", 1e-6)
        out["relax_max_iter"] = _check_positive_int(block, "relax_max_iter", 20_000)
    elif name == "dogs":
        out["iters"] = _check_positive_int(block, "iters", 100, minimum=0)
        out["k_prime"] = _check_positive_int(block, "k_prime", 50)
        mode = block.get("proposal_mode", "uniform")
        if mode not in ("uniform", "uniform-plus-candidates"):
            raise ConfigError(f"algorithm.proposal_mode {mode!r} is not recognized")
        out["proposal_mode"] = mode
        out["condition_on_size"] = bool(block.get("condition_on_size", True))
        out["relax_tol"] = _check_positive_float(block, "relax_tol", 1e-5)
        out["relax_max_iter"] = _check_positive_int(block, "relax_max_iter", 2000)
        _candidate_source(block, out, base_dir, required=mode == "uniform-plus-candidates")
    elif name == "lsa":
        out["iters"] = _check_positive_int(block, "iters", 1000, minimum=0)
        out["sigma"] = _check_positive_float(block, "sigma", 0.01)
    elif name == "exm":
        if not isinstance(space, DesignSpace):
            raise ConfigError("algorithm: exm needs a continuous space")
        out["sweeps"] = _check_positive_int(block, "sweeps", 20, minimum=0)
        out["inner_budget"] = _check_positive_int(block, "inner_budget", 8, minimum=0)
    elif name == "exm-discrete":
        out["sweeps"] = _check_positive_int(block, "sweeps", 50, minimum=0)
        _candidate_source(
            block, out, base_dir, required=not isinstance(space, FiniteSpace)
        )
    elif name == "relax":
        out["tol"] = _check_positive_float(block, "tol", 1e-7)
        out["max_iter"] = _check_positive_int(block, "max_iter", 100_000)
        out["max_degree"] = _check_positive_int(block, "max_degree", 4, minimum=0)
        if not isinstance(space, (FiniteSpace, DesignSpace)):
            raise ConfigError("algorithm: relax needs a space")
    elif name == "verify":
        fixture = block.get("fixture", "F1")
        if fixture not in ("F1", "random"):
            raise ConfigError(f"algorithm.fixture must be 'F1' or 'random', got {fixture!r}")
        out["fixture"] = fixture
    return out


def _candidate_source(block: dict, out: dict, base_dir: str, required: bool) -> None:
    has_file = "candidates_file" in block
    has_step = "candidates_step" in block
    if has_file and has_step:
        raise ConfigError("algorithm: give candidates_file or candidates_step, not both")
    if required and not (has_file or has_step):
        raise ConfigError(
            "algorithm: a candidate source (candidates_file or candidates_step) is required"
        )
    if has_file:
        out["candidates_file"] = _require_file(
            _resolve(block["candidates_file"], base_dir), "candidates file"
        )
    if has_step:
        out["candidates_step"] = _check_positive_float(block, "candidates_step", 0.0)


@dataclass(eq=False)
class Experiment:
    """A validated config with its constructed objects."""

    config: dict
    base_dir: str
    space: object
    basis: object
    prior: np.ndarray | None
    k: int
    which: str
    algorithm: dict
    seeds: list
    output_dir: str
    reference: np.ndarray | None
    config_hash: str
    candidates: np.ndarray | None = None
    mixture: tuple | None = None


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _experiment_from_config(config: dict, base_dir: str) -> Experiment:
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    for key in ("space", "basis", "k", "algorithm", "seeds", "output_dir"):
        if key not in config:
            raise ConfigError(f"missing required config field {key!r}")
    space = _space_from_config(config["space"])
    basis = _basis_from_config(config["basis"], space)
    k = int(config["k"])
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    which = config.get("criterion", "D")
    if which not in ("A", "D", "logD"):
        raise ConfigError(f"criterion must be 'A', 'D', or 'logD', got {which!r}")
    prior = _prior_from_config(config.get("prior"), base_dir, basis.p)
    algorithm = _normalize_algorithm(config["algorithm"], space, base_dir, k)
    seeds = config["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a non-empty list of integers")
    try:
        seeds = [int(s) for s in seeds]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seeds must be integers: {exc}") from exc
    reference = None
    if config.get("reference_design") is not None:
        path = _require_file(
            _resolve(config["reference_design"], base_dir), "reference design"
        )
        try:
            reference = read_design_csv(path)
        except ValueError as exc:
            raise ConfigError(f"reference design: {exc}") from exc
    experiment = Experiment(
        config=config,
        base_dir=base_dir,
        space=space,
        basis=basis,
        prior=prior,
        k=k,
        which=which,
        algorithm=algorithm,
        seeds=seeds,
        output_dir=_resolve(str(config["output_dir"]), base_dir),
        reference=reference,
        config_hash=config_hash(config),
    )
    _prepare_shared_state(experiment)
    return experiment


def _prepare_shared_state(experiment: Experiment) -> None:
    """Build seed-independent heavy objects: candidate grids, the optimized
    mixture family and its relaxed weights."""
    algo = experiment.algorithm
    if "candidates_file" in algo:
        experiment.candidates = read_design_csv(algo["candidates_file"])
    elif "candidates_step" in algo:
        if not isinstance(experiment.space, DesignSpace):
            raise ConfigError("candidates_step needs a continuous space")
        experiment.candidates = grid_candidates(
            experiment.space, algo["candidates_step"]
        )
    elif algo["name"] == "exm-discrete" and isinstance(experiment.space, FiniteSpace):
        experiment.candidates = experiment.space.atoms
    if algo["name"] == "pvs-conditional" and algo["measure"] == "optimized-mixture":
        family = monomial_mixture_family(
            experiment.space, experiment.basis, algo["max_degree"]
        )
        solution = solve_density_weights(
            family,
            experiment.prior,
            experiment.k,
            which=experiment.which,
            tol=algo["relax_tol"],
            max_iter=algo["relax_max_iter"],
        )
        experiment.mixture = (family, solution.weights)


def load_experiment(path: str) -> Experiment:
    config = _load_json(path)
    _apply_seed_override(config)
    return _experiment_from_config(config, os.path.dirname(os.path.abspath(path)))


def _apply_seed_override(config: dict) -> None:
    raw = os.environ.get("OPTDESIGN_SEED")
    if raw is None:
        return
    try:
        seeds = [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"OPTDESIGN_SEED must be comma-separated integers: {raw!r}") from exc
    if not seeds:
        raise ConfigError("OPTDESIGN_SEED is set but contains no seeds")
    if isinstance(config, dict):
        config["seeds"] = seeds


# ---------------------------------------------------------------------------
# per-seed execution


def _as_finite(value) -> float | None:
    value = float(value)
    return value if math.isfinite(value) else None


def _criterion_fields(experiment: Experiment, design: np.ndarray | None) -> dict:
    """Requested-units criterion, its log-scale companion, and efficiency."""
    fields = {"criterion": None, "criterion_log": None, "efficiency": None}
    if design is None or len(design) == 0:
        return fields
    try:
        M = information_matrix(experiment.basis, design, experiment.prior)
        fields["criterion"] = _as_finite(criterion(M, experiment.which))
        log_kind = "A" if experiment.which == "A" else "logD"
        fields["criterion_log"] = _as_finite(criterion(M, log_kind))
    except SingularMatrixError:
        return fields
    if experiment.reference is not None:
        try:
            if experiment.which == "A":
                value = a_efficiency(
                    design, experiment.reference, experiment.basis, experiment.prior
                )
            else:
                value = d_efficiency(
                    design, experiment.reference, experiment.basis, experiment.prior
                )
            fields["efficiency"] = _as_finite(value)
        except SingularMatrixError:
            pass
    return fields


def _base_measure(experiment: Experiment, mass: float):
    space = experiment.space
    if isinstance(space, FiniteSpace):
        weights = np.full(space.n, mass / space.n)
        return AtomicMeasure(atoms=space.atoms, weights=weights)
    return UniformMeasure(space=space, mass=mass)


def _pvs_model(experiment: Experiment, measure):
    return build_model(
        experiment.basis,
        experiment.prior,
        measure,
        rng=np.random.default_rng(GRAM_SEED),
    )


def _write_weights_csv(path: str, labels, weights) -> None:
    with open(path, "w", newline="") as handle:
        handle.write("component,weight\n")
        for label, weight in zip(labels, weights):
            handle.write(f"{label},{repr(float(weight))}\n")


def run_seed(experiment: Experiment, seed: int) -> dict:
    """Execute one seeded run, write its artifacts, return the summary row."""
    algo = experiment.algorithm
    name = algo["name"]
    rng = np.random.default_rng(seed)
    row = {"seed": seed, "design_file": None, "trace_file": None}
    design = None
    trace = None
    started = time.perf_counter()

    if name == "pvs":
        model = _pvs_model(experiment, _base_measure(experiment, algo["mass"]))
        design = sample_pvs(model, rng).points
    elif name == "pvs-conditional":
        if algo["measure"] == "optimized-mixture":
            family, weights = experiment.mixture
            measure = density_from_weights(family, weights)
        else:
            measure = _base_measure(experiment, float(experiment.k))
        model = _pvs_model(experiment, measure)
        design = sample_pvs_conditional(model, experiment.k, rng).points
    elif name == "dogs":
        proposal = ProposalConfig(
            k_prime=algo["k_prime"],
            mode=algo["proposal_mode"],
            candidates=experiment.candidates,
        )
        trace = dogs(
            experiment.space,
            experiment.basis,
            experiment.prior,
            experiment.k,
            proposal,
            which=experiment.which,
            iters=algo["iters"],
            rng=rng,
            condition_on_size=algo["condition_on_size"],
            relax_tol=algo["relax_tol"],
            relax_max_iter=algo["relax_max_iter"],
        )
    elif name == "lsa":
        trace = lsa(
            experiment.space,
            experiment.basis,
            experiment.prior,
            experiment.k,
            sigma=algo["sigma"],
            which=experiment.which,
            iters=algo["iters"],
            rng=rng,
        )
    elif name == "exm":
        trace = exchange_continuous(
            experiment.space,
            experiment.basis,
            experiment.prior,
            experiment.k,
            which=experiment.which,
            sweeps=algo["sweeps"],
            inner_budget=algo["inner_budget"],
            rng=rng,
        )
    elif name == "exm-discrete":
        trace = exchange_discrete(
            experiment.candidates,
            experiment.basis,
            experiment.prior,
            experiment.k,
            which=experiment.which,
            sweeps=algo["sweeps"],
            rng=rng,
        )
    elif name == "relax":
        row.update(_run_relax(experiment, seed))
    elif name == "verify":
        checks = verify_checks(algo["fixture"], seed)
        path = os.path.join(experiment.output_dir, f"verify_{seed}.json")
        with open(path, "w") as handle:
            json.dump(checks, handle, indent=2, sort_keys=True)
            handle.write("\n")
        row["verify_file"] = os.path.basename(path)
        row["checks_passed"] = all(c["passed"] for c in checks)

    if trace is not None:
        design = trace.design
        trace_path = os.path.join(experiment.output_dir, f"trace_{seed}.csv")
        trace.write_csv(trace_path)
        row["trace_file"] = os.path.basename(trace_path)
    if design is not None:
        design_path = os.path.join(experiment.output_dir, f"design_{seed}.csv")
        write_design_csv(design_path, design)
        row["design_file"] = os.path.basename(design_path)
        row["points"] = int(len(design))
    row.update(_criterion_fields(experiment, design))
    row["wall_time"] = time.perf_counter() - started
    return row


def _run_relax(experiment: Experiment, seed: int) -> dict:
    algo = experiment.algorithm
    if isinstance(experiment.space, FiniteSpace):
        solution = solve_discrete_weights(
            experiment.space.atoms,
            experiment.basis,
            experiment.prior,
            experiment.k,
            which=experiment.which,
            tol=algo["tol"],
            max_iter=algo["max_iter"],
        )
        labels = [
            ";".join(repr(float(v)) for v in atom) for atom in experiment.space.atoms
        ]
    else:
        family = monomial_mixture_family(
            experiment.space, experiment.basis, algo["max_degree"]
        )
        solution = solve_density_weights(
            family,
            experiment.prior,
            experiment.k,
            which=experiment.which,
            tol=algo["tol"],
            max_iter=algo["max_iter"],
        )
        labels = list(family.names)
    path = os.path.join(experiment.output_dir, f"weights_{seed}.csv")
    _write_weights_csv(path, labels, solution.weights)
    if experiment.which == "D":
        log_value = math.log(solution.criterion) if solution.criterion > 0 else -math.inf
    else:
        log_value = solution.criterion
    return {
        "weights_file": os.path.basename(path),
        "criterion": _as_finite(solution.criterion),
        "criterion_log": _as_finite(log_value),
        "relaxation_gap": _as_finite(solution.gap),
        "relaxation_iterations": int(solution.iterations),
    }


# Per-process cache so worker pools rebuild the heavy config objects once.
_EXPERIMENT_CACHE: dict = {}


def _seed_job(payload) -> dict:
    config, base_dir, seed = payload
    key = config_hash(config)
    experiment = _EXPERIMENT_CACHE.get(key)
    if experiment is None:
        experiment = _experiment_from_config(config, base_dir)
        _EXPERIMENT_CACHE.clear()
        _EXPERIMENT_CACHE[key] = experiment
    return run_seed(experiment, seed)


def nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: the ceil(q/100 * n)-th smallest value."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("percentile of an empty sequence")
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[min(rank, len(ordered)) - 1]


def _summary_percentiles(rows) -> dict | None:
    finite = [r["criterion_log"] for r in rows if r.get("criterion_log") is not None]
    if not finite:
        return None
    return {
        "p05": nearest_rank(finite, 5),
        "p50": nearest_rank(finite, 50),
        "p95": nearest_rank(finite, 95),
    }


def _cmd_run(args) -> int:
    experiment = load_experiment(args.config)
    os.makedirs(experiment.output_dir, exist_ok=True)
    payloads = [
        (experiment.config, experiment.base_dir, seed) for seed in experiment.seeds
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_seed_job, payloads))
    else:
        rows = [run_seed(experiment, seed) for seed in experiment.seeds]
    summary = {
        "config": experiment.config,
        "config_hash": experiment.config_hash,
        "algorithm": experiment.algorithm["name"],
        "criterion": experiment.which,
        "k": experiment.k,
        "seeds": experiment.seeds,
        "runs": rows,
        "criterion_log_percentiles": _summary_percentiles(rows),
    }
    summary_path = os.path.join(experiment.output_dir, "summary.json")
    with open(summary_path, "w") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(f"wrote {len(rows)} runs to {experiment.output_dir}")
    if experiment.algorithm["name"] == "verify":
        failed = [r["seed"] for r in rows if not r.get("checks_passed", False)]
        if failed:
            print(f"verification failed for seeds {failed}", file=sys.stderr)
            return 1
    return 0


# ---------------------------------------------------------------------------
# compare


def _load_summary(path: str) -> dict:
    summary = _load_json(path)
    for key in ("config_hash", "algorithm", "criterion", "runs"):
        if key not in summary:
            raise ConfigError(f"{path}: summary schema mismatch, missing {key!r}")
    return summary


def _read_trace_values(path: str) -> list:
    with open(path) as handle:
        header = handle.readline().strip()
        if header != "iteration,criterion_log,seconds":
            raise ConfigError(f"{path}: unexpected trace header {header!r}")
        return [float(line.split(",")[1]) for line in handle if line.strip()]


def _run_trajectory(summary_dir: str, run: dict) -> list:
    if run.get("trace_file"):
        return _read_trace_values(os.path.join(summary_dir, run["trace_file"]))
    value = run.get("criterion_log")
    return [math.inf if value is None else float(value)]


def _cmd_compare(args) -> int:
    groups: dict = {}
    for path in args.summaries:
        summary = _load_summary(path)
        label = f"{summary['algorithm']}-{summary['config_hash'][:8]}"
        trajectories = groups.setdefault(label, [])
        summary_dir = os.path.dirname(os.path.abspath(path))
        for run in summary["runs"]:
            trajectories.append(_run_trajectory(summary_dir, run))
    with open(args.output, "w", newline="") as handle:
        handle.write("algorithm,iteration,p05,median,p95\n")
        for label in sorted(groups):
            trajectories = groups[label]
            length = max(len(t) for t in trajectories)
            for it in range(length):
                # Best-so-far values persist, so shorter runs are carried
                # forward at their final value.
                values = [t[min(it, len(t) - 1)] for t in trajectories]
                p05 = nearest_rank(values, 5)
                p50 = nearest_rank(values, 50)
                p95 = nearest_rank(values, 95)
                handle.write(
                    f"{label},{it},{repr(p05)},{repr(p50)},{repr(p95)}\n"
                )
    print(f"wrote {args.output}")
    return 0


# ---------------------------------------------------------------------------
# verify


def _f1_fixture():
    atoms = np.array([[0.0], [0.5], [1.0]])
    weights = np.full(3, 2.0 / 3.0)
    return atoms, weights, monomial_basis(1, 1), 2


def _random_fixture(seed: int):
    """A small random weighted-atom instance with k >= p and mass k."""
    rng = np.random.default_rng(seed)
    dimension, degree = [(1, 0), (1, 1), (1, 2), (2, 1)][rng.integers(4)]
    basis = monomial_basis(dimension, degree)
    n = int(rng.integers(max(basis.p, 2), 6))
    k = int(rng.integers(basis.p, 5))
    atoms = rng.uniform(0.0, 1.0, size=(n, dimension))
    weights = rng.uniform(0.2, 1.0, size=n)
    weights *= k / weights.sum()
    return atoms, weights, basis, k


def verify_checks(fixture: str, seed: int) -> list:
    """Exact-oracle identity and bound checks; one dict per check."""
    if fixture == "F1":
        atoms, weights, basis, k = _f1_fixture()
    elif fixture == "random":
        atoms, weights, basis, k = _random_fixture(seed)
    else:
        raise ConfigError(f"unknown fixture {fixture!r}")
    p = basis.p
    table = basis.evaluate_many(atoms)
    gram = (table * weights[:, None]).T @ table
    gram = (gram + gram.T) / 2.0
    identity = np.eye(p)
    checks = []

    report = None
    for n_max in (20, 30, 45):
        try:
            report = truncated_unconditional_check(
                atoms, weights, basis, identity, n_max=n_max, tol=1e-6
            )
        except ValueError as exc:
            if "increase n_max" in str(exc) and n_max < 45:
                continue
            raise
        break
    for check_row in report.checks:
        checks.append(
            {
                "name": f"truncated-identity:{check_row.name}",
                "value": check_row.value,
                "target": check_row.target,
                "allowance": check_row.allowance,
                "passed": bool(check_row.passed),
            }
        )

    dist_zero = enumerate_conditional_pvs(atoms, weights, basis, None, k)
    identity_value = reciprocal_iid_mean_det(atoms, weights, basis, k)
    rhs = conditional_d_bound(gram, None, k)
    checks.append(
        {
            "name": "D-moment-ratio-identity-at-zero-prior",
            "value": identity_value,
            "target": rhs,
            "allowance": 1e-10 * abs(rhs),
            "passed": bool(abs(identity_value - rhs) <= 1e-10 * abs(rhs)),
        }
    )
    lhs = exact_conditional_expectation(dist_zero, "inv_det")
    checks.append(
        {
            "name": "conditional-D-moment-below-identity-zero-prior",
            "value": lhs,
            "target": identity_value,
            "allowance": 1e-10 * abs(identity_value),
            "passed": bool(lhs <= identity_value + 1e-10 * abs(identity_value)),
        }
    )

    dist_eye = enumerate_conditional_pvs(atoms, weights, basis, identity, k)
    for prior, dist, tag in [
        (None, dist_zero, "zero"),
        (identity, dist_eye, "identity"),
    ]:
        lhs = exact_conditional_expectation(dist, "trace_inv")
        rhs = conditional_a_bound(gram, prior, k)
        checks.append(
            {
                "name": f"conditional-A-moment-bound-{tag}-prior",
                "value": lhs,
                "target": rhs,
                "allowance": 1e-10 * abs(rhs),
                "passed": bool(lhs <= rhs + 1e-10 * abs(rhs)),
            }
        )

    for prior, dist, tag in [
        (None, dist_zero, "zero"),
        (identity, dist_eye, "identity"),
    ]:
        pvs_value = exact_conditional_expectation(dist, "inv_det")
        iid_value = iid_expectation(atoms, weights, basis, prior, k, "inv_det")
        checks.append(
            {
                "name": f"conditional-beats-iid-D-moment-{tag}-prior",
                "value": pvs_value,
                "target": iid_value,
                "allowance": 1e-12 * abs(iid_value),
                "passed": bool(pvs_value <= iid_value + 1e-12 * abs(iid_value)),
            }
        )
    return checks


def _cmd_verify(args) -> int:
    checks = verify_checks(args.fixture, args.seed)
    width = max(len(c["name"]) for c in checks)
    all_passed = True
    for check in checks:
        status = "PASS" if check["passed"] else "FAIL"
        all_passed &= check["passed"]
        print(
            f"{status} {check['name']:<{width}} value={check['value']:.12g} "
            f"target={check['target']:.12g} allowance={check['allowance']:.3g}"
        )
    print(f"{'all checks passed' if all_passed else 'some checks FAILED'} "
          f"(fixture {args.fixture}, seed {args.seed})")
    return 0 if all_passed else 1


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="optdesign",
        description="Seeded experiment runner for optimal-design algorithms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="execute a seeded experiment config")
    run_parser.add_argument("config", help="path to the experiment JSON config")
    run_parser.add_argument(
        "--workers", type=int, default=1, help="worker processes for the seed sweep"
    )

    compare_parser = sub.add_parser(
        "compare", help="merge run summaries into percentile trajectories"
    )
    compare_parser.add_argument("summaries", nargs="+", help="summary.json files")
    compare_parser.add_argument("-o", "--output", required=True, help="output CSV path")

    verify_parser = sub.add_parser(
        "verify", help="run exact-oracle identity and bound checks"
    )
    verify_parser.add_argument("--fixture", choices=["F1", "random"], default="F1")
    verify_parser.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_verify(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures from the algorithm modules
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
