"""End-to-end checks for the command-line front end.

Everything runs in-process through ``main(argv)`` so exit codes, stderr
text, and artifact bytes can be asserted directly.  The worker-pool test
is the only one that spawns real subprocesses.
"""

import itertools
import json
import os

import numpy as np
import pytest

from optdesign.cli import (
    config_hash,
    load_experiment,
    main,
    nearest_rank,
    verify_checks,
)
from optdesign.features import (
    criterion,
    information_matrix,
    monomial_basis,
    read_design_csv,
    write_design_csv,
)

ATOMS = [[0.0], [0.25], [0.5], [0.75], [1.0]]

BASE_CONFIG = {
    "space": {"atoms": ATOMS},
    "basis": {"kind": "monomials-up-to-degree", "degree": 1},
    "k": 3,
    "criterion": "logD",
    "algorithm": {"name": "dogs", "iters": 3, "k_prime": 3, "relax_max_iter": 300},
    "seeds": [0, 1],
    "output_dir": "out",
}

BOX_1D = {"dimension": 1, "bounding_box": [[0.0, 1.0]]}


def write_config(tmp_path, overrides=None, name="config.json"):
    config = json.loads(json.dumps(BASE_CONFIG))
    for key, value in (overrides or {}).items():
        if value is None:
            config.pop(key, None)
        else:
            config[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(config, indent=2))
    return path


def read_trace(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,criterion_log,seconds"
    rows = [line.split(",") for line in lines[1:]]
    return [(int(r[0]), float(r[1]), float(r[2])) for r in rows]


def exhaustive_best_design(atoms, basis, k):
    atoms = np.asarray(atoms, dtype=float)
    best_value, best = np.inf, None
    for combo in itertools.combinations_with_replacement(range(len(atoms)), k):
        design = atoms[list(combo)]
        try:
            value = criterion(information_matrix(basis, design, None), "logD")
        except Exception:
            continue
        if value < best_value:
            best_value, best = value, design
    return best


# ---------------------------------------------------------------------------
# validation and exit codes


def test_malformed_json_reports_line_and_column(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "space": {,}\n}\n')
    assert main(["run", str(path)]) == 2
    err = capsys.readouterr().err
    assert "line 2 column" in err


def test_missing_config_file_is_a_validation_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nowhere.json")]) == 2
    assert "nowhere.json" in capsys.readouterr().err


@pytest.mark.parametrize(
    "key", ["space", "basis", "k", "algorithm", "seeds", "output_dir"]
)
def test_each_required_key_is_enforced(tmp_path, capsys, key):
    path = write_config(tmp_path, {key: None})
    assert main(["run", str(path)]) == 2
    assert key in capsys.readouterr().err


@pytest.mark.parametrize(
    "overrides, fragment",
    [
        ({"k": 0}, "k must be"),
        ({"seeds": []}, "seeds"),
        ({"criterion": "E"}, "criterion"),
        ({"algorithm": {"name": "newton"}}, "unknown name"),
        ({"algorithm": {"name": "dogs", "iters": -1}}, "iters"),
        ({"algorithm": {"name": "lsa", "sigma": 0.0}}, "sigma"),
        ({"prior": {"kind": "cauchy"}}, "unknown kind"),
        ({"space": {"atoms": [[0.0], [0.0]]}}, "pairwise distinct"),
        (
            {"algorithm": {"name": "pvs-conditional", "measure": "optimized-mixture"}},
            "continuous space",
        ),
        ({"algorithm": {"name": "exm"}}, "continuous space"),
        (
            {
                "space": BOX_1D,
                "algorithm": {"name": "exm-discrete"},
            },
            "candidate source",
        ),
        (
            {
                "algorithm": {
                    "name": "dogs",
                    "proposal_mode": "uniform-plus-candidates",
                    "candidates_file": "a.csv",
                    "candidates_step": 0.5,
                }
            },
            "not both",
        ),
    ],
)
def test_validation_failures_exit_2(tmp_path, capsys, overrides, fragment):
    path = write_config(tmp_path, overrides)
    assert main(["run", str(path)]) == 2
    assert fragment in capsys.readouterr().err


def test_seed_override_rewrites_seeds_before_hashing(tmp_path, monkeypatch):
    path = write_config(tmp_path)
    plain = load_experiment(str(path))
    monkeypatch.setenv("OPTDESIGN_SEED", "5, 6")
    overridden = load_experiment(str(path))
    assert plain.seeds == [0, 1]
    assert overridden.seeds == [5, 6]
    assert overridden.config_hash != plain.config_hash
    assert overridden.config_hash == config_hash(overridden.config)


def test_seed_override_garbage_is_rejected(tmp_path, monkeypatch, capsys):
    path = write_config(tmp_path)
    monkeypatch.setenv("OPTDESIGN_SEED", "five")
    assert main(["run", str(path)]) == 2
    assert "OPTDESIGN_SEED" in capsys.readouterr().err


def test_seed_override_names_the_output_files(tmp_path, monkeypatch):
    path = write_config(tmp_path, {"seeds": [0], "algorithm": {"name": "pvs"}})
    monkeypatch.setenv("OPTDESIGN_SEED", "9")
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    assert (out / "design_9.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seeds"] == [9]


# ---------------------------------------------------------------------------
# run artifacts


def test_dogs_run_writes_consistent_artifacts(tmp_path):
    path = write_config(tmp_path)
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["algorithm"] == "dogs"
    assert summary["criterion"] == "logD"
    assert summary["config_hash"] == config_hash(summary["config"])
    assert [run["seed"] for run in summary["runs"]] == [0, 1]

    basis = monomial_basis(1, 1)
    for run in summary["runs"]:
        design = read_design_csv(out / run["design_file"])
        assert run["points"] == len(design) == 3
        value = criterion(information_matrix(basis, design, None), "logD")
        assert run["criterion_log"] == pytest.approx(value, rel=0, abs=1e-12)
        assert run["criterion"] == pytest.approx(value, rel=0, abs=1e-12)
        rows = read_trace(out / run["trace_file"])
        assert [r[0] for r in rows] == list(range(4))
        values = [r[1] for r in rows]
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert values[-1] == pytest.approx(run["criterion_log"], rel=0, abs=1e-12)

    pct = summary["criterion_log_percentiles"]
    assert pct["p05"] <= pct["p50"] <= pct["p95"]


def test_reruns_are_byte_identical_and_worker_count_is_invisible(tmp_path):
    path = write_config(tmp_path)
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    designs = {f: (out / f).read_bytes() for f in ("design_0.csv", "design_1.csv")}
    traces = {
        f: [r[:2] for r in read_trace(out / f)]
        for f in ("trace_0.csv", "trace_1.csv")
    }

    assert main(["run", str(path)]) == 0
    for name, body in designs.items():
        assert (out / name).read_bytes() == body
    for name, rows in traces.items():
        assert [r[:2] for r in read_trace(out / name)] == rows

    assert main(["run", str(path), "--workers", "2"]) == 0
    for name, body in designs.items():
        assert (out / name).read_bytes() == body
    for name, rows in traces.items():
        assert [r[:2] for r in read_trace(out / name)] == rows


def test_pvs_run_reports_the_sampled_size(tmp_path):
    path = write_config(
        tmp_path,
        {
            "algorithm": {"name": "pvs"},
            "prior": {"kind": "scaled-identity", "scale": 1.0},
            "seeds": [0, 1, 2],
        },
    )
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    basis = monomial_basis(1, 1)
    prior = np.eye(2)
    for run in summary["runs"]:
        design = read_design_csv(out / run["design_file"])
        assert run["points"] == len(design)
        assert run["trace_file"] is None
        value = criterion(information_matrix(basis, design, prior), "logD")
        assert run["criterion_log"] == pytest.approx(value, rel=0, abs=1e-12)


def test_conditional_pvs_run_hits_the_requested_size(tmp_path):
    path = write_config(
        tmp_path,
        {
            "space": BOX_1D,
            "algorithm": {"name": "pvs-conditional"},
            "prior": {"kind": "scaled-identity", "scale": 0.01},
            "seeds": [0],
        },
    )
    assert main(["run", str(path)]) == 0
    design = read_design_csv(tmp_path / "out" / "design_0.csv")
    assert design.shape == (3, 1)
    assert np.all(design >= 0.0) and np.all(design <= 1.0)


def test_relax_run_writes_seed_independent_weights(tmp_path):
    path = write_config(
        tmp_path,
        {"algorithm": {"name": "relax", "tol": 1e-6, "max_iter": 2000}},
    )
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    first = (out / "weights_0.csv").read_text()
    assert first == (out / "weights_1.csv").read_text()
    lines = first.splitlines()
    assert lines[0] == "component,weight"
    weights = np.array([float(line.split(",")[1]) for line in lines[1:]])
    assert weights.sum() == pytest.approx(3.0, rel=1e-9)
    summary = json.loads((out / "summary.json").read_text())
    run = summary["runs"][0]
    assert run["relaxation_gap"] is not None
    assert run["relaxation_iterations"] >= 1


def test_exm_discrete_defaults_to_the_space_atoms(tmp_path):
    path = write_config(
        tmp_path,
        {
            "algorithm": {"name": "exm-discrete", "sweeps": 5},
            "prior": {"kind": "scaled-identity", "scale": 1e-6},
            "seeds": [0],
        },
    )
    assert main(["run", str(path)]) == 0
    design = read_design_csv(tmp_path / "out" / "design_0.csv")
    atom_values = {row[0] for row in ATOMS}
    assert all(float(x) in atom_values for x in design.ravel())


def test_continuous_searches_respect_the_box(tmp_path):
    lsa_path = write_config(
        tmp_path,
        {
            "space": BOX_1D,
            "algorithm": {"name": "lsa", "iters": 30, "sigma": 0.1},
            "prior": {"kind": "scaled-identity", "scale": 1e-4},
            "seeds": [0],
            "output_dir": "out_lsa",
        },
        name="lsa.json",
    )
    exm_path = write_config(
        tmp_path,
        {
            "space": BOX_1D,
            "algorithm": {"name": "exm", "sweeps": 2, "inner_budget": 2},
            "prior": {"kind": "scaled-identity", "scale": 1e-4},
            "seeds": [0],
            "output_dir": "out_exm",
        },
        name="exm.json",
    )
    assert main(["run", str(lsa_path)]) == 0
    assert main(["run", str(exm_path)]) == 0
    for sub in ("out_lsa", "out_exm"):
        design = read_design_csv(tmp_path / sub / "design_0.csv")
        assert np.all(design >= 0.0) and np.all(design <= 1.0)
        rows = read_trace(tmp_path / sub / "trace_0.csv")
        values = [r[1] for r in rows]
        assert all(b <= a for a, b in zip(values, values[1:]))


def test_reference_design_yields_an_efficiency_column(tmp_path):
    basis = monomial_basis(1, 1)
    reference = exhaustive_best_design(ATOMS, basis, 3)
    ref_path = tmp_path / "reference.csv"
    write_design_csv(ref_path, reference)
    path = write_config(tmp_path, {"reference_design": "reference.csv"})
    assert main(["run", str(path)]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    for run in summary["runs"]:
        assert run["efficiency"] is not None
        assert 0.0 < run["efficiency"] <= 1.0 + 1e-9


# ---------------------------------------------------------------------------
# compare


def test_compare_groups_by_config_hash(tmp_path, capsys):
    first = write_config(tmp_path, {"output_dir": "out_a"}, name="a.json")
    second = write_config(
        tmp_path,
        {
            "output_dir": "out_b",
            "algorithm": {"name": "dogs", "iters": 5, "k_prime": 3, "relax_max_iter": 300},
        },
        name="b.json",
    )
    assert main(["run", str(first)]) == 0
    assert main(["run", str(second)]) == 0
    out_csv = tmp_path / "cmp.csv"
    rc = main(
        [
            "compare",
            str(tmp_path / "out_a" / "summary.json"),
            str(tmp_path / "out_b" / "summary.json"),
            "-o",
            str(out_csv),
        ]
    )
    assert rc == 0
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "algorithm,iteration,p05,median,p95"
    labels = {line.split(",")[0] for line in lines[1:]}
    assert len(labels) == 2
    assert all(label.startswith("dogs-") for label in labels)
    by_label = {}
    for line in lines[1:]:
        parts = line.split(",")
        by_label.setdefault(parts[0], []).append(parts)
        p05, p50, p95 = (float(v) for v in parts[2:])
        assert p05 <= p50 <= p95
    counts = sorted(len(rows) for rows in by_label.values())
    assert counts == [4, 6]


def test_compare_rejects_a_non_summary_file(tmp_path, capsys):
    path = tmp_path / "junk.json"
    path.write_text('{"algorithm": "dogs"}')
    assert main(["compare", str(path), "-o", str(tmp_path / "cmp.csv")]) == 2
    assert "summary schema" in capsys.readouterr().err


def test_nearest_rank_percentile_convention():
    decades = list(range(10, 101, 10))
    assert nearest_rank(decades, 5) == 10
    assert nearest_rank(decades, 50) == 50
    assert nearest_rank(decades, 95) == 100
    assert nearest_rank(decades, 100) == 100
    assert nearest_rank([7.0], 5) == 7.0
    assert nearest_rank([7.0], 95) == 7.0
    assert nearest_rank([3.0, 1.0, 2.0], 50) == 2.0
    with pytest.raises(ValueError, match="empty"):
        nearest_rank([], 50)


# ---------------------------------------------------------------------------
# verify


def test_verify_fixture_checks_all_pass():
    for fixture, seed in (("F1", 0), ("random", 1), ("random", 3)):
        checks = verify_checks(fixture, seed)
        failed = [c["name"] for c in checks if not c["passed"]]
        assert failed == [], f"{fixture}/{seed}: {failed}"


def test_verify_subcommand_prints_pass_lines(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out
    assert "FAIL" not in out
    assert "all checks passed" in out


def test_verify_algorithm_through_run(tmp_path):
    path = write_config(
        tmp_path,
        {"algorithm": {"name": "verify", "fixture": "F1"}, "seeds": [0]},
    )
    assert main(["run", str(path)]) == 0
    checks = json.loads((tmp_path / "out" / "verify_0.json").read_text())
    assert checks and all(c["passed"] for c in checks)
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["runs"][0]["checks_passed"] is True
