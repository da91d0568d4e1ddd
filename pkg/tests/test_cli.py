"""End-to-end tests: config validation, batch runs, convergence scans and the command-line entry point."""
import dataclasses
import json

import numpy as np
import pytest

from errors import ConfigError, DegeneracyError
from models import Method
from operators import save_matrix
from problem_config import METHOD_PAIRS, load_config, parse_config
from results_writer import CSV_COLUMNS, sidecar_path
from run import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from runner import FLOOR, required_breaches, run, scan_convergence, verify, verify_breaches


def two_level_doc(config_dir, **overrides):
    doc = {
        "problem": "custom",
        "custom": {
            "h0": str(config_dir / "matrices" / "two_level_h0.json"),
            "v": str(config_dir / "matrices" / "two_level_v.json"),
        },
        "lambda_values": [0.02, 0.01],
        "order": 1,
        "times": [1.0],
        "initial_state": {"level": 0},
        "methods": ["block", "exact"],
    }
    doc.update(overrides)
    return doc


def oscillator_doc(**overrides):
    doc = {
        "problem": "oscillator",
        "oscillator": {"omega": 1.0, "dimension": 16},
        "lambda_values": [0.02, 0.01],
        "order": 1,
        "times": [1.0],
        "methods": ["block", "exact"],
    }
    doc.update(overrides)
    return doc


def state_errors(rows, a="block"):
    return [r.value for r in rows if r.method_a == a and r.method_b == "exact" and r.metric == "state_error"]


class TestConfigValidation:
    @pytest.mark.parametrize("name", ["oscillator.yaml", "two_level.yaml", "degenerate.yaml"])
    def test_shipped_configs_parse(self, config_dir, name):
        config = load_config(config_dir / name)
        assert config.source.endswith(name)
        assert config.order >= 1

    def test_missing_problem(self, config_dir):
        doc = two_level_doc(config_dir)
        del doc["problem"]
        with pytest.raises(ConfigError) as info:
            parse_config(doc)
        assert info.value.field == "problem"

    def test_lambda_out_of_range(self, config_dir):
        with pytest.raises(ConfigError) as info:
            parse_config(two_level_doc(config_dir, lambda_values=[1.5, 0.1]))
        assert info.value.field == "lambda_values[0]"

    def test_quadrature_too_coarse(self, config_dir):
        with pytest.raises(ConfigError) as info:
            parse_config(two_level_doc(config_dir, tolerances={"panels": 1, "nodes": 2}))
        assert info.value.field == "tolerances.panels"

    def test_unknown_method(self, config_dir):
        with pytest.raises(ConfigError) as info:
            parse_config(two_level_doc(config_dir, methods=["magnus"]))
        assert info.value.field == "methods[0]"

    def test_unknown_field(self, config_dir):
        with pytest.raises(ConfigError) as info:
            parse_config(two_level_doc(config_dir, colour="blue"))
        assert info.value.field == "colour"

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.yaml")

    def test_non_hermitian_perturbation(self, config_dir, tmp_path):
        save_matrix(tmp_path / "v.json", np.array([[0.0, 1.0], [0.0, 0.0]]))
        doc = two_level_doc(config_dir)
        doc["custom"]["v"] = str(tmp_path / "v.json")
        with pytest.raises(ConfigError) as info:
            parse_config(doc)
        assert info.value.field == "custom.v"

    def test_edge_level_rejected_for_oscillator(self):
        with pytest.raises(ConfigError) as info:
            parse_config(oscillator_doc(initial_state={"level": 11}))
        assert info.value.field == "initial_state.level"

    def test_relative_matrix_paths(self, config_dir, tmp_path):
        save_matrix(tmp_path / "h0.json", np.diag([0.0, 1.0]))
        save_matrix(tmp_path / "v.json", np.array([[0.0, 1.0], [1.0, 0.0]]))
        doc = two_level_doc(config_dir, custom={"h0": "h0.json", "v": "v.json"})
        assert parse_config(doc, base_dir=tmp_path).dimension == 2


class TestRun:
    def test_zero_lambda_reproduces_exact(self):
        rows = run(parse_config(oscillator_doc(lambda_values=[0.0], times=[0.0, 1.0, 3.0])))
        assert max(state_errors(rows)) <= 1e-10

    def test_first_order_error_is_quadratic(self):
        errors = state_errors(run(parse_config(oscillator_doc())))
        assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.25)

    def test_two_level_block_matches_dyson(self, config_dir):
        rows = run(load_config(config_dir / "two_level.yaml"))
        residuals = [r.value for r in rows if r.metric == "identity_residual"]
        assert residuals and max(residuals) <= 1e-7

    def test_rows_follow_grid_and_pair_order(self, config_dir):
        config = load_config(config_dir / "two_level.yaml")
        rows = run(config)
        cell_keys = [(config.lambda_values.index(r.lam), config.times.index(r.t)) for r in rows]
        assert cell_keys == sorted(cell_keys)
        pair_rank = {f"{a.value}-{b.value}": i for i, (a, b) in enumerate(METHOD_PAIRS)}
        first_cell = [r for r in rows if (r.lam, r.t) == (config.lambda_values[0], config.times[0])]
        ranks = [pair_rank[f"{r.method_a}-{r.method_b}"] for r in first_cell if r.method_b != "none"]
        assert ranks == sorted(ranks)
        assert sum(r.metric == "energy_error" for r in rows) == len(config.lambda_values)

    def test_energy_rows_carry_first_time(self, config_dir):
        config = parse_config(two_level_doc(config_dir, methods=["block", "rspt", "exact"], times=[0.5, 1.0]))
        rows = run(config)
        energy = [r for r in rows if r.metric == "energy_error"]
        assert [r.t for r in energy] == [0.5, 0.5]
        cell_keys = [(config.lambda_values.index(r.lam), config.times.index(r.t)) for r in rows]
        assert cell_keys == sorted(cell_keys)

    def test_parallel_rows_match_serial(self, config_dir):
        config = load_config(config_dir / "two_level.yaml")
        serial = run(dataclasses.replace(config, workers=1))
        parallel = run(dataclasses.replace(config, workers=4))
        assert [(r.lam, r.t, r.metric, r.method_a, r.method_b) for r in parallel] == [
            (r.lam, r.t, r.metric, r.method_a, r.method_b) for r in serial
        ]

    def test_degenerate_level_rejects_rs(self, config_dir):
        config = load_config(config_dir / "degenerate.yaml")
        with pytest.raises(DegeneracyError):
            run(dataclasses.replace(config, methods=(Method.BLOCK, Method.RSPT, Method.EXACT)))

    def test_required_thresholds(self, config_dir):
        config = parse_config(two_level_doc(config_dir, required={"block-exact": 0.0}))
        assert len(required_breaches(config, run(config))) == 2


class TestScan:
    def test_oscillator_slopes(self, config_dir):
        config = dataclasses.replace(load_config(config_dir / "oscillator.yaml"), methods=(Method.BLOCK, Method.EXACT))
        slopes = {r.order: r.value for r in scan_convergence(config) if r.metric == "slope"}
        assert slopes[1] == pytest.approx(2.0, abs=0.2)
        assert slopes[2] == pytest.approx(3.0, abs=0.3)

    def test_degenerate_block_method_still_converges(self, config_dir):
        rows = scan_convergence(load_config(config_dir / "degenerate.yaml"))
        slopes = [r.value for r in rows if r.metric == "slope"]
        assert slopes == [pytest.approx(2.0, abs=0.3)]

    def test_vanishing_perturbation_gives_floor(self, config_dir, tmp_path):
        save_matrix(tmp_path / "v.json", np.zeros((2, 2)))
        doc = two_level_doc(config_dir)
        doc["custom"]["v"] = str(tmp_path / "v.json")
        rows = scan_convergence(parse_config(doc))
        assert [r.value for r in rows if r.metric == "slope"] == [FLOOR]

    def test_needs_two_lambda_magnitudes(self, config_dir):
        with pytest.raises(ConfigError) as info:
            scan_convergence(parse_config(two_level_doc(config_dir, lambda_values=[0.02, -0.02, 0.0])))
        assert info.value.field == "lambda_values"


class TestVerify:
    def test_two_level_has_no_breaches(self, config_dir):
        rows = verify(load_config(config_dir / "two_level.yaml"))
        assert {r.metric for r in rows} >= {"verify_power_identity", "verify_block_vs_dyson", "verify_rs_second_order"}
        assert verify_breaches(rows) == []

    def test_degenerate_skips_rs_checks(self, config_dir):
        rows = verify(load_config(config_dir / "degenerate.yaml"))
        assert not any(r.metric.startswith("verify_rs") for r in rows)


class TestMain:
    @pytest.mark.parametrize("name", ["two_level.yaml", "oscillator.yaml"])
    def test_output_is_deterministic(self, config_dir, tmp_path, name):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["run", str(config_dir / name), "--out", str(first)]) == EXIT_OK
        assert main(["run", str(config_dir / name), "--out", str(second)]) == EXIT_OK
        assert first.read_bytes() == second.read_bytes()
        assert first.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)

    def test_sidecar_records_resolved_config(self, config_dir, tmp_path):
        out = tmp_path / "scan.csv"
        assert main(["scan", str(config_dir / "degenerate.yaml"), "--out", str(out)]) == EXIT_OK
        document = json.loads(sidecar_path(out).read_text())
        assert document["command"] == "scan"
        assert document["config"]["order"] == 1

    def test_stdout_table(self, config_dir, capsys):
        assert main(["run", str(config_dir / "degenerate.yaml")]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "lambda,t,order,method_a,method_b,metric,value"
        assert len(lines) == 1 + 2 * 3

    def test_invalid_input_exit_code(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.yaml")]) == EXIT_INVALID

    def test_breach_exit_code(self, config_dir, tmp_path):
        path = tmp_path / "strict.yaml"
        doc = two_level_doc(config_dir, required={"block-exact": 0.0})
        path.write_text(json.dumps(doc))
        assert main(["run", str(path), "--out", str(tmp_path / "out.csv")]) == EXIT_NUMERICAL

    def test_malformed_matrix_exit_code(self, config_dir, tmp_path):
        (tmp_path / "h0.json").write_text(json.dumps({"rows": 2, "cols": 2, "entries": [["one", 0], [0, 0], [0, 0], [1, 0]]}))
        doc = two_level_doc(config_dir)
        doc["custom"]["h0"] = str(tmp_path / "h0.json")
        path = tmp_path / "malformed.yaml"
        path.write_text(json.dumps(doc))
        assert main(["run", str(path), "--out", str(tmp_path / "out.csv")]) == EXIT_INVALID
