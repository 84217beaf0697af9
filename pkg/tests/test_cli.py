import json

import numpy as np
import pytest

from fracwave import ConfigurationError
from fracwave.cli import (build_problem, cmd_converge, cmd_run, cmd_sweep_eps,
                          main, parse_config)
from fracwave.diagnostics import oracle_recurrence


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def read_csv(path):
    lines = [l for l in path.read_text().strip().splitlines()
             if not l.startswith("#")]
    header = lines[0].split(",")
    rows = [l.split(",") for l in lines[1:]]
    return header, rows


def read_footer(path):
    return {l[2:].split("=")[0]: float(l.split("=")[1])
            for l in path.read_text().strip().splitlines() if l.startswith("#")}


class TestParseConfig:
    def test_preset_expands_to_full_config(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, {"preset": "gl_interface"}))
        assert cfg.geometry == "radial"
        assert cfg.n_cells == 400
        assert cfg.n_steps == 900
        assert cfg.gl_eps == 0.05
        assert cfg.u0_r0 == 0.4
        assert cfg.dirichlet_right == -1.0
        assert cfg.dirichlet_left is None

    def test_file_keys_override_preset(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path, {"preset": "gl_interface", "n_cells": 40, "n_steps": 50}))
        assert cfg.n_cells == 40
        assert cfg.n_steps == 50
        assert cfg.gl_eps == 0.05

    def test_unknown_key_named_in_error(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode", "tolerence": 1e-9})
        with pytest.raises(ConfigurationError, match="tolerence"):
            parse_config(path)

    def test_invariant_violation_rejected(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode", "n_steps": 1})
        with pytest.raises(ConfigurationError, match="n_steps"):
            parse_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            parse_config(tmp_path / "nope.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError, match="malformed"):
            parse_config(path)

    def test_wrong_types_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError, match="n_cells"):
            parse_config(write_config(tmp_path, {"n_cells": "many"}))
        with pytest.raises(ConfigurationError, match="'T'"):
            parse_config(write_config(tmp_path, {"T": "long"}, "t.json"))

    def test_effective_config_round_trips(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, {"preset": "obstacle_wave"}))
        out = tmp_path / "out"
        cmd_run(cfg, out)  # writes effective_config.json
        cfg2 = parse_config(out / "effective_config.json")
        assert cfg2 == cfg


class TestBuildProblem:
    def test_mode_combination(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode", "n_cells": 16,
                                       "u0_modes": "1:1.0,3:0.3"})
        scheme = build_problem(parse_config(path))
        expected = scheme.ops.Phi[:, 0] + 0.3 * scheme.ops.Phi[:, 2]
        assert np.allclose(scheme.u0, expected)

    def test_malformed_modes_named(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode",
                                       "u0_modes": "1;1.0"})
        with pytest.raises(ConfigurationError, match="u0_modes"):
            build_problem(parse_config(path))

    def test_mode_index_out_of_range(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode", "n_cells": 4,
                                       "u0_modes": "99:1.0"})
        with pytest.raises(ConfigurationError, match="out of range"):
            build_problem(parse_config(path))

    def test_quadratic_potential_and_sine_data(self, tmp_path):
        path = write_config(tmp_path, {
            "geometry": "line", "n_cells": 16, "potential": "quadratic",
            "quadratic_c": 2.0, "u0_kind": "sine", "u0_amp": 0.5,
            "n_steps": 8, "T": 0.5})
        scheme = build_problem(parse_config(path))
        assert scheme.potential.kind == "quadratic"
        assert scheme.potential.c == 2.0
        x = scheme.ops.mesh.nodes[scheme.ops.mesh.free]
        assert np.allclose(scheme.u0, 0.5 * np.sin(np.pi * x))

    def test_tanh_front_needs_width_source(self, tmp_path):
        path = write_config(tmp_path, {
            "geometry": "line", "n_cells": 16, "u0_kind": "tanh_front",
            "u0_r0": 0.4})
        with pytest.raises(ConfigurationError, match="u0_width"):
            parse_config(path)


class TestCmdRun:
    def test_zero_run_constant_energy_column(self, tmp_path):
        path = write_config(tmp_path, {
            "preset": "eigenmode", "u0_kind": "zero", "n_steps": 8, "T": 0.5,
            "n_cells": 16})
        written = cmd_run(parse_config(path), tmp_path / "out")
        header, rows = read_csv(written["energy"])
        assert header == ["step", "t", "kinetic", "fractional", "potential",
                          "total", "residual", "pg_iters"]
        totals = {row[5] for row in rows}
        assert totals == {"0"}

    def test_eigenmode_energies_match_recurrence(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode", "n_steps": 64,
                                       "n_cells": 32})
        cfg = parse_config(path)
        written = cmd_run(cfg, tmp_path / "out")
        scheme = build_problem(cfg)
        _, rows = read_csv(written["energy"])
        lam = scheme.ops.lam[0]
        tau = cfg.T / cfg.n_steps
        a = oracle_recurrence(lam, 1.0, 1.0, tau, cfg.n_steps + 1)
        # a coefficient deviation of 10*tol propagates through the quadratic
        # energy with a factor of order (1 + lam)
        tol = max(float(r[6]) for r in rows[1:]) + 1e-12
        budget = 10 * tol * (1 + lam)
        for i, row in enumerate(rows):
            vi = (a[i + 1] - a[i]) / tau
            expected = 0.5 * vi**2 + 0.5 * lam * a[i + 1]**2
            assert abs(float(row[5]) - expected) <= budget * (1 + expected)

    def test_snapshot_layout(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode", "n_steps": 25,
                                       "n_cells": 8, "snapshot_stride": 10})
        written = cmd_run(parse_config(path), tmp_path / "out")
        header, rows = read_csv(written["snapshots"])
        assert header[0] == "t"
        assert [float(x) for x in header[1:]] == pytest.approx(
            list(np.linspace(0, 1, 9)))
        # steps 0, 10, 20 and the final step 25
        assert [float(r[0]) for r in rows] == pytest.approx(
            [0.0, 0.4, 0.8, 1.0])
        assert all(len(r) == 10 for r in rows)
        # Dirichlet columns carry the boundary data
        assert {r[1] for r in rows} == {"0"}

    def test_interface_csv_for_radial_front(self, tmp_path):
        path = write_config(tmp_path, {
            "preset": "gl_interface", "gl_eps": 0.1, "n_cells": 20,
            "n_steps": 40, "T": 0.04, "snapshot_stride": 10})
        written = cmd_run(parse_config(path), tmp_path / "out")
        header, rows = read_csv(written["interface"])
        assert header == ["t", "measured_radius", "reference_radius", "rel_error"]
        assert float(rows[0][2]) == pytest.approx(0.4)
        assert all(float(r[3]) < 0.5 for r in rows)

    def test_byte_identical_reruns(self, tmp_path):
        path = write_config(tmp_path, {"preset": "obstacle_wave", "n_steps": 16,
                                       "n_cells": 16, "T": 0.25})
        cfg = parse_config(path)
        a = cmd_run(cfg, tmp_path / "a")
        b = cmd_run(cfg, tmp_path / "b")
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()


class TestCmdConverge:
    def test_eigenmode_slope_and_footer(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode", "n_cells": 32})
        written = cmd_converge(parse_config(path), [64, 128, 256], tmp_path / "out")
        header, rows = read_csv(written["convergence"])
        assert header == ["n", "tau", "error_T", "max_drift"]
        assert [int(r[0]) for r in rows] == [64, 128, 256]
        footer = read_footer(written["convergence"])
        assert footer["error_slope"] >= 0.8
        assert footer["c_drift"] >= 0.0
        assert written["config"].is_file()  # provenance next to outputs

    def test_zero_data_zero_errors(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode", "u0_kind": "zero",
                                       "n_cells": 8})
        written = cmd_converge(parse_config(path), [8, 16, 32], tmp_path / "out")
        _, rows = read_csv(written["convergence"])
        assert {r[2] for r in rows} == {"0"}

    def test_obstacle_drift_rows_bounded_by_echoed_constant(self, tmp_path):
        # constrained runs skip the reference comparison (error column nan)
        # but the drift column still obeys the constant fitted at the finest n
        path = write_config(tmp_path, {"preset": "obstacle_wave", "n_cells": 32,
                                       "T": 0.5})
        written = cmd_converge(parse_config(path), [32, 64, 128], tmp_path / "out")
        _, rows = read_csv(written["convergence"])
        c = read_footer(written["convergence"])["c_drift"]
        for r in rows:
            assert r[2] == "nan"
            assert float(r[3]) <= c * float(r[1])

    def test_unconstrained_drift_rows_bounded(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode", "n_cells": 32,
                                       "T": 0.5})
        written = cmd_converge(parse_config(path), [32, 64, 128], tmp_path / "out")
        _, rows = read_csv(written["convergence"])
        c = read_footer(written["convergence"])["c_drift"]
        for r in rows:
            assert float(r[3]) <= c * float(r[1])


class TestCmdSweep:
    def test_single_eps_matches_run_accounting(self, tmp_path):
        path = write_config(tmp_path, {
            "preset": "gl_interface", "T": 0.02, "n_steps": 10})
        written = cmd_sweep_eps(parse_config(path), [0.1], tmp_path / "out")
        header, rows = read_csv(written["sweep"])
        assert header == ["eps", "scaled_energy_0", "modica_mortola", "final_radius"]
        assert len(rows) == 1
        # h = eps/2 resolution rule applied: 20 cells on [0, 1]
        assert float(rows[0][1]) > 0
        assert 0 < float(rows[0][3]) < 1
        assert written["config"].is_file()  # provenance next to outputs

    def test_halving_sequence_band(self, tmp_path):
        path = write_config(tmp_path, {
            "preset": "gl_interface", "T": 0.05, "n_steps": 25})
        written = cmd_sweep_eps(parse_config(path), [0.1, 0.05], tmp_path / "out")
        _, rows = read_csv(written["sweep"])
        scaled = [float(r[1]) for r in rows]
        assert max(scaled) / min(scaled) <= 4.0

    def test_requires_scaled_double_well(self, tmp_path):
        path = write_config(tmp_path, {"preset": "eigenmode"})
        with pytest.raises(ConfigurationError):
            cmd_sweep_eps(parse_config(path), [0.1], tmp_path / "out")


class TestMainExitCodes:
    def test_ok(self, tmp_path, capsys):
        path = write_config(tmp_path, {"preset": "eigenmode", "n_steps": 8,
                                       "n_cells": 8, "T": 0.25})
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 0

    def test_config_error_is_2(self, tmp_path, capsys):
        path = write_config(tmp_path, {"preset": "eigenmode", "tolerence": 1.0})
        assert main(["run", "--config", str(path)]) == 2
        assert "tolerence" in capsys.readouterr().err

    def test_missing_file_is_2(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2

    def test_solver_failure_is_3(self, tmp_path, capsys):
        path = write_config(tmp_path, {"preset": "eigenmode", "n_steps": 8,
                                       "n_cells": 8, "max_iter": 1,
                                       "precondition": "off"})
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 3
        assert "step 1" in capsys.readouterr().err

    def test_bad_n_list_is_2(self, tmp_path, capsys):
        path = write_config(tmp_path, {"preset": "eigenmode"})
        assert main(["converge", "--config", str(path), "--n-list", "a,b"]) == 2

    def test_blowup_is_4(self, tmp_path, capsys):
        path = write_config(tmp_path, {
            "geometry": "line", "n_cells": 8, "n_steps": 8, "T": 0.5,
            "potential": "double_well", "u0_kind": "sine", "u0_amp": 1e200})
        with np.errstate(all="ignore"):
            code = main(["run", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 4
        assert "blowup" in capsys.readouterr().err

    def test_under_resolved_warning(self, tmp_path, capsys):
        path = write_config(tmp_path, {
            "preset": "gl_interface", "n_cells": 5, "n_steps": 4, "T": 0.01})
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
        err = capsys.readouterr().err
        assert "under-resolved" in err and "h <= eps/2" in err
