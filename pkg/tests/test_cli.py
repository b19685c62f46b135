import csv
import json

import numpy as np
import pytest

from retrosmooth import verify
from retrosmooth.cli import (
    cmd_classical_limit,
    cmd_entropy_scan,
    cmd_simulate,
    cmd_smooth,
    main,
)
from retrosmooth.errors import NotClassicalLimit, ScenarioError
from retrosmooth.scenario import (
    Scenario,
    classical_demo_scenario,
    demo_scenario,
    read_trajectories,
)
from retrosmooth.trajectory import ConditionalOp, Instrument, enumerate_records

LN2 = float(np.log(2.0))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSimulate:
    def test_zero_trajectories_header_only(self, tmp_path):
        path = cmd_simulate(demo_scenario(), 0, tmp_path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["n_trajectories"] == 0

    def test_deterministic_given_seed(self, tmp_path):
        sc = demo_scenario()
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        a = cmd_simulate(sc, 20, tmp_path / "a")
        b = cmd_simulate(sc, 20, tmp_path / "b")
        assert a.read_bytes() == b.read_bytes()

    def test_frequencies_match_enumeration(self, tmp_path):
        sc = demo_scenario()
        built = sc.build()
        rho0 = sc.rho0(built.dim)
        n = 4000
        path = cmd_simulate(sc, n, tmp_path)
        _, records = read_trajectories(path)
        counts = {}
        for rec in records:
            key = tuple((a, b) for a, b in rec)
            counts[key] = counts.get(key, 0) + 1
        for rec, p in enumerate_records(built.joint, rho0, sc.steps):
            sigma = np.sqrt(p * (1 - p) / n)
            assert abs(counts.get(rec, 0) / n - p) <= 4 * sigma + 2e-3


class TestSmooth:
    def test_enumerate_clhs_reproduces_filtered(self, tmp_path):
        summary = cmd_smooth(demo_scenario(), tmp_path, enumerate_futures=True)
        assert summary["max_avg_residual"]["clhs"] < 1e-10
        # clhs smoothed states all carry maximal fidelity to the filtered state
        for row in read_csv(tmp_path / "driven-damped-qubit_smooth.csv"):
            if row["prior"] == "clhs" and row["status"] == "ok":
                assert abs(float(row["fidelity_to_filtered"]) - 1.0) < 1e-8

    def test_enumerate_every_prior_averages_back(self, tmp_path):
        summary = cmd_smooth(demo_scenario(), tmp_path, enumerate_futures=True)
        for kind, residual in summary["max_avg_residual"].items():
            assert residual < 1e-8, kind

    def test_zero_probability_past_surfaced_and_run_continues(self, tmp_path):
        summary = cmd_smooth(demo_scenario(), tmp_path, enumerate_futures=True)
        entry = summary["priors"]["pf"]["1-1"]
        assert "error" in entry
        assert summary["priors"]["pf"]["0-0"]["states"]

    def test_gw_gap_reported_for_mixed_initial_state(self, tmp_path):
        summary = cmd_smooth(demo_scenario(), tmp_path, enumerate_futures=True)
        assert summary["gw_vs_gw_variant_gap"] > 1e-3

    def test_gw_matches_gw_variant_for_pure_initial_state(self, tmp_path):
        sc = demo_scenario()
        sc.rho0_spec = "ground"
        summary = cmd_smooth(sc, tmp_path, enumerate_futures=True)
        assert summary["gw_vs_gw_variant_gap"] <= 1e-9

    def test_record_mode(self, tmp_path):
        sc = demo_scenario()
        path = cmd_simulate(sc, 10, tmp_path)
        summary = cmd_smooth(sc, tmp_path, record_path=path)
        assert summary["mode"] == "records"
        rows = read_csv(tmp_path / "driven-damped-qubit_smooth.csv")
        assert rows and all(r["status"] == "ok" for r in rows)

    def test_jobs_do_not_change_output(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        cmd_smooth(demo_scenario(), tmp_path / "a", enumerate_futures=True, jobs=1)
        cmd_smooth(demo_scenario(), tmp_path / "b", enumerate_futures=True, jobs=4)
        name = "driven-damped-qubit_smooth.csv"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_requires_exactly_one_mode(self, tmp_path):
        with pytest.raises(ScenarioError):
            cmd_smooth(demo_scenario(), tmp_path)

    def test_states_round_trip_as_density_operators(self, tmp_path):
        from retrosmooth.linalg import as_density

        cmd_smooth(demo_scenario(), tmp_path, enumerate_futures=True)
        doc = json.loads((tmp_path / "driven-damped-qubit_smooth.json").read_text())
        n = 0
        for entry in doc["priors"]["gw"].values():
            for state in entry.get("states", {}).values():
                m = np.asarray(state["real"]) + 1j * np.asarray(state["imag"])
                as_density(m)
                n += 1
        assert n > 0


class TestEntropyScan:
    def test_demo_svb_values(self, tmp_path):
        rows = cmd_entropy_scan(None, tmp_path, demo_svb=True)
        values = {r["id"]: r.get("avg_entropy") for r in rows if r["id"] != "ordering-reversal"}
        assert abs(values["gamma1-Z"] - 0.0) <= 1e-10
        assert abs(values["gamma1-X"] - LN2) <= 1e-10
        assert abs(values["gamma2-Z"] - LN2) <= 1e-10
        assert abs(values["gamma2-X"] - 0.0) <= 1e-10
        assert all(r["within_bounds"] for r in rows)

    def test_scenario_rows_recover_bounds(self, tmp_path):
        rows = cmd_entropy_scan(demo_scenario(), tmp_path)
        assert all(r["within_bounds"] for r in rows)
        by_past = {}
        for r in rows:
            by_past.setdefault(r["record"], {})[r["id"]] = r
        for past, priors in by_past.items():
            # purification of the filtered state saturates the upper bound
            clhs = priors["clhs"]
            assert abs(clhs["avg_entropy"] - clhs["upper"]) <= 1e-10
            # the trivial prior minimizes the average entropy
            for kind, row in priors.items():
                assert row["avg_entropy"] >= priors["pf"]["avg_entropy"] - 1e-9

    def test_theorem1_sweep(self, tmp_path):
        sc = demo_scenario()
        sc.raw["theorem1"] = {"n_extensions": 25}
        rows = [r for r in cmd_entropy_scan(sc, tmp_path, theorem1=True, seed=5) if r["kind"] == "theorem1"]
        assert len(rows) == 25
        assert all(r["within_bounds"] for r in rows)

    def test_needs_some_mode(self, tmp_path):
        with pytest.raises(ScenarioError):
            cmd_entropy_scan(None, tmp_path)


class TestClassicalLimit:
    def test_two_and_three_state(self, tmp_path):
        for n in (2, 3):
            report = cmd_classical_limit(classical_demo_scenario(n, steps=4), tmp_path)
            assert report["passed"]
            assert max(report["max_abs_deviation"].values()) <= 1e-9

    def test_identity_dynamics_keeps_prior(self, tmp_path):
        # static chain with a noninformative readout: both stacks return the prior
        sc = Scenario.from_dict(
            {
                "name": "static-chain",
                "system": {
                    "type": "classical",
                    "transition": [[1.0, 0.0], [0.0, 1.0]],
                    "likelihood": {"0": [0.5, 0.5], "1": [0.5, 0.5]},
                },
                "rho0": [0.3, 0.7],
                "steps": 3,
                "smoothing_time_index": 1,
                "prior_kinds": ["pf", "gw-variant"],
            }
        )
        report = cmd_classical_limit(sc, tmp_path)
        assert report["passed"]
        built = sc.build()
        rho0 = sc.rho0(built.dim)
        from retrosmooth.retrodiction import generalized_smooth
        from retrosmooth.smoothers import build_prior
        from retrosmooth.trajectory import retrofilter

        prior = build_prior(
            "pf", rho0=rho0, alice_past=("0",), instrument=built.instrument, joint=built.joint
        )
        rho_s = generalized_smooth(prior, retrofilter(built.instrument, ("1", "0")))
        np.testing.assert_allclose(np.diag(rho_s).real, [0.3, 0.7], atol=1e-12)

    def test_delta_prior_noiseless_readout_stays_delta(self, tmp_path):
        sc = Scenario.from_dict(
            {
                "name": "delta-chain",
                "system": {
                    "type": "classical",
                    "transition": [[1.0, 0.0], [0.0, 1.0]],
                    "likelihood": {"0": [1.0, 0.0], "1": [0.0, 1.0]},
                },
                "rho0": [0.0, 1.0],
                "steps": 3,
                "smoothing_time_index": 2,
                "prior_kinds": ["pf"],
            }
        )
        report = cmd_classical_limit(sc, tmp_path)
        assert report["passed"]

    def test_rejects_non_classical(self, tmp_path):
        with pytest.raises(NotClassicalLimit):
            cmd_classical_limit(demo_scenario(), tmp_path)


class TestVerifySuite:
    def test_all_checks_pass(self):
        results = verify.run_all(seed=11)
        assert all(r.passed for r in results)

    def test_injected_completeness_defect_fails_named_check(self):
        ground = np.diag([1.0, 0.0]).astype(complex)
        excited = np.diag([0.0, 1.0]).astype(complex)
        broken = Instrument(
            {"0": ConditionalOp((np.sqrt(1 - 1e-3) * ground,)), "1": ConditionalOp((excited,))},
            check=False,
        )
        result = verify.check_instrument("injected-defect", broken)
        assert not result.passed
        assert result.residual > 1e-4
        assert "injected-defect" in result.name


class TestMainEntry:
    def test_verify_exit_zero(self, capsys):
        assert main(["verify", "--seed", "3"]) == 0
        out = capsys.readouterr().out
        assert "14/14 checks passed" in out

    def test_missing_scenario_is_config_error(self, tmp_path, capsys):
        code = main(["smooth", "--scenario", str(tmp_path / "nope.json"), "--enumerate"])
        assert code == 2

    def test_malformed_scenario_is_config_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"steps": "many"}')
        assert main(["smooth", "--scenario", str(p), "--enumerate", "--out", str(tmp_path)]) == 2

    def test_classical_limit_on_quantum_scenario_is_config_error(self, tmp_path):
        code = main(
            ["classical-limit", "--scenario", "demo", "--out", str(tmp_path)]
        )
        assert code == 2

    def test_cap_env_var_is_enforced(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("RETROSMOOTH_CAP", "4")
        code = main(["smooth", "--scenario", "demo", "--enumerate", "--out", str(tmp_path)])
        assert code == 1

    def test_full_pipeline_from_files(self, tmp_path):
        out = str(tmp_path)
        scenario_path = "scenarios/driven-damped-qubit.json"
        assert main(["simulate", "--scenario", scenario_path, "--trajectories", "3", "--out", out]) == 0
        record = str(tmp_path / "driven-damped-qubit_trajectories.jsonl")
        assert main(["smooth", "--scenario", scenario_path, "--record", record, "--out", out]) == 0
        assert main(["entropy-scan", "--scenario", scenario_path, "--demo-svb", "--out", out]) == 0
        assert main(["classical-limit", "--scenario", "scenarios/classical-2state.json", "--out", out]) == 0
