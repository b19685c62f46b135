"""Scenario-driven command line: simulate, smooth, entropy-scan, classical-limit, verify.

Every command is deterministic given the scenario file and seed: outputs are
written with stable key order and 17-significant-digit floats, so repeated
runs produce byte-identical files.  Exit codes: 0 on success, 1 on a
verification failure, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import sys
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import verify as verify_suite
from .classical import classical_smooth
from .entropy import no_universal_quantifier_demo, sandwich_bound, theorem1_check
from .errors import (
    InvalidExtension,
    NotClassicalLimit,
    RetrosmoothError,
    ScenarioError,
    ZeroProbabilityRecord,
)
from .linalg import entropy_vn, fidelity, purity, trace_norm
from .retrodiction import PRIOR_KINDS, generalized_smooth
from .sampling import random_density, random_extension, random_povm
from .scenario import (
    Scenario,
    demo_scenario,
    dumps_17,
    fmt17,
    matrix_from_json,
    read_trajectories,
    state_to_json,
    write_trajectories,
)
from .smoothers import build_custom, build_prior
from .trajectory import enumerate_records, filter as filter_state, retrofilter, sample_record

_PROB_FLOOR = 1e-12


def _render(record) -> str:
    return "-".join(record)


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k, "")) for k in fieldnames})


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return fmt17(value)
    return str(value)


def _future_table(instrument, rho0, steps, t, cap):
    table: dict[tuple, list] = defaultdict(list)
    for rec, p in enumerate_records(instrument, rho0, steps, cap):
        table[rec[:t]].append((rec[t:], p))
    return dict(sorted(table.items()))


def _prior_for(scenario: Scenario, built, kind: str, past, rho0):
    if kind == "custom":
        if not scenario.custom_prior:
            raise ScenarioError("custom_prior: required when prior kind 'custom' is requested")
        matrix = matrix_from_json(scenario.custom_prior.get("matrix"), "custom_prior.matrix")
        dim_a = int(scenario.custom_prior.get("dim_a", 1))
        prior = build_custom(matrix, (built.dim, dim_a))
        rho_f, _ = filter_state(built.instrument, rho0, past)
        gap = prior.consistency_gap(rho_f)
        if gap > 1e-9:
            raise InvalidExtension(
                f"custom prior marginal deviates from the filtered state by {gap:.3e}"
            )
        return prior
    return build_prior(
        kind,
        rho0=rho0,
        alice_past=past,
        instrument=built.instrument,
        joint=built.joint,
        cap=scenario.cap(),
    )


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(scenario: Scenario, n_trajectories: int, out_dir: Path) -> Path:
    """Sample trajectories and write them as a JSON-lines record file."""
    built = scenario.build()
    rho0 = scenario.rho0(built.dim)
    sampler = built.joint if built.joint is not None else built.instrument
    rng = np.random.default_rng(scenario.seed)
    records = []
    for _ in range(int(n_trajectories)):
        rec, _ = sample_record(sampler, rho0, scenario.steps, rng)
        records.append(rec)
    path = out_dir / f"{scenario.name}_trajectories.jsonl"
    write_trajectories(path, scenario, records, "joint" if built.joint is not None else "alice")
    print(f"wrote {len(records)} trajectories to {path}")
    return path


# ---------------------------------------------------------------------------
# smooth


def _smooth_one(scenario, built, rho0, kind, past, futures, complete: bool):
    """Smoothed states for one (prior kind, past record) work item.

    ``complete`` marks that ``futures`` covers every future record, in which
    case the probability-weighted average is compared to the filtered state.
    """
    out = {"p_past": 0.0, "rows": [], "avg_residual": None, "states": {}, "error": None}
    if complete:
        out["p_past"] = sum(p for _, p in futures)
    else:
        try:
            _, lp = filter_state(built.instrument, rho0, past)
            out["p_past"] = float(np.exp(lp))
        except ZeroProbabilityRecord:
            out["p_past"] = 0.0
    if out["p_past"] <= _PROB_FLOOR:
        out["error"] = "zero-probability past record"
        return out
    rho_f, _ = filter_state(built.instrument, rho0, past)
    try:
        prior = _prior_for(scenario, built, kind, past, rho0)
    except (RetrosmoothError, ScenarioError) as exc:
        out["error"] = str(exc)
        return out
    avg = np.zeros((built.dim, built.dim), dtype=complex)
    for fut, p in futures:
        row = {
            "scenario": scenario.name,
            "prior": kind,
            "past": _render(past),
            "future": _render(fut),
            "probability": p,
            "status": "ok",
        }
        try:
            rho_s = generalized_smooth(prior, retrofilter(built.instrument, fut))
        except ZeroProbabilityRecord:
            row["status"] = "zero-probability"
            out["rows"].append(row)
            continue
        avg += (p / out["p_past"]) * rho_s
        row.update(
            purity=purity(rho_s),
            entropy=entropy_vn(rho_s),
            fidelity_to_filtered=fidelity(rho_s, rho_f),
        )
        out["rows"].append(row)
        out["states"][_render(fut)] = state_to_json(rho_s)
    if complete:
        out["avg_residual"] = trace_norm(avg - rho_f)
    return out


def cmd_smooth(
    scenario: Scenario,
    out_dir: Path,
    *,
    enumerate_futures: bool = False,
    record_path: Path | None = None,
    prior_kinds: tuple[str, ...] | None = None,
    jobs: int = 1,
) -> dict:
    """Smoothed states per prior kind, with averaging residuals when enumerating.

    With ``enumerate_futures`` every record of the scenario's length is
    processed grouped by past prefix; per (prior, past) the future-averaged
    smoothed state is compared to the filtered state (trace norm).  With a
    record file, only the records it contains are processed.
    """
    if enumerate_futures == (record_path is not None):
        raise ScenarioError("smooth: pass exactly one of --enumerate or --record")
    built = scenario.build()
    rho0 = scenario.rho0(built.dim)
    kinds = prior_kinds or scenario.prior_kinds
    t = scenario.smoothing_index

    if enumerate_futures:
        table = _future_table(built.instrument, rho0, scenario.steps, t, scenario.cap())
    else:
        _, file_records = read_trajectories(record_path)
        seen: dict[tuple, dict] = {}
        for rec in file_records:
            alice = tuple(a for a, _ in rec)
            if len(alice) != scenario.steps:
                raise ScenarioError(
                    f"record of length {len(alice)} does not match steps={scenario.steps}"
                )
            if alice in seen:
                continue
            try:
                _, lp = filter_state(built.instrument, rho0, alice)
                seen[alice] = float(np.exp(lp))
            except ZeroProbabilityRecord:
                seen[alice] = 0.0
        table = {}
        for alice in sorted(seen):
            table.setdefault(alice[:t], []).append((alice[t:], seen[alice]))

    items = [(kind, past) for kind in kinds for past in table]

    def worker(item):
        kind, past = item
        return _smooth_one(scenario, built, rho0, kind, past, table[past], enumerate_futures)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(worker, items))
    else:
        outputs = [worker(item) for item in items]

    rows, doc_priors = [], {}
    for (kind, past), out in zip(items, outputs):
        entry = doc_priors.setdefault(kind, {})
        key = _render(past)
        if out["error"] is not None:
            rows.append(
                {
                    "scenario": scenario.name,
                    "prior": kind,
                    "past": key,
                    "future": "",
                    "probability": out["p_past"],
                    "status": out["error"],
                }
            )
            entry[key] = {"error": out["error"], "p_past": out["p_past"]}
            continue
        rows.extend(out["rows"])
        entry[key] = {
            "p_past": out["p_past"],
            "avg_vs_filtered_trace_norm": out["avg_residual"],
            "states": out["states"],
        }

    summary = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "time_index": t,
        "steps": scenario.steps,
        "mode": "enumerate" if enumerate_futures else "records",
        "priors": doc_priors,
    }
    residuals = {
        kind: max(
            (
                e["avg_vs_filtered_trace_norm"]
                for e in doc_priors[kind].values()
                if e.get("avg_vs_filtered_trace_norm") is not None
            ),
            default=None,
        )
        for kind in doc_priors
    }
    summary["max_avg_residual"] = residuals
    if "gw" in doc_priors and "gw-variant" in doc_priors:
        summary["gw_vs_gw_variant_gap"] = _prior_gap(doc_priors["gw"], doc_priors["gw-variant"])

    fields = [
        "scenario",
        "prior",
        "past",
        "future",
        "probability",
        "purity",
        "entropy",
        "fidelity_to_filtered",
        "status",
    ]
    csv_path = out_dir / f"{scenario.name}_smooth.csv"
    _write_csv(csv_path, fields, rows)
    json_path = out_dir / f"{scenario.name}_smooth.json"
    json_path.write_text(dumps_17(summary) + "\n")
    for kind, residual in residuals.items():
        if residual is not None:
            print(f"prior={kind}: max future-averaging residual {residual:.3e}")
    print(f"wrote {csv_path} and {json_path}")
    return summary


def _prior_gap(a: dict, b: dict) -> float:
    """Largest trace distance between two priors' smoothed states on shared records."""
    gap = 0.0
    for past in a:
        if "states" not in a[past] or past not in b or "states" not in b[past]:
            continue
        for fut, state in a[past]["states"].items():
            other = b[past]["states"].get(fut)
            if other is None:
                continue
            ma = np.asarray(state["real"]) + 1j * np.asarray(state["imag"])
            mb = np.asarray(other["real"]) + 1j * np.asarray(other["imag"])
            gap = max(gap, trace_norm(ma - mb))
    return gap


# ---------------------------------------------------------------------------
# entropy scan


def _entropy_scenario_rows(scenario: Scenario) -> list[dict]:
    built = scenario.build()
    rho0 = scenario.rho0(built.dim)
    t = scenario.smoothing_index
    table = _future_table(built.instrument, rho0, scenario.steps, t, scenario.cap())
    rows = []
    for kind in scenario.prior_kinds:
        for past, futs in table.items():
            p_past = sum(p for _, p in futs)
            if p_past <= _PROB_FLOOR:
                continue
            rho_f, _ = filter_state(built.instrument, rho0, past)
            try:
                prior = _prior_for(scenario, built, kind, past, rho0)
            except (RetrosmoothError, ScenarioError) as exc:
                rows.append(
                    {"kind": "prior", "id": kind, "record": _render(past), "detail": str(exc)}
                )
                continue
            probs, entropies = [], []
            for fut, p in futs:
                probs.append(p / p_past)
                if p / p_past <= 1e-14:
                    entropies.append(0.0)
                    continue
                entropies.append(
                    entropy_vn(generalized_smooth(prior, retrofilter(built.instrument, fut)))
                )
            s_bar = float(np.dot(probs, entropies))
            bound = sandwich_bound(rho_f, probs, s_bar)
            rows.append(
                {
                    "kind": "prior",
                    "id": kind,
                    "record": _render(past),
                    "avg_entropy": s_bar,
                    "lower": bound.lower,
                    "upper": bound.upper,
                    "lower_margin": s_bar - bound.lower,
                    "upper_margin": bound.upper - s_bar,
                    "within_bounds": bound.holds,
                }
            )
    return rows


def _theorem1_rows(scenario: Scenario | None, seed: int, jobs: int = 1) -> list[dict]:
    cfg = (scenario.raw.get("theorem1") if scenario else None) or {}
    n = int(cfg.get("n_extensions", 200))
    dims_q = [int(d) for d in cfg.get("dim_q", [2, 3])]
    dims_a = [int(d) for d in cfg.get("dim_a", [2, 3, 4])]
    effect_counts = [int(d) for d in cfg.get("n_effects", [2, 3, 4])]

    def one(i: int) -> dict:
        # one generator per extension, so workers draw identical streams
        rng = np.random.default_rng([seed, i])
        d_q = dims_q[int(rng.integers(0, len(dims_q)))]
        d_a = dims_a[int(rng.integers(0, len(dims_a)))]
        n_eff = effect_counts[int(rng.integers(0, len(effect_counts)))]
        gamma = random_density(d_q, rng)
        ext = build_custom(random_extension(gamma, d_a, rng), (d_q, d_a))
        report = theorem1_check(gamma, ext, random_povm(d_q, n_eff, rng))
        return {
            "kind": "theorem1",
            "id": f"ext-{i:04d}",
            "record": f"dq={d_q};da={d_a};effects={n_eff}",
            "avg_entropy": report.avg_entropy_extension,
            "lower": report.avg_entropy_trivial,
            "upper": report.entropy_marginal,
            "lower_margin": report.lower_margin,
            "upper_margin": report.upper_margin,
            "within_bounds": report.ordering_holds,
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, range(n)))
    return [one(i) for i in range(n)]


def _svb_rows() -> list[dict]:
    demo = no_universal_quantifier_demo()
    rows = []
    for (ext, axis), value in demo.values.items():
        rows.append(
            {
                "kind": "svb",
                "id": f"{ext}-{axis}",
                "record": "",
                "avg_entropy": value,
                "lower": demo.expected[(ext, axis)],
                "upper": demo.expected[(ext, axis)],
                "lower_margin": value - demo.expected[(ext, axis)],
                "upper_margin": demo.expected[(ext, axis)] - value,
                "within_bounds": abs(value - demo.expected[(ext, axis)]) <= 1e-10,
                "detail": "expected-value-columns",
            }
        )
    rows.append(
        {
            "kind": "svb",
            "id": "ordering-reversal",
            "record": "",
            "within_bounds": demo.reversal_holds,
            "detail": f"max_error={demo.max_error:.3e}",
        }
    )
    return rows


def cmd_entropy_scan(
    scenario: Scenario | None,
    out_dir: Path,
    *,
    theorem1: bool = False,
    demo_svb: bool = False,
    seed: int | None = None,
    jobs: int = 1,
) -> list[dict]:
    """Average-entropy rows: per-prior sandwich bounds, extension sweeps, qubit demo."""
    if scenario is None and not (theorem1 or demo_svb):
        raise ScenarioError("entropy-scan: needs a scenario, --theorem1, or --demo-svb")
    rows: list[dict] = []
    if scenario is not None:
        rows.extend(_entropy_scenario_rows(scenario))
    if theorem1:
        rows.extend(_theorem1_rows(scenario, seed if seed is not None else 0, jobs))
    if demo_svb:
        rows.extend(_svb_rows())
    name = scenario.name if scenario is not None else "builtin"
    fields = [
        "kind",
        "id",
        "record",
        "avg_entropy",
        "lower",
        "upper",
        "lower_margin",
        "upper_margin",
        "within_bounds",
        "detail",
    ]
    csv_path = out_dir / f"{name}_entropy.csv"
    _write_csv(csv_path, fields, rows)
    json_path = out_dir / f"{name}_entropy.json"
    json_path.write_text(dumps_17({"rows": rows}) + "\n")
    n_bad = sum(1 for r in rows if r.get("within_bounds") is False)
    print(f"wrote {len(rows)} rows to {csv_path} ({n_bad} outside bounds)")
    return rows


# ---------------------------------------------------------------------------
# classical limit


def cmd_classical_limit(scenario: Scenario, out_dir: Path, tol: float = 1e-9) -> dict:
    """Compare quantum smoothing of a classical chain with forward-backward smoothing.

    Runs every record up to the scenario length and every split time, for the
    record-register-free priors; reports the worst absolute deviation of the
    smoothed diagonals.
    """
    built = scenario.build()
    if built.classical is None:
        raise NotClassicalLimit(
            "scenario is not classical: classical-limit needs system.type == 'classical'"
        )
    rho0 = scenario.rho0(built.dim)
    prior0 = np.diag(rho0).real
    kinds = [k for k in ("pf", "gw-variant") if k in scenario.prior_kinds] or ["pf"]
    worst = {kind: 0.0 for kind in kinds}
    n_records = 0
    for rec, p in enumerate_records(built.instrument, rho0, scenario.steps, scenario.cap()):
        if p <= _PROB_FLOOR:
            continue
        n_records += 1
        for t in range(scenario.steps + 1):
            ps = classical_smooth(built.classical, prior0, rec[:t], rec[t:])
            for kind in kinds:
                prior = build_prior(
                    kind,
                    rho0=rho0,
                    alice_past=rec[:t],
                    instrument=built.instrument,
                    joint=built.joint,
                    cap=scenario.cap(),
                )
                rho_s = generalized_smooth(prior, retrofilter(built.instrument, rec[t:]))
                worst[kind] = max(worst[kind], float(np.abs(np.diag(rho_s).real - ps).max()))
    report = {
        "scenario": scenario.name,
        "steps": scenario.steps,
        "n_records": n_records,
        "tolerance": tol,
        "max_abs_deviation": worst,
        "passed": all(v <= tol for v in worst.values()),
    }
    path = out_dir / f"{scenario.name}_classical_limit.json"
    path.write_text(dumps_17(report) + "\n")
    for kind, v in worst.items():
        print(f"prior={kind}: max |diag(rho_S) - classical| = {v:.3e}")
    print(f"wrote {path}")
    return report


# ---------------------------------------------------------------------------
# verify


def cmd_verify(seed: int = 2024) -> bool:
    """Run the built-in verification suite; returns overall success."""
    results = verify_suite.run_all(seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return ok


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser, *, scenario_required=True):
    parser.add_argument("--scenario", help="path to a scenario JSON file, or 'demo'",
                        required=scenario_required)
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")


def _load_scenario(args) -> Scenario:
    sc = demo_scenario() if args.scenario == "demo" else Scenario.from_file(args.scenario)
    if args.seed is not None:
        sc.seed = int(args.seed)
    return sc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retrosmooth",
        description="Filtering, retrofiltering and retrodictive smoothing of monitored quantum systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample measurement records")
    _add_common(p)
    p.add_argument("--trajectories", type=int, default=None, help="number of trajectories")

    p = sub.add_parser("smooth", help="smoothed states per prior kind")
    _add_common(p)
    p.add_argument("--enumerate", action="store_true", help="enumerate all records")
    p.add_argument("--record", help="trajectory file to smooth")
    p.add_argument("--prior", help="comma-separated prior kinds (default: scenario)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")

    p = sub.add_parser("entropy-scan", help="average-entropy bounds and sweeps")
    _add_common(p, scenario_required=False)
    p.add_argument("--theorem1", action="store_true", help="random-extension bound sweep")
    p.add_argument("--demo-svb", action="store_true", help="include the qubit reversal demo")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for the sweep")

    p = sub.add_parser("classical-limit", help="compare against forward-backward smoothing")
    _add_common(p)

    p = sub.add_parser("verify", help="run the built-in verification suite")
    p.add_argument("--seed", type=int, default=2024)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return 0 if cmd_verify(args.seed) else 1

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "entropy-scan":
            sc = _load_scenario(args) if args.scenario else None
            seed = args.seed if args.seed is not None else (sc.seed if sc else 0)
            cmd_entropy_scan(
                sc,
                out_dir,
                theorem1=args.theorem1,
                demo_svb=args.demo_svb,
                seed=seed,
                jobs=args.jobs,
            )
            return 0

        sc = _load_scenario(args)
        if args.command == "simulate":
            n = args.trajectories if args.trajectories is not None else sc.n_trajectories
            cmd_simulate(sc, n, out_dir)
            return 0
        if args.command == "smooth":
            kinds = tuple(args.prior.split(",")) if args.prior else None
            if kinds:
                for k in kinds:
                    if k not in PRIOR_KINDS:
                        raise ScenarioError(f"--prior: unknown kind {k!r}")
            cmd_smooth(
                sc,
                out_dir,
                enumerate_futures=args.enumerate,
                record_path=Path(args.record) if args.record else None,
                prior_kinds=kinds,
                jobs=args.jobs,
            )
            return 0
        if args.command == "classical-limit":
            report = cmd_classical_limit(sc, out_dir)
            return 0 if report["passed"] else 1
    except (ScenarioError, NotClassicalLimit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RetrosmoothError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
