"""Built-in verification suite: smoothing desiderata and module invariants.

Each check runs on built-in scenarios or seeded random instances and reports
its worst residual next to the tolerance it was held to.  The CLI ``verify``
command prints one line per check and fails the process if any check fails.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import sampling
from .classical import classical_smooth
from .entropy import (
    ExtensionScenario,
    lambda_apply,
    lambda_choi,
    lambda_map,
    no_universal_quantifier_demo,
    sandwich_bound,
    smoothed_outcome_states,
    support_basis,
    theorem1_check,
)
from .errors import ZeroProbabilityRecord
from .linalg import entropy_vn, partial_trace, psd_sqrt, purify, trace_norm
from .retrodiction import bob_posterior, generalized_smooth
from .scenario import Scenario, classical_demo_scenario, demo_scenario
from .smoothers import branch_mixture_smooth, build_custom, build_prior
from .trajectory import (
    Instrument,
    alice_marginal,
    enumerate_records,
    filter as filter_state,
    retrofilter,
)

PRIOR_CYCLE = ("pf", "gw", "gw-variant", "pf-variant", "clhs")
_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{status}  {self.name}  residual={self.residual:.3e}  tol={self.tolerance:.0e}{extra}"


def _future_table(instrument, rho0, steps, t, cap):
    table = defaultdict(list)
    for rec, p in enumerate_records(instrument, rho0, steps, cap):
        table[rec[:t]].append((rec[t:], p))
    return table


def check_linalg(seed: int = 0) -> CheckResult:
    """Spectral-function invariants on seeded random matrices."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d in (2, 3, 4, 8):
        for _ in range(25):
            m = sampling.random_density(d, rng) * rng.uniform(0.2, 2.0)
            s = psd_sqrt(m)
            worst = max(worst, float(np.abs(s @ s - m).max()))
    for _ in range(20):
        rho = sampling.random_density(3, rng)
        psi = purify(rho)
        rank = psi.size // 3
        marg = partial_trace(np.outer(psi, psi.conj()), (3, rank), "Q")
        worst = max(worst, float(np.abs(marg - rho).max()))
    return CheckResult("linalg-invariants", worst <= 1e-9, worst, 1e-9)


def check_instrument(name: str, instrument: Instrument) -> CheckResult:
    """Completeness of one instrument, reported under the given scenario name."""
    defect = instrument.completeness_defect()
    return CheckResult(f"instrument-completeness[{name}]", defect <= 1e-9, defect, 1e-9)


def check_petz_fixed_point(seed: int = 1, n: int = 30) -> CheckResult:
    """Recovering the propagated prior must return the prior exactly."""
    from .retrodiction import ChannelRep, petz_map

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d_in = int(rng.integers(2, 4))
        d_out = int(rng.integers(2, 4))
        channel = ChannelRep(tuple(sampling.random_kraus_channel(d_in, d_out, 3, rng)))
        gamma = sampling.random_density(d_in, rng)
        sigma = channel.apply(gamma)
        sigma = (sigma + sigma.conj().T) / 2
        worst = max(worst, trace_norm(petz_map(channel, gamma, sigma) - gamma))
    return CheckResult("petz-fixed-point", worst <= 1e-9, worst, 1e-9, f"n={n}")


def iter_random_smoothing_cases(seed: int, n: int):
    """Yield ``(prior, effect)`` pairs from seeded random scenarios, cycling priors."""
    rng = np.random.default_rng(seed)
    produced = 0
    while produced < n:
        dim = int(rng.integers(2, 4))
        joint = sampling.random_joint_instrument(dim, 2, 2, rng)
        inst = alice_marginal(joint)
        rho0 = sampling.random_density(dim, rng)
        steps = int(rng.integers(1, 4))
        t = int(rng.integers(0, steps + 1))
        recs = [(r, p) for r, p in enumerate_records(inst, rho0, steps) if p > 1e-6]
        rec = recs[int(rng.integers(0, len(recs)))][0]
        past, fut = rec[:t], rec[t:]
        kind = PRIOR_CYCLE[produced % len(PRIOR_CYCLE)]
        try:
            prior = build_prior(kind, rho0=rho0, alice_past=past, instrument=inst, joint=joint)
            effect = retrofilter(inst, fut)
            yield prior, effect
        except ZeroProbabilityRecord:
            continue
        produced += 1


def check_smoothed_physicality(seed: int = 2, n: int = 60) -> CheckResult:
    """Smoothed states must be PSD and unit trace on random scenarios."""
    worst_eig, worst_tr = 0.0, 0.0
    for prior, effect in iter_random_smoothing_cases(seed, n):
        try:
            rho_s = generalized_smooth(prior, effect)
        except ZeroProbabilityRecord:
            continue
        worst_eig = max(worst_eig, max(0.0, -float(np.linalg.eigvalsh(rho_s)[0])))
        worst_tr = max(worst_tr, abs(float(rho_s.trace().real) - 1.0))
    passed = worst_eig <= 1e-9 and worst_tr <= 1e-10
    return CheckResult(
        "smoothed-physicality", passed, max(worst_eig, worst_tr), 1e-9, f"n={n}"
    )


def check_filter_averaging(scenario: Scenario | None = None) -> CheckResult:
    """Future-averaged smoothed states must reproduce the filtered state."""
    sc = scenario or demo_scenario()
    built = sc.build()
    rho0 = sc.rho0(built.dim)
    t = sc.smoothing_index
    table = _future_table(built.instrument, rho0, sc.steps, t, sc.cap())
    worst = 0.0
    for kind in sc.prior_kinds:
        for past, futs in table.items():
            p_past = sum(p for _, p in futs)
            if p_past <= _PROB_FLOOR:
                continue
            rho_f, _ = filter_state(built.instrument, rho0, past)
            prior = build_prior(
                kind, rho0=rho0, alice_past=past, instrument=built.instrument, joint=built.joint
            )
            avg = np.zeros((built.dim, built.dim), dtype=complex)
            for fut, p in futs:
                if p <= 1e-14:
                    continue
                avg += (p / p_past) * generalized_smooth(prior, retrofilter(built.instrument, fut))
            worst = max(worst, trace_norm(avg - rho_f))
    return CheckResult("filter-averaging", worst <= 1e-8, worst, 1e-8, f"scenario={sc.name}")


def check_classical_limit(steps: int = 4) -> CheckResult:
    """Quantum smoothing of a classical chain must match forward-backward exactly."""
    worst = 0.0
    for n_states in (2, 3):
        sc = classical_demo_scenario(n_states, steps=steps)
        built = sc.build()
        model = built.classical
        rho0 = sc.rho0(built.dim)
        prior0 = np.diag(rho0).real
        for rec, p in enumerate_records(built.instrument, rho0, steps, sc.cap()):
            if p <= _PROB_FLOOR:
                continue
            for t in range(steps + 1):
                ps = classical_smooth(model, prior0, rec[:t], rec[t:])
                for kind in ("pf", "gw-variant"):
                    prior = build_prior(
                        kind,
                        rho0=rho0,
                        alice_past=rec[:t],
                        instrument=built.instrument,
                        joint=built.joint,
                    )
                    rho_s = generalized_smooth(prior, retrofilter(built.instrument, rec[t:]))
                    worst = max(worst, float(np.abs(np.diag(rho_s).real - ps).max()))
    return CheckResult("classical-limit", worst <= 1e-9, worst, 1e-9, f"steps={steps}")


def check_branch_mixture(scenario: Scenario | None = None) -> CheckResult:
    """Register-based smoothing must equal the explicit true-state mixture."""
    sc = scenario or demo_scenario()
    built = sc.build()
    rho0 = sc.rho0(built.dim)
    t = sc.smoothing_index
    table = _future_table(built.instrument, rho0, sc.steps, t, sc.cap())
    worst = 0.0
    for past, futs in table.items():
        if sum(p for _, p in futs) <= _PROB_FLOOR:
            continue
        prior = build_prior(
            "gw", rho0=rho0, alice_past=past, instrument=built.instrument, joint=built.joint
        )
        for fut, p in futs:
            if p <= 1e-12:
                continue
            effect = retrofilter(built.instrument, fut)
            got = generalized_smooth(prior, effect)
            ref = branch_mixture_smooth(built.joint, rho0, past, effect)
            worst = max(worst, trace_norm(got - ref))
    return CheckResult("trajectory-mixture-equivalence", worst <= 1e-8, worst, 1e-8)


def check_bob_posterior(scenario: Scenario | None = None) -> CheckResult:
    """Record-register posterior must match exhaustive joint-record enumeration."""
    sc = scenario or demo_scenario()
    built = sc.build()
    rho0 = sc.rho0(built.dim)
    t = sc.smoothing_index
    joint_table = enumerate_records(built.joint, rho0, sc.steps, sc.cap())
    worst = 0.0
    for past, futs in _future_table(built.instrument, rho0, sc.steps, t, sc.cap()).items():
        for fut, p in futs:
            if p <= 1e-9:
                continue
            prior = build_prior(
                "gw", rho0=rho0, alice_past=past, instrument=built.instrument, joint=built.joint
            )
            probs = bob_posterior(prior, retrofilter(built.instrument, fut))
            num = defaultdict(float)
            den = 0.0
            for jrec, jp in joint_table:
                if tuple(a for a, _ in jrec) != past + fut:
                    continue
                den += jp
                num[tuple(u for _, u in jrec)[:t]] += jp
            expected = np.array([num[lbl] / den for lbl in prior.block_labels])
            worst = max(worst, float(np.abs(probs - expected).max()))
    return CheckResult("record-register-posterior", worst <= 1e-9, worst, 1e-9)


def check_entropy_sandwich(scenario: Scenario | None = None) -> CheckResult:
    """Average entropy must sit between S(rho_F) - H(futures) and S(rho_F)."""
    sc = scenario or demo_scenario()
    built = sc.build()
    rho0 = sc.rho0(built.dim)
    t = sc.smoothing_index
    table = _future_table(built.instrument, rho0, sc.steps, t, sc.cap())
    worst = 0.0
    clhs_gap = 0.0
    for kind in sc.prior_kinds:
        for past, futs in table.items():
            p_past = sum(p for _, p in futs)
            if p_past <= _PROB_FLOOR:
                continue
            rho_f, _ = filter_state(built.instrument, rho0, past)
            prior = build_prior(
                kind, rho0=rho0, alice_past=past, instrument=built.instrument, joint=built.joint
            )
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
            worst = max(worst, max(bound.lower - s_bar, s_bar - bound.upper, 0.0))
            if kind == "clhs":
                clhs_gap = max(clhs_gap, abs(s_bar - bound.upper))
    passed = worst <= 1e-9 and clhs_gap <= 1e-10
    return CheckResult(
        "entropy-sandwich", passed, max(worst, clhs_gap), 1e-9, f"clhs-saturation={clhs_gap:.1e}"
    )


def check_theorem1(seed: int = 3, n: int = 60) -> CheckResult:
    """Extremal-bound chain on random extensions with shared marginal."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d_q = int(rng.integers(2, 4))
        d_a = int(rng.integers(2, 5))
        gamma = sampling.random_density(d_q, rng)
        ext = build_custom(sampling.random_extension(gamma, d_a, rng), (d_q, d_a))
        povm = sampling.random_povm(d_q, int(rng.integers(2, 5)), rng)
        report = theorem1_check(gamma, ext, povm)
        worst = max(worst, max(-report.lower_margin, -report.upper_margin, 0.0))
    return CheckResult("entropy-extremal-bounds", worst <= 1e-9, worst, 1e-9, f"n={n}")


def check_lambda(seed: int = 4, n: int = 15) -> CheckResult:
    """Bridge map: CP, TP on the support, and carries trivial updates to extended ones."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d_q = int(rng.integers(2, 4))
        d_a = int(rng.integers(2, 4))
        gamma = sampling.random_density(d_q, rng)
        ext = build_custom(sampling.random_extension(gamma, d_a, rng), (d_q, d_a))
        choi = lambda_choi(ext, gamma)
        worst = max(worst, max(0.0, -float(np.linalg.eigvalsh(choi)[0])))
        basis = support_basis(gamma)
        for k in range(basis.shape[1]):
            unit = np.outer(basis[:, k], basis[:, k].conj())
            worst = max(worst, abs(float(lambda_apply(ext, gamma, unit).trace().real) - 1.0))
        povm = sampling.random_povm(d_q, 3, rng)
        chan = lambda_map(ext, gamma)
        trivial = ExtensionScenario(gamma, build_custom(gamma, (d_q, 1)), tuple(povm))
        extended = ExtensionScenario(gamma, ext, tuple(povm))
        for base, target in zip(smoothed_outcome_states(trivial), smoothed_outcome_states(extended)):
            if base is None or target is None:
                continue
            worst = max(worst, trace_norm(chan.apply(base) - target))
    return CheckResult("bridge-map-cp-tp", worst <= 1e-9, worst, 1e-9, f"n={n}")


def check_purification_invariance(scenario: Scenario | None = None, seed: int = 5) -> CheckResult:
    """Smoothed states must not depend on the choice of purifying ancilla."""
    from .smoothers import extend_ancilla

    sc = scenario or demo_scenario()
    built = sc.build()
    rho0 = sc.rho0(built.dim)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for past, fut in ((("0", "1"), ("0", "0")), (("0", "0"), ("0", "1"))):
        effect = retrofilter(built.instrument, fut)
        for kind in ("gw", "pf-variant"):
            prior = build_prior(
                kind, rho0=rho0, alice_past=past, instrument=built.instrument, joint=built.joint
            )
            base = generalized_smooth(prior, effect)
            iso = sampling.random_isometry(prior.dim_a1, prior.dim_a1 + 2, rng)
            moved = generalized_smooth(extend_ancilla(prior, iso), effect)
            worst = max(worst, trace_norm(moved - base))
    return CheckResult("purification-invariance", worst <= 1e-9, worst, 1e-9)


def check_qubit_reversal() -> CheckResult:
    """The four qubit average entropies and their strict ordering reversal."""
    demo = no_universal_quantifier_demo()
    passed = demo.max_error <= 1e-10 and demo.reversal_holds
    return CheckResult("qubit-ordering-reversal", passed, demo.max_error, 1e-10)


def run_all(seed: int = 2024) -> list[CheckResult]:
    sc = demo_scenario()
    built = sc.build()
    results = [
        check_linalg(seed),
        check_instrument(sc.name, built.instrument),
        check_instrument("classical-2state", classical_demo_scenario(2).build().instrument),
        check_petz_fixed_point(seed + 1),
        check_smoothed_physicality(seed + 2),
        check_filter_averaging(sc),
        check_classical_limit(steps=3),
        check_branch_mixture(sc),
        check_bob_posterior(sc),
        check_entropy_sandwich(sc),
        check_purification_invariance(sc, seed + 5),
        check_theorem1(seed + 3),
        check_lambda(seed + 4),
        check_qubit_reversal(),
    ]
    return results
