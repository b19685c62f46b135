"""Average-entropy analysis of smoothed states and the extremal prior bounds.

For a system state ``gamma``, an extension ``Gamma`` with marginal ``gamma``
and a POVM ``{E_i}``, each outcome ``i`` occurs with probability
``p_i = Tr[E_i gamma]`` and updates the state to

    rho_i = Tr_A[ sqrt(Gamma) (E_i (x) I_A) sqrt(Gamma) ] / p_i.

The p-weighted average von Neumann entropy of these updates is bounded below
by the trivial extension (``Gamma = gamma``) and above by ``S(gamma)``
(attained by any purification).  The bridge between the two is the
completely positive map

    L(Y) = Tr_A[ sqrt(Gamma) (gamma^{-1/2} Y gamma^{-1/2} (x) I_A) sqrt(Gamma) ],

trace-preserving on the support of ``gamma``, which carries every trivially
updated state onto its extended counterpart; data processing then yields the
lower bound, concavity the upper one.

No future-measurement-independent functional of the extension can order
these averages for every POVM: two extensions of the maximally mixed qubit,
classically correlated in the Z and X bases respectively, swap their
ordering between Z and X measurements (see
:func:`no_universal_quantifier_demo`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidExtension, InvalidPOVM
from .linalg import (
    RANK_TOL,
    as_density,
    as_effect,
    entropy_shannon,
    entropy_vn,
    herm_eig,
    hermitian_part,
    psd_sqrt,
    support_inv_sqrt,
    tensor,
)
from .retrodiction import ChannelRep, FilteredGlobalState, _sandwich_marginal
from .smoothers import build_custom

_PROB_FLOOR = 1e-14
_MARGINAL_TOL = 1e-9
_POVM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ExtensionScenario:
    """A system state, an extension sharing its marginal, and a POVM on the system."""

    gamma: np.ndarray
    extension: FilteredGlobalState
    effects: tuple[np.ndarray, ...]

    def __post_init__(self):
        g = as_density(self.gamma, "gamma")
        object.__setattr__(self, "gamma", g)
        if self.extension.dim_q != g.shape[0]:
            raise InvalidExtension("extension system dimension does not match gamma")
        gap = self.extension.consistency_gap(g)
        if gap > _MARGINAL_TOL:
            raise InvalidExtension(f"extension marginal deviates from gamma by {gap:.3e}")
        effects = tuple(as_effect(e, "POVM effect") for e in self.effects)
        if not effects:
            raise InvalidPOVM("POVM needs at least one effect")
        total = sum(effects)
        if np.abs(total - np.eye(g.shape[0])).max() > _POVM_TOL:
            raise InvalidPOVM("effects do not sum to the identity")
        object.__setattr__(self, "effects", effects)


def outcome_probs(scenario: ExtensionScenario) -> np.ndarray:
    """Outcome probabilities ``Tr[E_i gamma]`` of measuring the system marginal."""
    return np.clip(
        np.array([(e @ scenario.gamma).trace().real for e in scenario.effects]), 0.0, None
    )


def smoothed_outcome_states(scenario: ExtensionScenario) -> list[np.ndarray | None]:
    """Per-outcome updated states; outcomes of negligible probability give ``None``."""
    probs = outcome_probs(scenario)
    states: list[np.ndarray | None] = []
    for e, p in zip(scenario.effects, probs):
        if p <= _PROB_FLOOR:
            states.append(None)
            continue
        states.append(hermitian_part(_sandwich_marginal(scenario.extension, e)) / p)
    return states


def avg_entropy(scenario: ExtensionScenario) -> float:
    """Probability-weighted average von Neumann entropy of the updated states (nats)."""
    probs = outcome_probs(scenario)
    total = 0.0
    for p, rho in zip(probs, smoothed_outcome_states(scenario)):
        if rho is not None:
            total += float(p) * entropy_vn(rho)
    return total


class SandwichBound(NamedTuple):
    lower: float
    upper: float
    holds: bool


def sandwich_bound(rho_f, future_probs, avg_s: float, slack: float = 1e-9) -> SandwichBound:
    """Entropy sandwich for an average over future records.

    The average entropy of the smoothed states lies between
    ``S(rho_F) - H(future records)`` and ``S(rho_F)``; returns both bounds and
    whether ``avg_s`` sits inside them up to ``slack``.
    """
    s_f = entropy_vn(rho_f)
    h = entropy_shannon(future_probs)
    lower, upper = s_f - h, s_f
    return SandwichBound(lower, upper, bool(lower - slack <= avg_s <= upper + slack))


def _require_marginal(extension: FilteredGlobalState, gamma: np.ndarray) -> None:
    gap = extension.consistency_gap(gamma)
    if gap > _MARGINAL_TOL:
        raise InvalidExtension(f"extension marginal deviates from gamma by {gap:.3e}")


def lambda_apply(extension: FilteredGlobalState, gamma, y) -> np.ndarray:
    """Directly evaluate the trivial-to-extended bridge map on one operator."""
    g = as_density(gamma, "gamma")
    _require_marginal(extension, g)
    w = support_inv_sqrt(g)
    return _sandwich_marginal(extension, w @ np.asarray(y, dtype=complex) @ w)


def lambda_map(extension: FilteredGlobalState, gamma) -> ChannelRep:
    """Kraus form of the bridge map carrying trivial updates to extended ones.

    With ``S = sqrt(Gamma)`` written in blocks ``G_ab`` over an ancilla basis,
    the Kraus operators are ``G_ab gamma^{-1/2}``; their Gram sum is the
    support projector of ``gamma``, so the channel is trace-preserving on
    that support.
    """
    g = as_density(gamma, "gamma")
    _require_marginal(extension, g)
    w = support_inv_sqrt(g)
    d_q, d_a1 = extension.dim_q, extension.dim_a1
    kraus: list[np.ndarray] = []
    for block in extension.blocks:
        root = psd_sqrt(block).reshape(d_q, d_a1, d_q, d_a1)
        for a in range(d_a1):
            for b in range(d_a1):
                kraus.append(root[:, a, :, b] @ w)
    return ChannelRep(tuple(kraus))


def support_basis(gamma) -> np.ndarray:
    """Orthonormal basis (columns) of the support of a PSD matrix."""
    w, v = herm_eig(gamma)
    top = float(w[0]) if w.size else 0.0
    if top <= 0.0:
        return np.zeros((np.asarray(gamma).shape[0], 0), dtype=complex)
    return v[:, w > RANK_TOL * top]


def lambda_choi(extension: FilteredGlobalState, gamma) -> np.ndarray:
    """Choi matrix of the bridge map on the support of ``gamma``.

    Built by direct evaluation of the defining formula on matrix units of the
    support basis (independent of the Kraus form); PSD up to round-off iff
    the map is completely positive there.
    """
    g = as_density(gamma, "gamma")
    basis = support_basis(g)
    r = basis.shape[1]
    choi = np.zeros((extension.dim_q * r, extension.dim_q * r), dtype=complex)
    for k in range(r):
        for l in range(r):
            unit = np.outer(basis[:, k], basis[:, l].conj())
            ekl = np.zeros((r, r), dtype=complex)
            ekl[k, l] = 1.0
            choi += tensor(lambda_apply(extension, g, unit), ekl)
    return choi


@dataclass(frozen=True)
class Theorem1Report:
    """Both ends of the average-entropy sandwich for one extension."""

    avg_entropy_trivial: float
    avg_entropy_extension: float
    entropy_marginal: float
    lower_margin: float
    upper_margin: float
    ordering_holds: bool


def theorem1_check(gamma, extension: FilteredGlobalState, povm, slack: float = 1e-9) -> Theorem1Report:
    """Evaluate the extremal-bound chain for one ``(gamma, Gamma, POVM)`` triple."""
    g = as_density(gamma, "gamma")
    trivial = build_custom(g, (g.shape[0], 1))
    s_trivial = avg_entropy(ExtensionScenario(g, trivial, tuple(povm)))
    s_ext = avg_entropy(ExtensionScenario(g, extension, tuple(povm)))
    s_gamma = entropy_vn(g)
    return Theorem1Report(
        avg_entropy_trivial=s_trivial,
        avg_entropy_extension=s_ext,
        entropy_marginal=s_gamma,
        lower_margin=s_ext - s_trivial,
        upper_margin=s_gamma - s_ext,
        ordering_holds=bool(s_trivial - slack <= s_ext <= s_gamma + slack),
    )


@dataclass(frozen=True)
class QuantifierDemo:
    """Average entropies of two classically correlated extensions under Z and X."""

    values: dict[tuple[str, str], float]
    expected: dict[tuple[str, str], float]
    max_error: float
    reversal_holds: bool


def no_universal_quantifier_demo() -> QuantifierDemo:
    """Qubit demonstration that no POVM-independent functional orders the averages.

    Two extensions of the maximally mixed state, one correlated in the Z
    basis and one in the X basis, give average entropies ``(0, ln 2)`` under
    a Z measurement and ``(ln 2, 0)`` under an X measurement: strictly
    ordered both times, in opposite directions.
    """
    ket0 = np.array([1.0, 0.0])
    ket1 = np.array([0.0, 1.0])
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    minus = np.array([1.0, -1.0]) / np.sqrt(2)

    def proj(v):
        return np.outer(v, v.conj())

    gamma = np.eye(2) / 2
    ext1 = 0.5 * (tensor(proj(ket0), proj(ket0)) + tensor(proj(ket1), proj(ket1)))
    ext2 = 0.5 * (tensor(proj(plus), proj(ket0)) + tensor(proj(minus), proj(ket1)))
    povms = {"Z": (proj(ket0), proj(ket1)), "X": (proj(plus), proj(minus))}

    ln2 = float(np.log(2.0))
    expected = {
        ("gamma1", "Z"): 0.0,
        ("gamma1", "X"): ln2,
        ("gamma2", "Z"): ln2,
        ("gamma2", "X"): 0.0,
    }
    values: dict[tuple[str, str], float] = {}
    for name, ext in (("gamma1", ext1), ("gamma2", ext2)):
        prior = build_custom(ext, (2, 2))
        for axis, effects in povms.items():
            values[(name, axis)] = avg_entropy(ExtensionScenario(gamma, prior, effects))

    max_error = max(abs(values[k] - expected[k]) for k in expected)
    reversal = (values[("gamma1", "Z")] < values[("gamma2", "Z")]) and (
        values[("gamma1", "X")] > values[("gamma2", "X")]
    )
    return QuantifierDemo(
        values=values, expected=expected, max_error=max_error, reversal_holds=bool(reversal)
    )
