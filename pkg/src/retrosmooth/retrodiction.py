"""Retrodictive state updates: Petz recovery, extended priors, and smoothing.

The Petz recovery map of a channel ``E`` with prior ``gamma``,

    R(sigma) = sqrt(gamma) E†( E(gamma)^{-1/2} sigma E(gamma)^{-1/2} ) sqrt(gamma),

is the canonical quantum Bayesian update: feeding back the propagated prior
returns ``gamma`` exactly.  When the agent's knowledge includes correlations
with an auxiliary system, the prior is a joint state ``Gamma`` on
``Q (x) A`` and the update acts on the channel tensored with a discard of
``A``, followed by tracing ``A`` out.

Smoothing is the special case where the channel is the quantum-classical
measurement channel of the remaining record and the evidence is the observed
record itself.  The update then collapses to a closed form in terms of the
retrofiltered effect ``E_R``:

    rho_S = Tr_A[ sqrt(P) (E_R (x) I_A) sqrt(P) ] / Tr[rho_F E_R],

where ``P`` is the filtered global state (the extended prior at the
smoothing time) and ``rho_F = Tr_A[P]`` the ordinary filtered state.

Filtered global states are stored as a block-diagonal family over an
optional classical record register, since the square root of a
block-diagonal matrix factorizes blockwise; this keeps the cost linear in
the number of record branches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EnumerationTooLarge,
    EvidenceOutsideSupport,
    InvalidFactorization,
    InvalidMatrix,
    InvalidPOVM,
    MissingClassicalRegister,
    ZeroProbabilityRecord,
)
from .linalg import (
    as_density,
    as_effect,
    as_hermitian,
    dag,
    hermitian_part,
    partial_trace,
    psd_sqrt,
    support_inv_sqrt,
    support_projector,
    tensor,
)
from .trajectory import DEFAULT_ENUMERATION_CAP

_NORMALIZER_FLOOR = 1e-14
_LEAKAGE_TOL = 1e-8

PRIOR_KINDS = ("pf", "gw", "gw-variant", "pf-variant", "clhs", "custom")


@dataclass(frozen=True, eq=False)
class ChannelRep:
    """A quantum channel in Kraus form, possibly with different input/output spaces."""

    kraus: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.kraus:
            raise InvalidMatrix("channel needs at least one Kraus operator")
        mats = []
        for k in self.kraus:
            a = np.asarray(k, dtype=complex)
            if a.ndim != 2:
                raise InvalidMatrix("Kraus operators must be matrices")
            if not np.all(np.isfinite(a.view(float))):
                raise InvalidMatrix("Kraus operator has non-finite entries")
            mats.append(a)
        shape = mats[0].shape
        if any(m.shape != shape for m in mats):
            raise InvalidMatrix("Kraus operators must share one shape")
        object.__setattr__(self, "kraus", tuple(mats))

    @property
    def input_dim(self) -> int:
        return self.kraus[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.kraus[0].shape[0]

    def completeness(self) -> np.ndarray:
        """``sum_k K† K`` (the identity for a trace-preserving channel)."""
        return hermitian_part(sum(dag(k) @ k for k in self.kraus))

    def require_trace_preserving(self, tol: float = 1e-9) -> None:
        defect = np.abs(self.completeness() - np.eye(self.input_dim)).max()
        if defect > tol:
            raise InvalidMatrix(f"channel is not trace-preserving (defect {defect:.3e})")

    def apply(self, x) -> np.ndarray:
        a = np.asarray(x, dtype=complex)
        return sum(k @ a @ dag(k) for k in self.kraus)

    def adjoint_apply(self, y) -> np.ndarray:
        a = np.asarray(y, dtype=complex)
        return sum(dag(k) @ a @ k for k in self.kraus)


@dataclass(frozen=True, eq=False)
class FilteredGlobalState:
    """Joint state of the system and the auxiliary reference the agent credits.

    ``blocks[u]`` lives on ``Q (x) A1`` and is the branch tied to value ``u``
    of a classical record register ``A2`` (basis states labelled by
    ``block_labels``); the full state is the block-diagonal sum over the
    register, on ``Q (x) A1 (x) A2``.  Priors without a record register are a
    single block with the empty label.  Block traces must sum to one.
    """

    blocks: tuple[np.ndarray, ...]
    dim_q: int
    dim_a1: int = 1
    block_labels: tuple[tuple, ...] = ((),)
    kind: str = "custom"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise InvalidMatrix(f"unknown prior kind {self.kind!r}")
        if len(self.blocks) != len(self.block_labels):
            raise InvalidMatrix("one label per block required")
        if not self.blocks:
            raise InvalidMatrix("at least one block required")
        d = self.dim_q * self.dim_a1
        mats = []
        total = 0.0
        for b in self.blocks:
            m = as_hermitian(b, "global-state block", tol=1e-9)
            if m.shape != (d, d):
                raise InvalidFactorization(
                    f"block of shape {m.shape} does not match dims ({self.dim_q}, {self.dim_a1})"
                )
            total += float(m.trace().real)
            mats.append(m)
        if abs(total - 1.0) > 1e-8:
            raise InvalidMatrix(f"block traces sum to {total!r}, expected 1")
        object.__setattr__(self, "blocks", tuple(mats))
        object.__setattr__(self, "block_labels", tuple(tuple(l) for l in self.block_labels))

    @property
    def dim_a2(self) -> int:
        return len(self.blocks)

    @property
    def dim_a(self) -> int:
        return self.dim_a1 * self.dim_a2

    @property
    def dims(self) -> tuple[int, int]:
        return (self.dim_q, self.dim_a)

    def marginal(self) -> np.ndarray:
        """Reduced state on the system, ``Tr_A`` of the global state."""
        out = np.zeros((self.dim_q, self.dim_q), dtype=complex)
        for b in self.blocks:
            out += partial_trace(b, (self.dim_q, self.dim_a1), "Q")
        return hermitian_part(out)

    def to_dense(self) -> np.ndarray:
        """Materialize the full matrix on ``Q (x) A1 (x) A2`` (register last)."""
        dq, da1, da2 = self.dim_q, self.dim_a1, self.dim_a2
        n = dq * da1 * da2
        out = np.zeros((n, n), dtype=complex)
        for u, b in enumerate(self.blocks):
            r = b.reshape(dq, da1, dq, da1)
            for i in range(dq):
                for a in range(da1):
                    row = (i * da1 + a) * da2 + u
                    out[row, u::da2] = r[i, a].reshape(-1)
        return out

    def consistency_gap(self, rho_f) -> float:
        """Max-entry deviation of the marginal from a reference filtered state."""
        return float(np.abs(self.marginal() - np.asarray(rho_f, dtype=complex)).max())


def _pull_back_evidence(channel: ChannelRep, gamma: np.ndarray, sigma) -> np.ndarray:
    """``E†(E(gamma)^{-1/2} sigma E(gamma)^{-1/2})`` with support-restricted inverses.

    Evidence weight outside the support of the propagated prior beyond
    ``1e-8`` raises :class:`EvidenceOutsideSupport` rather than being
    silently projected away.
    """
    channel.require_trace_preserving()
    s = as_density(sigma, "evidence")
    if s.shape[0] != channel.output_dim:
        raise InvalidFactorization("evidence does not match the channel output")
    propagated = hermitian_part(channel.apply(gamma))
    w = support_inv_sqrt(propagated)
    proj = support_projector(propagated)
    leakage = float((s @ (np.eye(s.shape[0]) - proj)).trace().real)
    if leakage > _LEAKAGE_TOL:
        raise EvidenceOutsideSupport(
            f"evidence has weight {leakage:.3e} outside the propagated prior's support"
        )
    return channel.adjoint_apply(w @ s @ w)


def petz_map(channel: ChannelRep, gamma, sigma) -> np.ndarray:
    """Petz recovery of a prior ``gamma`` through ``channel``, given evidence ``sigma``."""
    g = as_density(gamma, "prior")
    if g.shape[0] != channel.input_dim:
        raise InvalidFactorization("prior dimension does not match the channel input")
    pulled = _pull_back_evidence(channel, g, sigma)
    root = psd_sqrt(g)
    return hermitian_part(root @ pulled @ root)


def extended_petz(channel: ChannelRep, prior: FilteredGlobalState, sigma) -> np.ndarray:
    """Petz recovery with a prior extended to the auxiliary system.

    The channel acts on the system factor only, the auxiliary is discarded,
    and the update is traced back down to the system:
    ``Tr_A[ sqrt(Gamma) (E†(E(gamma)^{-1/2} sigma E(gamma)^{-1/2}) (x) I_A) sqrt(Gamma) ]``
    with ``gamma = Tr_A[Gamma]``.  For a trivial auxiliary this is exactly
    :func:`petz_map`; for a pure ``Gamma`` the update never moves the prior.
    """
    if channel.input_dim != prior.dim_q:
        raise InvalidFactorization(
            f"channel input dim {channel.input_dim} != system dim {prior.dim_q}"
        )
    pulled = _pull_back_evidence(channel, prior.marginal(), sigma)
    return hermitian_part(_sandwich_marginal(prior, pulled))


def _sandwich_marginal(prior: FilteredGlobalState, x) -> np.ndarray:
    """``Tr_A[ sqrt(P) (x (x) I_A) sqrt(P) ]`` computed blockwise.

    Linear in ``x`` (no symmetrization), so it is safe on matrix units.
    """
    lifted = tensor(x, np.eye(prior.dim_a1))
    out = np.zeros((prior.dim_q, prior.dim_q), dtype=complex)
    for b in prior.blocks:
        root = psd_sqrt(b)
        out += partial_trace(root @ lifted @ root, (prior.dim_q, prior.dim_a1), "Q")
    return out


def generalized_smooth(prior: FilteredGlobalState, effect) -> np.ndarray:
    """Smoothed system state from a filtered global state and a retrofiltered effect.

    Computes ``Tr_A[sqrt(P) (E_R (x) I_A) sqrt(P)] / Tr[rho_F E_R]``.  The
    output is PSD with unit trace whenever the record has nonvanishing
    probability; otherwise :class:`ZeroProbabilityRecord` is raised.
    """
    e = as_effect(effect)
    if e.shape[0] != prior.dim_q:
        raise InvalidFactorization("effect dimension does not match the system")
    norm = float((prior.marginal() @ e).trace().real)
    if norm <= _NORMALIZER_FLOOR:
        raise ZeroProbabilityRecord(f"record probability {norm:.3e} vanishes")
    return hermitian_part(_sandwich_marginal(prior, e)) / norm


def smoothed_global(prior: FilteredGlobalState, effect) -> FilteredGlobalState:
    """Smoothed joint state on ``Q (x) A``, keeping the block structure.

    Same update as :func:`generalized_smooth` without the final partial
    trace; tracing out the auxiliary of the result recovers the smoothed
    system state.
    """
    e = as_effect(effect)
    if e.shape[0] != prior.dim_q:
        raise InvalidFactorization("effect dimension does not match the system")
    norm = float((prior.marginal() @ e).trace().real)
    if norm <= _NORMALIZER_FLOOR:
        raise ZeroProbabilityRecord(f"record probability {norm:.3e} vanishes")
    lifted = tensor(e, np.eye(prior.dim_a1))
    blocks = []
    for b in prior.blocks:
        root = psd_sqrt(b)
        blocks.append(hermitian_part(root @ lifted @ root) / norm)
    return FilteredGlobalState(
        blocks=tuple(blocks),
        dim_q=prior.dim_q,
        dim_a1=prior.dim_a1,
        block_labels=prior.block_labels,
        kind=prior.kind,
        metadata={**prior.metadata, "smoothed": True},
    )


def bob_posterior(prior: FilteredGlobalState, effect) -> np.ndarray:
    """Posterior over the hypothetical second observer's past records.

    Only defined for priors carrying a classical record register (the
    ``gw`` and ``gw-variant`` kinds); the returned probabilities align with
    ``prior.block_labels``.  Equals the diagonal of the record register of
    the smoothed global state.
    """
    if prior.kind not in ("gw", "gw-variant"):
        raise MissingClassicalRegister(
            f"prior kind {prior.kind!r} carries no classical record register"
        )
    e = as_effect(effect)
    norm = float((prior.marginal() @ e).trace().real)
    if norm <= _NORMALIZER_FLOOR:
        raise ZeroProbabilityRecord(f"record probability {norm:.3e} vanishes")
    lifted = tensor(e, np.eye(prior.dim_a1))
    probs = np.array([max((b @ lifted).trace().real, 0.0) for b in prior.blocks])
    return probs / norm


def counterfactual_prob(rho_s, povm) -> np.ndarray:
    """Born probabilities of an unperformed measurement on a smoothed state."""
    rho = as_density(rho_s, "smoothed state")
    effects = [as_effect(e) for e in povm]
    total = sum(effects)
    if np.abs(total - np.eye(rho.shape[0])).max() > 1e-9:
        raise InvalidPOVM("effects do not sum to the identity")
    probs = np.array([(rho @ e).trace().real for e in effects])
    return np.clip(probs, 0.0, None)


def record_channel(
    instrument, steps: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> tuple[ChannelRep, list[tuple]]:
    """The quantum-classical channel mapping a state to the record distribution.

    Sends ``X`` to ``sum_r Tr[Phi_r(X)] |r><r|`` over all records ``r`` of the
    given length.  Returns the channel together with the record ordering that
    indexes its output basis.  Only practical for very short records; meant
    for cross-checking the closed-form smoothing update against
    :func:`extended_petz`.
    """
    labels = instrument.outcome_labels
    if len(labels) ** int(steps) > cap:
        raise EnumerationTooLarge(f"{len(labels)} ** {steps} records exceed the cap of {cap}")
    dim = instrument.dim
    records: list[tuple] = []
    kraus: list[np.ndarray] = []

    def descend(prefix: tuple, mats: list[np.ndarray], remaining: int) -> None:
        if remaining == 0:
            j = len(records)
            records.append(prefix)
            ket = np.zeros((len(labels) ** int(steps), 1), dtype=complex)
            ket[j, 0] = 1.0
            for m in mats:
                for i in range(dim):
                    bra = np.zeros((1, dim), dtype=complex)
                    bra[0, i] = 1.0
                    kraus.append(ket @ bra @ m)
            return
        for y in labels:
            op = instrument.op(y)
            next_mats = [k @ m for m in mats for k in op.kraus]
            descend(prefix + (y,), next_mats, remaining - 1)

    descend((), [np.eye(dim, dtype=complex)], int(steps))
    return ChannelRep(tuple(kraus)), records
