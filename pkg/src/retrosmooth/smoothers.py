"""Builders for the filtered global states behind each smoothing flavor.

Each builder returns a :class:`~retrosmooth.retrodiction.FilteredGlobalState`
encoding what the agent credits about correlations with the system before the
smoothing time:

``pf``
    No auxiliary at all: the prior is the filtered state itself, and
    smoothing reduces to ``sqrt(rho_F) E_R sqrt(rho_F)`` (normalized).
``gw``
    The initial state is held as a purification (improper mixture) and the
    unmonitored environment as a classical record register, one branch per
    possible record of the hypothetical second observer ("bob").  Smoothing
    then averages the branch-conditioned states exactly as the
    trajectory-based definition does.
``gw-variant``
    Record register only, no purification of the initial state.
``pf-variant``
    Purification of the initial state only, propagated through the
    observer's own conditional operations.
``clhs``
    A purification of the filtered state itself: the agent is certain of the
    global pure state, so smoothing never updates the system marginal.
``custom``
    Any explicit extension with the right marginal (used for bound sweeps).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EnumerationTooLarge,
    InvalidFactorization,
    UnknownOutcome,
    ZeroProbabilityRecord,
)
from .linalg import as_density, dag, hermitian_part, purify, tensor
from .retrodiction import FilteredGlobalState
from .trajectory import (
    DEFAULT_ENUMERATION_CAP,
    Instrument,
    JointInstrument,
    filter as filter_state,
)

_WEIGHT_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class TrueStateBranch:
    """One record-conditioned branch of the system state, unnormalized."""

    bob_record: tuple[str, ...]
    operator: np.ndarray
    weight: float


def _bob_branches(
    joint: JointInstrument,
    initial: np.ndarray,
    alice_past,
    dim_extra: int,
    cap: int,
) -> list[TrueStateBranch]:
    """Propagate every compatible bob record alongside a fixed alice record.

    ``initial`` lives on the system tensored with ``dim_extra`` ancilla
    dimensions; joint Kraus operators act on the system factor only.  Output
    is ordered lexicographically in the bob record.
    """
    alice_past = tuple(alice_past)
    options = [joint.bob_options(y) for y in alice_past]
    for y, opt in zip(alice_past, options):
        if not opt:
            raise UnknownOutcome(f"outcome {y!r} not in the joint instrument's alphabet")
    n_branches = 1
    for opt in options:
        n_branches *= len(opt)
    if n_branches > cap:
        raise EnumerationTooLarge(f"{n_branches} bob branches exceed the cap of {cap}")

    eye = np.eye(dim_extra)
    step_ops = [
        [
            (u, joint.op((y, u)).kraus[0] if dim_extra == 1 else tensor(joint.op((y, u)).kraus[0], eye))
            for u in opts
        ]
        for y, opts in zip(alice_past, options)
    ]
    branches: list[TrueStateBranch] = []

    def descend(step: int, record: tuple[str, ...], sigma: np.ndarray) -> None:
        if step == len(alice_past):
            branches.append(
                TrueStateBranch(record, hermitian_part(sigma), max(float(sigma.trace().real), 0.0))
            )
            return
        for u, m in step_ops[step]:
            descend(step + 1, record + (u,), m @ sigma @ dag(m))

    descend(0, (), np.asarray(initial, dtype=complex))
    return branches


def enumerate_bob_branches(
    joint: JointInstrument, rho0, alice_past, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[TrueStateBranch]:
    """Unnormalized true-state branches for each bob record compatible with the past.

    Branch weights sum to the probability of the alice record, and dividing a
    branch by its weight gives the state conditioned on both records.
    """
    return _bob_branches(joint, as_density(rho0, "rho0"), alice_past, 1, cap)


def _prune(branches, prune_tol: float):
    total = sum(b.weight for b in branches)
    if prune_tol <= 0.0:
        return branches, 0.0, total
    kept = [b for b in branches if b.weight >= prune_tol * total]
    dropped = total - sum(b.weight for b in kept)
    return kept, dropped, total


def build_pf(rho_f) -> FilteredGlobalState:
    """Trivial extension: the filtered state with a one-dimensional auxiliary."""
    rho = as_density(rho_f, "rho_f")
    return FilteredGlobalState(
        blocks=(rho,), dim_q=rho.shape[0], dim_a1=1, block_labels=((),), kind="pf"
    )


def build_clhs(rho_f) -> FilteredGlobalState:
    """Purification of the filtered state; smoothing leaves the marginal fixed."""
    rho = as_density(rho_f, "rho_f")
    psi = purify(rho)
    rank = psi.size // rho.shape[0]
    block = np.outer(psi, psi.conj())
    return FilteredGlobalState(
        blocks=(block,), dim_q=rho.shape[0], dim_a1=rank, block_labels=((),), kind="clhs"
    )


def build_pf_variant(instrument: Instrument, rho0, alice_past) -> FilteredGlobalState:
    """Purification of the initial state propagated through the observer's record."""
    rho = as_density(rho0, "rho0")
    psi = purify(rho)
    rank = psi.size // rho.shape[0]
    sigma = np.outer(psi, psi.conj())
    for y in alice_past:
        op = instrument.op(y).extend(rank) if rank > 1 else instrument.op(y)
        sigma = sum(k @ sigma @ dag(k) for k in op.kraus)
    weight = float(sigma.trace().real)
    if weight <= _WEIGHT_FLOOR:
        raise ZeroProbabilityRecord("record impossible under the instrument")
    return FilteredGlobalState(
        blocks=(hermitian_part(sigma) / weight,),
        dim_q=rho.shape[0],
        dim_a1=rank,
        block_labels=((),),
        kind="pf-variant",
    )


def build_gw(
    joint: JointInstrument,
    rho0,
    alice_past,
    cap: int = DEFAULT_ENUMERATION_CAP,
    prune_tol: float = 0.0,
) -> FilteredGlobalState:
    """Purified initial state with a classical register over bob records.

    Each register branch holds the joint-record conditioned pure state of the
    system and the purifying ancilla; branch weights are normalized by the
    probability of the alice record.  ``prune_tol`` optionally drops branches
    below that fraction of the total weight (the dropped mass is reported in
    the metadata; keep it at zero for exact results).
    """
    rho = as_density(rho0, "rho0")
    psi = purify(rho)
    rank = psi.size // rho.shape[0]
    initial = np.outer(psi, psi.conj())
    branches = _bob_branches(joint, initial, alice_past, rank, cap)
    return _register_state(branches, rho.shape[0], rank, "gw", prune_tol)


def build_gw_variant(
    joint: JointInstrument,
    rho0,
    alice_past,
    cap: int = DEFAULT_ENUMERATION_CAP,
    prune_tol: float = 0.0,
) -> FilteredGlobalState:
    """Classical register over bob records, initial state taken as a proper mixture."""
    branches = enumerate_bob_branches(joint, rho0, alice_past, cap)
    dim_q = np.asarray(rho0).shape[0]
    return _register_state(branches, dim_q, 1, "gw-variant", prune_tol)


def _register_state(branches, dim_q, dim_a1, kind, prune_tol) -> FilteredGlobalState:
    kept, dropped, total = _prune(branches, prune_tol)
    if total <= _WEIGHT_FLOOR:
        raise ZeroProbabilityRecord("record impossible under the joint instrument")
    scale = total - dropped
    metadata = {"dropped_mass": dropped / total if dropped else 0.0}
    return FilteredGlobalState(
        blocks=tuple(b.operator / scale for b in kept),
        dim_q=dim_q,
        dim_a1=dim_a1,
        block_labels=tuple(b.bob_record for b in kept),
        kind=kind,
        metadata=metadata,
    )


def build_custom(matrix, dims: tuple[int, int]) -> FilteredGlobalState:
    """Wrap an explicit extension with declared ``(d_q, d_a)`` factorization."""
    state = as_density(matrix, "extension")
    d_q, d_a = int(dims[0]), int(dims[1])
    if state.shape[0] != d_q * d_a:
        raise InvalidFactorization(
            f"matrix of dimension {state.shape[0]} does not factor as {dims}"
        )
    return FilteredGlobalState(
        blocks=(state,), dim_q=d_q, dim_a1=d_a, block_labels=((),), kind="custom"
    )


def build_prior(
    kind: str,
    *,
    rho0,
    alice_past,
    instrument: Instrument,
    joint: JointInstrument | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
    prune_tol: float = 0.0,
) -> FilteredGlobalState:
    """Dispatch a prior build from shared scenario ingredients."""
    if kind in ("pf", "clhs"):
        rho_f, _ = filter_state(instrument, rho0, alice_past)
        return build_pf(rho_f) if kind == "pf" else build_clhs(rho_f)
    if kind == "pf-variant":
        return build_pf_variant(instrument, rho0, alice_past)
    if kind in ("gw", "gw-variant"):
        if joint is None:
            raise InvalidFactorization(f"prior kind {kind!r} needs a joint instrument")
        builder = build_gw if kind == "gw" else build_gw_variant
        return builder(joint, rho0, alice_past, cap=cap, prune_tol=prune_tol)
    raise InvalidFactorization(f"cannot build prior kind {kind!r} from a scenario")


def extend_ancilla(prior: FilteredGlobalState, isometry) -> FilteredGlobalState:
    """Conjugate the purifying ancilla of every block by an isometry.

    Smoothed states are invariant under this, since any two purifications of
    the same state differ by exactly such a map.
    """
    v = np.asarray(isometry, dtype=complex)
    if v.ndim != 2 or v.shape[1] != prior.dim_a1:
        raise InvalidFactorization(
            f"isometry of shape {v.shape} does not act on an ancilla of dim {prior.dim_a1}"
        )
    if np.abs(dag(v) @ v - np.eye(prior.dim_a1)).max() > 1e-10:
        raise InvalidFactorization("map is not an isometry")
    lift = tensor(np.eye(prior.dim_q), v)
    return FilteredGlobalState(
        blocks=tuple(hermitian_part(lift @ b @ dag(lift)) for b in prior.blocks),
        dim_q=prior.dim_q,
        dim_a1=v.shape[0],
        block_labels=prior.block_labels,
        kind=prior.kind,
        metadata=dict(prior.metadata),
    )


def branch_mixture_smooth(
    joint: JointInstrument, rho0, alice_past, effect, cap: int = DEFAULT_ENUMERATION_CAP
) -> np.ndarray:
    """Trajectory-style smoothed state as an explicit mixture over true states.

    Weights each branch-conditioned state by the posterior probability of the
    corresponding bob record given the full observed record.  Serves as the
    independent reference for the register-based construction.
    """
    branches = enumerate_bob_branches(joint, rho0, alice_past, cap)
    e = np.asarray(effect, dtype=complex)
    joint_weights = []
    states = []
    for b in branches:
        joint_weights.append(max(float((b.operator @ e).trace().real), 0.0))
        states.append(b.operator / b.weight if b.weight > _WEIGHT_FLOOR else None)
    total = sum(joint_weights)
    if total <= _WEIGHT_FLOOR:
        raise ZeroProbabilityRecord("full record has vanishing probability")
    dim = np.asarray(rho0).shape[0]
    out = np.zeros((dim, dim), dtype=complex)
    for w, s in zip(joint_weights, states):
        if s is not None and w > 0.0:
            out += (w / total) * s
    return hermitian_part(out)
