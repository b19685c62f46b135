"""Dense complex Hermitian linear algebra for small Hilbert spaces.

All operators are plain complex ``numpy`` arrays.  Functions here are pure,
never mutate their inputs, and are meant for dimensions up to a few dozen;
everything goes through full eigendecompositions.

Conventions fixed project-wide:

* tensor products are ordered system-first (``Q`` is the slowest index),
* entropies are in nats,
* eigenvalues in ``[-PSD_CLAMP, 0]`` are treated as round-off zeros,
* the support of a PSD matrix is the span of eigenvectors with eigenvalue
  above ``RANK_TOL`` times the largest one.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidDistribution, InvalidFactorization, InvalidMatrix, NotPSD

HERMITIAN_TOL = 1e-12
PSD_CLAMP = 1e-10
PSD_HARD = 1e-6
RANK_TOL = 1e-10


def dag(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return m.conj().T


def hermitian_part(m: np.ndarray) -> np.ndarray:
    """Return ``(m + m†)/2``."""
    return (m + m.conj().T) / 2


def as_square(m, name: str = "matrix") -> np.ndarray:
    """Coerce to a square complex array with finite entries."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidMatrix(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(float))):
        raise InvalidMatrix(f"{name} has non-finite entries")
    return a


def as_hermitian(m, name: str = "matrix", tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate Hermiticity within ``tol`` (relative) and return the symmetrized matrix."""
    a = as_square(m, name)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.conj().T).max(initial=0.0) > tol * scale:
        raise InvalidMatrix(f"{name} is not Hermitian within {tol:g}")
    return hermitian_part(a)


def as_density(m, name: str = "state") -> np.ndarray:
    """Validate a density operator: Hermitian, eigenvalues >= -1e-10, unit trace."""
    a = as_hermitian(m, name)
    tr = a.trace().real
    if abs(tr - 1.0) > PSD_CLAMP:
        raise InvalidMatrix(f"{name} has trace {tr!r}, expected 1")
    w = np.linalg.eigvalsh(a)
    if w[0] < -PSD_CLAMP:
        raise NotPSD(f"{name} has eigenvalue {w[0]:g} below -{PSD_CLAMP:g}")
    return a


def as_effect(m, name: str = "effect") -> np.ndarray:
    """Validate an effect: Hermitian and PSD up to round-off, no trace constraint."""
    a = as_hermitian(m, name)
    w = np.linalg.eigvalsh(a)
    scale = max(1.0, float(w[-1]) if w.size else 1.0)
    if w.size and w[0] < -PSD_CLAMP * scale:
        raise NotPSD(f"{name} has eigenvalue {w[0]:g}, not PSD")
    return a


def herm_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, v)`` with eigenvalues ``w`` in descending order and
    eigenvectors as columns of the unitary ``v``, so ``m = v @ diag(w) @ v†``.
    Each eigenvector is phase-fixed so that its first component of
    non-negligible magnitude is real and positive, making the output
    deterministic (away from degeneracies).
    """
    a = as_hermitian(m)
    w, v = np.linalg.eigh(a)
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    for k in range(v.shape[1]):
        col = v[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        j = idx[0] if idx.size else 0
        phase = col[j] / abs(col[j]) if abs(col[j]) > 0 else 1.0
        v[:, k] = col / phase
    return w, v


def psd_sqrt(m) -> np.ndarray:
    """Principal square root of a PSD Hermitian matrix.

    Eigenvalues in ``[-PSD_HARD, 0]`` are clamped to zero; anything more
    negative raises :class:`NotPSD`.  Eigenvalues below ``1e-14`` of the
    largest are zeroed as well: they are representation noise on rank
    deficient inputs and the square root would amplify them to ``~1e-7``.
    """
    w, v = herm_eig(m)
    if w.size and w[-1] < -PSD_HARD:
        raise NotPSD(f"eigenvalue {w[-1]:g} below -{PSD_HARD:g}")
    top = float(w[0]) if w.size else 0.0
    w = np.where(w > 1e-14 * top, w, 0.0)
    s = np.sqrt(np.clip(w, 0.0, None))
    return hermitian_part((v * s) @ dag(v))


def support_inv_sqrt(m) -> np.ndarray:
    """Inverse square root restricted to the support.

    Eigenvalues at or below ``RANK_TOL`` times the largest eigenvalue map to
    zero, the rest to ``lambda**-0.5``.  The zero matrix maps to itself.
    """
    w, v = herm_eig(m)
    if w.size and w[-1] < -PSD_HARD:
        raise NotPSD(f"eigenvalue {w[-1]:g} below -{PSD_HARD:g}")
    top = float(w[0]) if w.size else 0.0
    if top <= 0.0:
        return np.zeros_like(np.asarray(m, dtype=complex))
    cut = RANK_TOL * top
    inv = np.where(w > cut, 1.0 / np.sqrt(np.clip(w, cut, None)), 0.0)
    return hermitian_part((v * inv) @ dag(v))


def support_projector(m) -> np.ndarray:
    """Orthogonal projector onto the support of a PSD matrix."""
    w, v = herm_eig(m)
    top = float(w[0]) if w.size else 0.0
    if top <= 0.0:
        return np.zeros_like(np.asarray(m, dtype=complex))
    keep = w > RANK_TOL * top
    vk = v[:, keep]
    return hermitian_part(vk @ dag(vk))


def tensor(a, b) -> np.ndarray:
    """Kronecker product with the first factor slowest (system-first ordering)."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_trace(m, dims: tuple[int, int], keep: str) -> np.ndarray:
    """Partial trace of an operator on a bipartite space.

    Parameters
    ----------
    m : array on the product space, with the first factor slowest.
    dims : ``(d_q, d_a)`` dimensions of the two factors.
    keep : ``"Q"`` to trace out the second factor, ``"A"`` for the first.
    """
    d_q, d_a = int(dims[0]), int(dims[1])
    a = np.asarray(m, dtype=complex)
    if d_q <= 0 or d_a <= 0 or a.shape != (d_q * d_a, d_q * d_a):
        raise InvalidFactorization(
            f"matrix of shape {a.shape} does not factor as ({d_q}, {d_a})"
        )
    r = a.reshape(d_q, d_a, d_q, d_a)
    if keep == "Q":
        return np.einsum("iaja->ij", r)
    if keep == "A":
        return np.einsum("iaib->ab", r)
    raise InvalidFactorization(f"keep must be 'Q' or 'A', got {keep!r}")


def purify(rho) -> np.ndarray:
    """Canonical purification of a density operator.

    Returns the vector ``sum_k sqrt(w_k) |v_k>|k>`` on ``Q (x) A`` where
    ``(w_k, v_k)`` are the eigenpairs of ``rho`` in descending order and the
    ancilla dimension equals the rank.  The eigenvector phase convention of
    :func:`herm_eig` makes the output deterministic.
    """
    a = as_density(rho)
    w, v = herm_eig(a)
    top = float(w[0])
    rank = int(np.count_nonzero(w > RANK_TOL * top))
    rank = max(rank, 1)
    amps = np.sqrt(np.clip(w[:rank], 0.0, None))
    # psi[i * rank + k] = sqrt(w_k) v_k[i]: row-major reshape gives Q-first layout
    return (v[:, :rank] * amps).reshape(-1)


def entropy_vn(rho) -> float:
    """Von Neumann entropy in nats, with round-off eigenvalues clamped to zero."""
    a = as_hermitian(rho)
    w = np.clip(np.linalg.eigvalsh(a), 0.0, None)
    w = w[w > 0.0]
    return max(0.0, float(-np.sum(w * np.log(w))))


def entropy_shannon(p) -> float:
    """Shannon entropy in nats of a probability vector.

    Entries below ``-1e-10`` or a total differing from one by more than
    ``1e-8`` raise :class:`InvalidDistribution`; round-off is tolerated and
    normalized away.
    """
    q = np.asarray(p, dtype=float)
    if q.ndim != 1:
        raise InvalidDistribution(f"expected a vector, got shape {q.shape}")
    if q.size and q.min() < -PSD_CLAMP:
        raise InvalidDistribution(f"negative entry {q.min():g}")
    total = q.sum()
    if abs(total - 1.0) > 1e-8:
        raise InvalidDistribution(f"probabilities sum to {total!r}")
    q = np.clip(q, 0.0, None) / total
    q = q[q > 0.0]
    return max(0.0, float(-np.sum(q * np.log(q))))


def trace_norm(m) -> float:
    """Sum of singular values."""
    return float(np.linalg.svd(np.asarray(m, dtype=complex), compute_uv=False).sum())


def purity(rho) -> float:
    """``Tr[rho^2]``."""
    a = np.asarray(rho, dtype=complex)
    return float((a @ a).trace().real)


def fidelity(a, b) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2`` between density operators."""
    sa = psd_sqrt(a)
    w = np.clip(np.linalg.eigvalsh(hermitian_part(sa @ np.asarray(b, dtype=complex) @ sa)), 0.0, None)
    return float(np.sqrt(w).sum() ** 2)
