"""Shared numerical machinery: damped least squares, multi-start driving,
solution clustering, and nullity estimation with an explicit spectral gap.

The polynomial systems in this package are solved numerically from many
random starts.  This module owns the convergence policy so that every
solver behaves the same way: Levenberg-style damping with adaptive
lambda, a cheap random-perturbation retry on stalls, and a deterministic
reduction of the collected solutions (lowest residual first, ties broken
by lexicographic parameter order).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import IllConditioned

__all__ = [
    "lm_solve",
    "multistart",
    "cluster_vectors",
    "nullity_with_gap",
    "equilibrate",
    "LMResult",
]

ResJac = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class LMResult:
    """Outcome of a single damped Gauss-Newton run."""

    u: np.ndarray
    cost: float
    converged: bool
    iterations: int


def lm_solve(
    res_jac: ResJac,
    u0: np.ndarray,
    max_iter: int = 120,
    cost_tol: float = 1e-28,
    step_tol: float = 1e-14,
    lam0: float = 1e-3,
    accept: Callable[[np.ndarray], bool] | None = None,
) -> LMResult:
    """Minimize ``‖r(u)‖²`` by Levenberg-damped Gauss-Newton.

    Args:
        res_jac: maps ``u`` to ``(residual vector, Jacobian)``.
        u0: starting point.
        max_iter: outer iteration budget.
        cost_tol: stop when the squared residual falls below this.
        step_tol: stop when the relative step length falls below this.
        lam0: initial damping.
        accept: optional iterate filter; rejected iterates are treated as
            non-improving (used to keep localization variables away from
            zero).

    Returns:
        LMResult; ``converged`` means a stopping criterion was met rather
        than the damping exploding or the budget running out.
    """
    u = np.asarray(u0, dtype=float).copy()
    if accept is not None and not accept(u):
        return LMResult(u, np.inf, False, 0)
    r, jac = res_jac(u)
    cost = float(r @ r)
    lam = lam0
    for it in range(max_iter):
        g = jac.T @ r
        h = jac.T @ jac
        diag = np.maximum(np.diag(h), 1e-12)
        improved = False
        for _ in range(30):
            try:
                step = np.linalg.solve(h + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            u_new = u + step
            if accept is not None and not accept(u_new):
                lam *= 10.0
                if lam > 1e14:
                    break
                continue
            r_new, jac_new = res_jac(u_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                u, r, jac, cost = u_new, r_new, jac_new, cost_new
                lam = max(lam * 0.3, 1e-12)
                improved = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not improved:
            return LMResult(u, cost, cost < cost_tol, it + 1)
        if cost < cost_tol:
            return LMResult(u, cost, True, it + 1)
        if np.linalg.norm(step) <= step_tol * (1.0 + np.linalg.norm(u)):
            return LMResult(u, cost, True, it + 1)
    return LMResult(u, cost, False, max_iter)


def multistart(
    res_jac: ResJac,
    n_unknowns: int,
    rng: np.random.Generator,
    n_starts: int = 64,
    scale: float = 1.0,
    accept: Callable[[np.ndarray], bool] | None = None,
    verify_cost: float = 1e-16,
    max_iter: int = 120,
    stall_retries: int = 1,
    starts: Iterable[np.ndarray] | None = None,
) -> list[tuple[np.ndarray, float]]:
    """Collect verified minima of ``‖r(u)‖²`` from random starts.

    Starting points are unit Gaussian draws scaled by ``scale`` (plus any
    explicit ``starts`` provided, which are tried first).  A start whose
    run stalls is retried once from a small random perturbation of its
    final iterate.  The returned list holds every run that reached
    ``cost < verify_cost``, sorted by cost then lexicographically, so the
    reduction is deterministic regardless of scheduling.
    """
    found: list[tuple[np.ndarray, float]] = []
    initial: list[np.ndarray] = [np.asarray(s, dtype=float) for s in (starts or [])]
    for k in range(n_starts):
        if k < len(initial):
            u0 = initial[k]
        else:
            u0 = rng.normal(size=n_unknowns) * scale
        result = lm_solve(res_jac, u0, max_iter=max_iter, accept=accept)
        retries = stall_retries
        while not result.converged and retries > 0 and np.isfinite(result.cost):
            bump = rng.normal(size=n_unknowns) * (0.05 * scale)
            result = lm_solve(res_jac, result.u + bump, max_iter=max_iter, accept=accept)
            retries -= 1
        if result.cost < verify_cost:
            found.append((result.u, result.cost))
    found.sort(key=lambda item: (item[1], tuple(item[0])))
    return found


def cluster_vectors(
    keys: Sequence[np.ndarray], tol: float
) -> list[list[int]]:
    """Greedy clustering of key vectors by relative max-norm distance.

    Two keys belong to the same cluster when
    ``max|k1 - k2| ≤ tol · max(1, max|k1|, max|k2|)``.  Returns clusters
    as lists of indices into ``keys``, in first-seen order.
    """
    clusters: list[list[int]] = []
    reps: list[np.ndarray] = []
    for i, key in enumerate(keys):
        key = np.asarray(key, dtype=float).ravel()
        placed = False
        for c, rep in enumerate(reps):
            denom = max(1.0, np.abs(rep).max(), np.abs(key).max())
            if np.abs(key - rep).max() <= tol * denom:
                clusters[c].append(i)
                placed = True
                break
        if not placed:
            clusters.append([i])
            reps.append(key)
    return clusters


def equilibrate(matrix: np.ndarray, passes: int = 3) -> np.ndarray:
    """Alternating row/column norm scaling (nullity preserving).

    Left and right diagonal scalings change the singular values but not
    the rank, so the scaled matrix gives much cleaner spectral gaps when
    the original mixes widely different magnitudes.
    """
    m = np.array(matrix, dtype=float, copy=True)
    for _ in range(passes):
        rn = np.linalg.norm(m, axis=1)
        rn[rn == 0] = 1.0
        m /= rn[:, None]
        cn = np.linalg.norm(m, axis=0)
        cn[cn == 0] = 1.0
        m /= cn[None, :]
    return m


def nullity_with_gap(
    matrix: np.ndarray,
    rel_tol: float = 1e-8,
    gap: float = 1e4,
    equilibrate_first: bool = True,
) -> tuple[int, np.ndarray]:
    """Numerical nullity with an explicit spectral-gap certificate.

    Args:
        matrix: the Jacobian (or constraint matrix) to analyze.
        rel_tol: singular values below ``rel_tol · σ_max`` count as zero.
        gap: required ratio between the smallest kept and largest
            discarded singular value.
        equilibrate_first: apply :func:`equilibrate` before the SVD.

    Returns:
        ``(nullity, singular_values)`` of the (possibly equilibrated)
        matrix, singular values descending.

    Raises:
        IllConditioned: when the kept/discarded ratio is below ``gap``,
            i.e. no trustworthy spectral separation exists.
    """
    m = equilibrate(matrix) if equilibrate_first else np.asarray(matrix, dtype=float)
    s = np.linalg.svd(m, compute_uv=False)
    ncols = m.shape[1]
    sv = np.zeros(ncols)
    sv[: s.size] = s
    top = max(sv[0], 1e-300)
    nullity = int(np.sum(sv < rel_tol * top))
    if nullity > 0:
        kept_min = sv[ncols - nullity - 1] if nullity < ncols else top
        disc_max = max(sv[ncols - nullity], 1e-300)
        if kept_min / disc_max < gap:
            raise IllConditioned(
                f"no clear spectral gap: kept {kept_min:.3e} vs discarded {disc_max:.3e} "
                f"(ratio {kept_min / disc_max:.1e} < {gap:.0e})"
            )
    return nullity, sv
