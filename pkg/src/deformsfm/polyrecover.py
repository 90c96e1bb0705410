"""Joint recovery of a polynomial deformation and scene structure.

Three calibrated views of a point configuration deformed twice by the
same polynomial map pin down both the map and the per-point depths:
each track contributes the cross-product equations

    ``q2_i × Φ(α_i q1_i) = 0``        (second view)
    ``q3_i × Φ(Φ(α_i q1_i)) = 0``     (third view)

in the map coefficients and the first-view depths ``α``.  This module
solves that system by multi-start damped Gauss-Newton, counts the
distinct verified solutions, and — for two views — constructs the
explicit solution family showing why one deformation step is never
enough.

The cross-product equations see directions only, so any model with a
translation part carries the exact symmetry ``Φ ↦ s·Φ(·/s)``,
``α ↦ s·α``.  Solvers fix it with the model's natural gauge: the mean
of the free constant coefficients is pinned to one (models without free
constants fall back to pinning the mean first-view depth).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .epipolar import decompose_essential, estimate_essential
from .errors import (
    DegenerateDeformation,
    InsufficientPoints,
    NoConvergence,
)
from .geometry import (
    DepthAssignment,
    PolynomialDeformation,
    eval_monomial_jacobian,
    eval_monomials,
    exponents_for_degree,
    num_monomials,
)
from .polymatch import ModelSpec
from .simulation import CorrespondenceSet
from .solvers import cluster_vectors, lm_solve

__all__ = [
    "PolySolution",
    "min_points",
    "solve_poly_three_views",
    "two_view_insufficiency_witness",
]

MIN_DEPTH = 1e-8
"""Localization floor: iterates with any ``|α_i|`` below this are rejected."""

CLUSTER_TOL = 1e-4
"""Relative coefficient distance under which two solutions are one."""

_RESIDUAL_NORM_TOL = 1e-10
_COLLAPSE_TOL = 1e-6
_DISTINCT_TOL = 1e-3
_W_SCHEDULE = (0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0)
_DEPTH_GRID = np.linspace(0.05, 4.0, 160)


def _make_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(0 if rng is None else rng)


def _unit_rows(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass(frozen=True)
class PolySolution:
    """One verified joint solution (deformation, depths).

    Attributes:
        deformation: the recovered polynomial map, gauge-fixed as
            described in the module docstring.
        depths: first-view depths along the unit viewing rays.
        residual: largest cross-product equation residual in absolute
            value.
        n_solutions_found: how many distinct verified solutions the
            producing call found in total (1 means unique within the
            restart budget).
    """

    deformation: PolynomialDeformation
    depths: DepthAssignment
    residual: float
    n_solutions_found: int

    def __post_init__(self):
        if not np.isfinite(self.residual) or self.residual < 0.0:
            raise ValueError("residual must be a nonnegative finite real")
        if self.n_solutions_found < 1:
            raise ValueError("n_solutions_found must be positive")


def min_points(model: ModelSpec) -> int:
    """Fewest tracks that can make the three-view solution set finite.

    Each track contributes four independent equations (two per
    cross-product) against three new unknowns (one depth is shared), so
    ``⌈p/3⌉`` points are needed for ``p`` model parameters.
    """
    p = model.n_parameters
    return -(-p // 3)


# ---------------------------------------------------------------------------
# Residual builders
# ---------------------------------------------------------------------------


class _ModelSystem:
    """Residual/Jacobian builders for one model class on one track set.

    The full quadratic model dispatches to the shared kernels (the hot
    path of the repeated-map experiment); every other model runs a NumPy
    fallback built from the dense coefficient layout with free-column
    selection.  Both produce identical rows for the full quadratic, which
    the parity tests rely on.
    """

    def __init__(self, model: ModelSpec, q1, q2, q3=None):
        self.model = model
        self.q1 = _unit_rows(q1)
        self.q2 = _unit_rows(q2)
        self.q3 = None if q3 is None else _unit_rows(q3)
        self.n = self.q1.shape[0]
        self.p = model.n_parameters
        self.deg = model.degree
        self.n_mono = num_monomials(self.deg)
        self.c_fixed = model.coefficient_matrix(np.zeros(self.p))
        index = {e: i for i, e in enumerate(exponents_for_degree(self.deg))}
        free = [(c, index[e]) for c, e, v in model.pattern if v is None]
        self.free_cols = np.array(
            [c * self.n_mono + j for c, j in free], dtype=int
        )
        self.gauge_idx = np.array(
            [t for t, (_, j) in enumerate(free) if j == 0], dtype=int
        )
        self.kernel = model.key() == ModelSpec.full(2).key()

    # -- coefficient plumbing ------------------------------------------------

    def coeffs(self, theta: np.ndarray) -> np.ndarray:
        c = self.c_fixed.copy()
        c.ravel()[self.free_cols] = theta
        return c

    def depth_slice(self, n_theta_blocks: int = 1) -> slice:
        return slice(n_theta_blocks * self.p, None)

    def accept_full(self, u: np.ndarray) -> bool:
        return bool(np.abs(u[self.p :]).min() >= MIN_DEPTH)

    def accept_split(self, u: np.ndarray) -> bool:
        return bool(np.abs(u[2 * self.p :]).min() >= MIN_DEPTH)

    def _gauge(self, theta: np.ndarray, depths: np.ndarray, depth_scale: float):
        """Gauge residual and its gradients w.r.t. theta and depths."""
        g_th = np.zeros(self.p)
        g_al = np.zeros(depths.size)
        if self.gauge_idx.size:
            g_th[self.gauge_idx] = 1.0 / self.gauge_idx.size
            value = theta[self.gauge_idx].mean() - 1.0
        else:
            g_al[:] = 1.0 / (depths.size * depth_scale)
            value = depths.mean() / depth_scale - 1.0
        return value, g_th, g_al

    # -- full coupled system -------------------------------------------------

    def res_jac(self, u: np.ndarray, depth_scale: float = 1.0):
        """Residual and Jacobian of the coupled system at ``u = [θ, α]``."""
        if self.kernel and self.q3 is not None:
            return _backend.three_view_residual(u, self.q1, self.q2, self.q3)
        if self.kernel and self.q3 is None:
            return _backend.two_view_residual(u, self.q1, self.q2)
        return self._generic_res_jac(u, depth_scale)

    def _generic_res_jac(self, u: np.ndarray, depth_scale: float):
        n, p, nm = self.n, self.p, self.n_mono
        theta, al = u[:p], u[p:]
        c = self.coeffs(theta)
        pts = al[:, None] * self.q1
        mp = eval_monomials(pts, self.deg)
        q = mp @ c.T
        jp = np.einsum("km,nmx->nkx", c, eval_monomial_jacobian(pts, self.deg))
        dq_al = np.einsum("nkx,nx->nk", jp, self.q1)
        blocks = 2 if self.q3 is not None else 1
        rows = 3 * n * blocks + 1
        r = np.empty(rows)
        jac_c = np.zeros((rows, 3 * nm))
        jac_al = np.zeros((rows, n))
        r[: 3 * n] = np.cross(self.q2, q).ravel()
        for k in range(3):
            ek = np.zeros(3)
            ek[k] = 1.0
            cr = np.cross(self.q2, ek)
            jac_c[: 3 * n, k * nm : (k + 1) * nm] = (
                cr[:, :, None] * mp[:, None, :]
            ).reshape(3 * n, nm)
        cr_al = np.cross(self.q2, dq_al)
        for i in range(n):
            jac_al[3 * i : 3 * i + 3, i] = cr_al[i]
        if self.q3 is not None:
            mq = eval_monomials(q, self.deg)
            rr = mq @ c.T
            jq = np.einsum(
                "km,nmx->nkx", c, eval_monomial_jacobian(q, self.deg)
            )
            r[3 * n : 6 * n] = np.cross(self.q3, rr).ravel()
            for k in range(3):
                ek = np.zeros(3)
                ek[k] = 1.0
                blk = (
                    np.einsum("ni,nj->nij", jq[:, :, k], mp)
                    + ek[None, :, None] * mq[:, None, :]
                )
                crb = np.cross(
                    self.q3[:, None, :].repeat(nm, 1), blk.transpose(0, 2, 1)
                ).transpose(0, 2, 1)
                jac_c[3 * n : 6 * n, k * nm : (k + 1) * nm] = crb.reshape(
                    3 * n, nm
                )
            dr_al = np.einsum("nkx,nx->nk", jq, dq_al)
            cr3 = np.cross(self.q3, dr_al)
            for i in range(n):
                jac_al[3 * n + 3 * i : 3 * n + 3 * i + 3, i] = cr3[i]
        r[-1], g_th, g_al = self._gauge(theta, al, depth_scale)
        jac = np.hstack([jac_c[:, self.free_cols], jac_al])
        jac[-1, :p] = g_th
        jac[-1, p:] = g_al
        return r, jac

    # -- splitting continuation ---------------------------------------------

    def res_jac_split(self, u: np.ndarray, w: float, depth_scale: float = 1.0):
        if self.kernel:
            return _backend.split_residual(u, self.q1, self.q2, self.q3, w)
        return self._generic_split(u, w, depth_scale)

    def _generic_split(self, u: np.ndarray, w: float, depth_scale: float):
        n, p, nm = self.n, self.p, self.n_mono
        sw = np.sqrt(w)
        th1, th2 = u[:p], u[p : 2 * p]
        al, be = u[2 * p : 2 * p + n], u[2 * p + n :]
        c1, c2 = self.coeffs(th1), self.coeffs(th2)
        pts = al[:, None] * self.q1
        mid = be[:, None] * self.q2
        mp = eval_monomials(pts, self.deg)
        mw = eval_monomials(mid, self.deg)
        f1 = mp @ c1.T - mid
        r3 = np.cross(self.q3, mw @ c2.T)
        g1, g1_th, g1_al = self._gauge(th1, al, depth_scale)
        g2, g2_th, g2_be = self._gauge(th2, be, depth_scale)
        r = np.concatenate([f1.ravel(), r3.ravel(), [g1, g2], sw * (th1 - th2)])

        rows = 6 * n + 2 + p
        jac = np.zeros((rows, 2 * p + 2 * n))
        d1 = np.zeros((3 * n, 3 * nm))
        for k in range(3):
            d1[np.arange(n) * 3 + k, k * nm : (k + 1) * nm] = mp
        jac[: 3 * n, :p] = d1[:, self.free_cols]
        jp = np.einsum("km,nmx->nkx", c1, eval_monomial_jacobian(pts, self.deg))
        df_al = np.einsum("nkx,nx->nk", jp, self.q1)
        for i in range(n):
            jac[3 * i : 3 * i + 3, 2 * p + i] = df_al[i]
            jac[3 * i : 3 * i + 3, 2 * p + n + i] = -self.q2[i]
        d2 = np.zeros((3 * n, 3 * nm))
        for k in range(3):
            ek = np.zeros(3)
            ek[k] = 1.0
            cr = np.cross(self.q3, ek)
            d2[:, k * nm : (k + 1) * nm] = (cr[:, :, None] * mw[:, None, :]).reshape(
                3 * n, nm
            )
        jac[3 * n : 6 * n, p : 2 * p] = d2[:, self.free_cols]
        jw = np.einsum("km,nmx->nkx", c2, eval_monomial_jacobian(mid, self.deg))
        dr_be = np.cross(self.q3, np.einsum("nkx,nx->nk", jw, self.q2))
        for i in range(n):
            jac[3 * n + 3 * i : 3 * n + 3 * i + 3, 2 * p + n + i] = dr_be[i]
        jac[6 * n, :p] = g1_th
        jac[6 * n, 2 * p : 2 * p + n] = g1_al
        jac[6 * n + 1, p : 2 * p] = g2_th
        jac[6 * n + 1, 2 * p + n :] = g2_be
        jac[6 * n + 2 :, :p] = sw * np.eye(p)
        jac[6 * n + 2 :, p : 2 * p] = -sw * np.eye(p)
        return r, jac

    # -- alternation pieces --------------------------------------------------

    def theta_lsq(self, al: np.ndarray, be: np.ndarray) -> np.ndarray:
        """Least-squares map coefficients given both depth vectors."""
        if self.kernel and self.q3 is not None:
            design, rhs = _backend.theta_design(al, be, self.q1, self.q2, self.q3)
            return np.linalg.lstsq(design, rhs, rcond=None)[0]
        n, nm = self.n, self.n_mono
        blocks = 2 if self.q3 is not None else 1
        rows = 3 * n * blocks + (1 if self.gauge_idx.size else 0)
        dense = np.zeros((rows, 3 * nm))
        rhs = np.zeros(rows)
        mp = eval_monomials(al[:, None] * self.q1, self.deg)
        for k in range(3):
            dense[np.arange(n) * 3 + k, k * nm : (k + 1) * nm] = mp
        rhs[: 3 * n] = (be[:, None] * self.q2).ravel()
        if self.q3 is not None:
            mw = eval_monomials(be[:, None] * self.q2, self.deg)
            for k in range(3):
                ek = np.zeros(3)
                ek[k] = 1.0
                cr = np.cross(self.q3, ek)
                dense[3 * n : 6 * n, k * nm : (k + 1) * nm] = (
                    cr[:, :, None] * mw[:, None, :]
                ).reshape(3 * n, nm)
        design = dense[:, self.free_cols]
        rhs = rhs - dense @ self.c_fixed.ravel()
        if self.gauge_idx.size:
            design[-1, self.gauge_idx] = 1.0 / self.gauge_idx.size
            rhs[-1] = 1.0
        return np.linalg.lstsq(design, rhs, rcond=None)[0]

    def depth_scan(self, theta: np.ndarray, grid: np.ndarray):
        """Per-point grid search for the best depth pair given a map."""
        if self.kernel and self.q3 is not None:
            return _backend.depth_scan(theta, self.q1, self.q2, self.q3, grid)
        c = self.coeffs(theta)
        al = np.empty(self.n)
        be = np.empty(self.n)
        for i in range(self.n):
            pg = grid[:, None] * self.q1[i][None, :]
            qg = eval_monomials(pg, self.deg) @ c.T
            bg = qg @ self.q2[i]
            cost = ((qg - bg[:, None] * self.q2[i][None, :]) ** 2).sum(1)
            if self.q3 is not None:
                wg = bg[:, None] * self.q2[i][None, :]
                rg = eval_monomials(wg, self.deg) @ c.T
                cost = cost + (
                    np.cross(np.broadcast_to(self.q3[i], rg.shape), rg) ** 2
                ).sum(1)
            j = int(np.argmin(cost))
            al[i] = grid[j]
            be[i] = bg[j]
        return al, be

    # -- verification --------------------------------------------------------

    def cross_residual(self, u: np.ndarray) -> float:
        r, _ = self.res_jac(u)
        return float(np.abs(r[:-1]).max())

    def verify(self, u: np.ndarray, chirality: bool = True) -> bool:
        """Exact-solution check: tiny residual, live depths, no collapse.

        With ``chirality`` the solution must also keep every point at
        positive depth in every view, which is how simulated tracks are
        generated; witnesses for the two-view ambiguity drop that
        requirement because mirror members of the solution family are
        legitimate there.
        """
        r, _ = self.res_jac(u)
        if np.linalg.norm(r) > _RESIDUAL_NORM_TOL:
            return False
        al = u[self.p :]
        if np.abs(al).min() < MIN_DEPTH:
            return False
        if chirality and (al <= 0.0).any():
            return False
        c = self.coeffs(u[: self.p])
        pts = al[:, None] * self.q1
        q = eval_monomials(pts, self.deg) @ c.T
        images = [q]
        if self.q3 is not None:
            images.append(eval_monomials(q, self.deg) @ c.T)
        norms = [np.linalg.norm(img, axis=1) for img in images]
        top = max(1.0, *(nv.max() for nv in norms))
        if min(nv.min() for nv in norms) < _COLLAPSE_TOL * top:
            return False
        if chirality:
            if (np.einsum("ni,ni->n", q, self.q2) <= 0.0).any():
                return False
            if self.q3 is not None and (
                np.einsum("ni,ni->n", images[1], self.q3) <= 0.0
            ).any():
                return False
        return True


# ---------------------------------------------------------------------------
# Multi-start solve
# ---------------------------------------------------------------------------


def _draw_depths(rng: np.random.Generator, n: int, scale: float) -> np.ndarray:
    # Coarse scale sweep {0.5, 1, 2, 4} × scale crossed with Gaussian jitter.
    base = rng.choice(np.array([0.5, 1.0, 2.0, 4.0])) * 0.3 * scale
    return np.abs(rng.standard_normal(n) * 0.5 * scale) + base


def _draw_theta(rng: np.random.Generator, system: _ModelSystem) -> np.ndarray:
    theta = rng.standard_normal(system.p) * 0.7
    theta[system.gauge_idx] = 1.0
    return theta


def solve_poly_three_views(
    tracks: CorrespondenceSet,
    model: ModelSpec,
    *,
    n_starts: int = 256,
    rng: np.random.Generator | int | None = None,
    depth_scale: float = 1.5,
) -> PolySolution:
    """Recover a polynomial deformation applied twice, and all depths.

    Runs ``n_starts`` independent damped Gauss-Newton attempts on the
    stacked cross-product system, mixing three start strategies: the
    two-map splitting continuation (the coupling weight ramps up until
    the maps merge), depth-grid/coefficient alternation, and raw
    least-squares seeding.  Iterates whose depths fall below
    ``MIN_DEPTH`` in absolute value are rejected, which keeps the
    localization constraint ``α_i ≠ 0`` active without extra variables.

    With fewer than :func:`min_points` tracks — or with only two views —
    the equations cannot isolate finitely many solutions; the call still
    runs and reports the continuum it samples through
    ``n_solutions_found``.

    Args:
        tracks: two- or three-view correspondences of one configuration
            deformed once or twice by the same map.
        model: the deformation class to fit.
        n_starts: restart budget.
        rng: seed or generator for the starts (seeded default).
        depth_scale: coarse prior scale of the depth sweep; the default
            suits unit-gauge maps viewing order-one scenes.

    Returns:
        The lowest-residual verified solution; ``n_solutions_found``
        counts the distinct solutions over all restarts.

    Raises:
        InsufficientPoints: with fewer than two tracks.
        NoConvergence: if no start reaches a verified exact solution.
        DegenerateDeformation: for a model without free parameters.
    """
    if model.n_parameters == 0:
        raise DegenerateDeformation(
            f"model '{model.name}' has no free parameters to recover"
        )
    if tracks.n_points < 2:
        raise InsufficientPoints(
            f"need at least 2 tracks, got {tracks.n_points}"
        )
    gen = _make_rng(rng)
    q3 = tracks.view_array(2) if tracks.n_views == 3 else None
    system = _ModelSystem(model, tracks.view_array(0), tracks.view_array(1), q3)
    n, p = system.n, system.p
    grid = _DEPTH_GRID * depth_scale
    three = q3 is not None

    if three:
        n_split = (2 * n_starts) // 5
        n_alt = (2 * n_starts) // 5
    else:
        n_split = 0
        n_alt = (3 * n_starts) // 5
    candidates: list[tuple[np.ndarray, float]] = []

    def res_jac(u):
        return system.res_jac(u, depth_scale)

    def polish(u0) -> None:
        result = lm_solve(
            res_jac, u0, max_iter=150, accept=system.accept_full
        )
        if system.verify(result.u):
            candidates.append((result.u, result.cost))

    for k in range(n_starts):
        al0 = _draw_depths(gen, n, depth_scale)
        be0 = _draw_depths(gen, n, depth_scale)
        if k < n_split:
            x = np.concatenate(
                [_draw_theta(gen, system), _draw_theta(gen, system), al0, be0]
            )
            for w in _W_SCHEDULE:
                x = lm_solve(
                    lambda u, w=w: system.res_jac_split(u, w, depth_scale),
                    x,
                    max_iter=60,
                    accept=system.accept_split,
                ).u
            theta = 0.5 * (x[:p] + x[p : 2 * p])
            polish(np.concatenate([theta, x[2 * p : 2 * p + n]]))
        elif k < n_split + n_alt:
            theta = system.theta_lsq(al0, be0)
            for _ in range(3):
                al, be = system.depth_scan(theta, grid)
                theta = system.theta_lsq(al, be)
            polish(np.concatenate([theta, al]))
        else:
            theta = system.theta_lsq(al0, be0)
            polish(np.concatenate([theta, al0]))

    if not candidates:
        raise NoConvergence(
            f"no verified solution in {n_starts} restarts for model '{model.name}'"
        )
    keys = [u[:p] for u, _ in candidates]
    clusters = cluster_vectors(keys, CLUSTER_TOL)
    reps = [
        min((candidates[i] for i in members), key=lambda t: (t[1], tuple(t[0])))
        for members in clusters
    ]
    reps.sort(key=lambda t: (t[1], tuple(t[0])))
    best, _ = reps[0]
    return PolySolution(
        deformation=model.deformation(best[:p]),
        depths=DepthAssignment(best[p:]),
        residual=system.cross_residual(best),
        n_solutions_found=len(clusters),
    )


# ---------------------------------------------------------------------------
# Two-view insufficiency witness
# ---------------------------------------------------------------------------


_AFFINE_EXPS = exponents_for_degree(1)


def _witness_directions() -> list[np.ndarray]:
    axes = [np.eye(3)[j] for j in range(3)]
    diag = np.ones(3) / np.sqrt(3.0)
    dirs = axes + [diag]
    out = []
    for magnitude in (0.4, 0.8, 1.3):
        for d in dirs:
            out.append(magnitude * d)
            out.append(-magnitude * d)
    return out


def two_view_insufficiency_witness(
    pairs: CorrespondenceSet,
    model: ModelSpec,
    *,
    n_solutions: int = 4,
    rng: np.random.Generator | int | None = None,
    depth_scale: float = 1.5,
) -> list[PolySolution]:
    """Distinct exact solutions demonstrating two-view ambiguity.

    Splits a base solution ``Φ = ψ_A + ψ`` into its affine part and the
    rest, forms the virtual second view produced by ``ψ_A`` alone, and
    swaps ``ψ_A`` for other members of that view's essential-matrix
    decomposition family.  Each swapped map (with depths re-triangulated
    against the virtual view) is polished back onto the exact solution
    set of the real observations and verified to zero residual — so the
    returned deformations are genuinely interchangeable explanations of
    the two images.

    Args:
        pairs: exact two-view correspondences from the model class.
        model: deformation class; its affine block must be fully free.
        n_solutions: how many distinct solutions to return (≥ 2).
        rng: seed or generator for the base solve (seeded default).
        depth_scale: passed through to the base solve.

    Returns:
        At least ``n_solutions`` solutions, base solution first, pairwise
        distinct in their coefficients.

    Raises:
        DegenerateDeformation: if the model does not contain a fully
            free affine part (the replacement mechanism needs one).
        NoConvergence: if the base solve fails or too few distinct
            members survive polishing.
    """
    if pairs.n_views != 2:
        raise ValueError(
            f"expected a 2-view correspondence set, got {pairs.n_views} views"
        )
    free = {(c, e) for c, e, v in model.pattern if v is None}
    if not all((c, e) in free for c in range(3) for e in _AFFINE_EXPS):
        raise DegenerateDeformation(
            f"model '{model.name}' does not have a fully free affine part; "
            "the affine-replacement witness construction does not apply"
        )
    if n_solutions < 2:
        raise ValueError("n_solutions must be at least 2")

    gen = _make_rng(rng)
    system = _ModelSystem(model, pairs.view_array(0), pairs.view_array(1))
    n, p = system.n, system.p
    grid = _DEPTH_GRID * depth_scale

    base = None
    for _ in range(8):
        al0 = _draw_depths(gen, n, depth_scale)
        be0 = _draw_depths(gen, n, depth_scale)
        theta = system.theta_lsq(al0, be0)
        for _ in range(2):
            al, be = system.depth_scan(theta, grid)
            theta = system.theta_lsq(al, be)
        result = lm_solve(
            lambda u: system.res_jac(u, depth_scale),
            np.concatenate([theta, al]),
            max_iter=150,
            accept=system.accept_full,
        )
        if system.verify(result.u, chirality=False):
            base = result.u
            break
    if base is None:
        raise NoConvergence("no exact base solution found for the witness")

    index = {e: i for i, e in enumerate(exponents_for_degree(model.degree))}
    aff_param = {
        (c, e): model.parameter_index(c, e) for c in range(3) for e in _AFFINE_EXPS
    }
    c_base = system.coeffs(base[:p])
    linear = np.column_stack(
        [c_base[:, index[(1, 0, 0)]], c_base[:, index[(0, 1, 0)]], c_base[:, index[(0, 0, 1)]]]
    )
    translation = c_base[:, index[(0, 0, 0)]].copy()
    scene = base[p:, None] * system.q1
    virtual = scene @ linear.T + translation

    family = decompose_essential(estimate_essential((system.q1, virtual)))
    scale = np.linalg.norm(family.A0)

    solutions = [base]
    for direction in _witness_directions():
        if len(solutions) >= n_solutions:
            break
        member = family.member(1.0, scale * direction)
        cross = np.cross(virtual, system.q1 @ member.linear.T)
        cross_t = np.cross(virtual, member.translation)
        denom = np.einsum("ni,ni->n", cross, cross)
        if denom.min() < 1e-12 * max(1.0, denom.max()):
            continue
        lam = -np.einsum("ni,ni->n", cross, cross_t) / denom
        if np.abs(lam).min() < MIN_DEPTH:
            continue
        theta_k = base[:p].copy()
        for axis, e in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
            for c in range(3):
                theta_k[aff_param[(c, e)]] = member.linear[c, axis]
        for c in range(3):
            theta_k[aff_param[(c, (0, 0, 0))]] = member.translation[c]
        result = lm_solve(
            lambda u: system.res_jac(u, depth_scale),
            np.concatenate([theta_k, lam]),
            max_iter=200,
            accept=lambda u: np.abs(u[p:]).min() >= MIN_DEPTH,
        )
        if not system.verify(result.u, chirality=False):
            continue
        top = max(1.0, np.abs(result.u[:p]).max())
        if all(
            np.abs(result.u[:p] - s[:p]).max()
            > _DISTINCT_TOL * max(top, np.abs(s[:p]).max())
            for s in solutions
        ):
            solutions.append(result.u)

    if len(solutions) < n_solutions:
        raise NoConvergence(
            f"only {len(solutions)} distinct two-view solutions survived "
            f"polishing; {n_solutions} requested"
        )
    return [
        PolySolution(
            deformation=model.deformation(u[:p]),
            depths=DepthAssignment(u[p:]),
            residual=system.cross_residual(u),
            n_solutions_found=len(solutions),
        )
        for u in solutions
    ]
