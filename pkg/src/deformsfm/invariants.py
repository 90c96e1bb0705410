"""Affine-invariant barycentric coordinates from two or three views.

Every point of a configuration can be written against the first four
points as ``P = αP₀ + βP₁ + γP₂ + δP₃`` with ``α + β + γ + δ = 1``.
These coordinates survive any invertible affine map of the scene, which
makes them the natural "shape" description when the scene deforms
affinely between exposures.  This module recovers them

* from two views when the four basis points are known in 3D
  (:func:`invariants_known_basis`),
* from three views of a twice-applied deformation with no 3D knowledge
  at all (:func:`invariants_three_views`), and
* demonstrably *not* from two views alone
  (:func:`two_view_ambiguity_witness` constructs several exact but
  conflicting answers).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine_recovery import recover_structure, solve_repeated
from .epipolar import decompose_essential, estimate_essential, skew
from .errors import (
    AmbiguousDeformation,
    BasisDegenerate,
    InsufficientPoints,
    NoConvergence,
    ResidualTooHigh,
)
from .geometry import AffineDeformation, ScenePoint
from .simulation import CorrespondenceSet

MIN_POINTS = 8
"""Smallest configuration accepted by every recovery routine here.

The two-view deformation variety argument only needs seven points, but
the known-basis statement is made for eight; the stricter bound is
enforced uniformly.
"""

_FAMILY_GAP_TOL = 1e-8
_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class BasisDepths:
    """Depths of the four basis points along their first-view rays.

    ``P_j = λ_j q_j`` for unit rays ``q_j``; the reciprocals ``u_j``
    satisfy ``λ_j u_j = 1``.
    """

    depths: np.ndarray
    reciprocals: np.ndarray

    def __init__(self, depths, reciprocals=None):
        d = np.array(depths, dtype=float).reshape(4)
        if np.any(d == 0.0) or not np.all(np.isfinite(d)):
            raise BasisDegenerate("basis depths must be finite and nonzero")
        u = 1.0 / d if reciprocals is None else np.array(reciprocals, dtype=float).reshape(4)
        if np.max(np.abs(d * u - 1.0)) > 1e-6:
            raise ValueError("reciprocals do not invert the depths")
        object.__setattr__(self, "depths", d)
        object.__setattr__(self, "reciprocals", u)
        self.depths.setflags(write=False)
        self.reciprocals.setflags(write=False)


@dataclass(frozen=True)
class AffineInvariantCoords:
    """Barycentric coordinates of points 4..n−1 against points 0..3.

    Attributes:
        coords: ``(n-4, 3)`` array of ``(α, β, γ)`` per non-basis point.
        residuals: per-point norm of the linear system each row solved.
        basis_depths: the first-view depths of the basis actually used,
            when the computation produced them.
    """

    coords: np.ndarray
    residuals: np.ndarray
    basis_depths: BasisDepths | None = None

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(-1, 3)
        r = np.array(self.residuals, dtype=float).reshape(-1)
        if c.shape[0] != r.shape[0]:
            raise ValueError("one residual per coordinate row required")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "residuals", r)
        self.coords.setflags(write=False)
        self.residuals.setflags(write=False)

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def deltas(self) -> np.ndarray:
        """The fourth coordinate ``δ = 1 − α − β − γ`` of every point."""
        return 1.0 - self.coords.sum(axis=1)

    def full(self) -> np.ndarray:
        """``(n-4, 4)`` array of ``(α, β, γ, δ)`` rows, summing to one."""
        return np.column_stack([self.coords, self.deltas])

    def max_difference(self, other: "AffineInvariantCoords") -> float:
        return float(np.abs(self.coords - other.coords).max())


def _unit_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def _require_points(tracks: CorrespondenceSet, views: int) -> None:
    if tracks.n_views != views:
        raise ValueError(f"expected a {views}-view correspondence set, got {tracks.n_views}")
    if tracks.n_points < MIN_POINTS:
        raise InsufficientPoints(
            f"invariant recovery needs at least {MIN_POINTS} points, got {tracks.n_points}"
        )


def _basis_array(basis) -> np.ndarray:
    pts = list(basis)
    if len(pts) != 4:
        raise BasisDegenerate(f"exactly four basis points required, got {len(pts)}")
    arr = np.stack(
        [p.affine if isinstance(p, ScenePoint) else np.asarray(p, dtype=float) for p in pts]
    )
    m = np.column_stack([arr[0] - arr[3], arr[1] - arr[3], arr[2] - arr[3]])
    scale = max(float(np.abs(m).max()), 1e-300)
    if abs(np.linalg.det(m)) <= 1e-10 * scale**3:
        raise BasisDegenerate("basis points are affinely dependent")
    return arr


def _barycentric_rows(point: np.ndarray, basis: np.ndarray):
    """Cross-product rows tying an image ray to a barycentric combination.

    For a ray ``q`` and basis positions ``B_0..B_3`` (all expressed in
    the same view), the point ``αB₀ + βB₁ + γB₂ + (1−α−β−γ)B₃`` lies on
    the ray iff ``[q]ₓ (B₃ + Σ g_k (B_k − B₃)) = 0``.
    """
    s = skew(point)
    lhs = np.column_stack([s @ (basis[k] - basis[3]) for k in range(3)])
    rhs = -s @ basis[3]
    return lhs, rhs


def _solve_point(ray_basis_pairs) -> tuple[np.ndarray, float]:
    lhs = np.vstack([_barycentric_rows(q, b)[0] for q, b in ray_basis_pairs])
    rhs = np.concatenate([_barycentric_rows(q, b)[1] for q, b in ray_basis_pairs])
    g, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return g, float(np.linalg.norm(lhs @ g - rhs))


def basis_depths_from_rays(basis: np.ndarray, rays: np.ndarray) -> BasisDepths:
    """Depths ``λ_j`` with ``λ_j q_j = P_j`` for the four known basis points.

    Raises:
        BasisDegenerate: if a basis point does not lie on its ray.
    """
    depths = np.array([basis[j] @ rays[j] / (rays[j] @ rays[j]) for j in range(4)])
    for j in range(4):
        off = np.linalg.norm(depths[j] * rays[j] - basis[j])
        if off > 1e-6 * max(1.0, np.linalg.norm(basis[j])):
            raise BasisDegenerate(
                f"basis point {j} does not lie on its first-view ray "
                f"(offset {off:.2e}); tracks and basis disagree"
            )
    return BasisDepths(depths)


def invariants_known_basis(pairs: CorrespondenceSet, basis) -> AffineInvariantCoords:
    """Recover barycentric coordinates from two views and a known basis.

    The known 3D positions of the first four tracked points fix their
    depths along the first-view rays.  The essential matrix of the pair
    confines the deformation to a four-parameter family; re-threading
    the four known points through the second view pins the family member
    up to one global scale, which cancels in the final per-point solves.

    Args:
        pairs: two-view correspondences, first four tracks = the basis.
        basis: four affinely independent :class:`ScenePoint` (or array)
            positions of those tracks in the undeformed scene.

    Raises:
        InsufficientPoints: with fewer than 8 tracked points.
        BasisDegenerate: if the basis is affinely dependent or does not
            lie on the first-view rays.
        AmbiguousDeformation: if the family-resolution system has more
            than one small singular value, so no single member explains
            the data.
    """
    _require_points(pairs, 2)
    b = _basis_array(basis)
    q1 = _unit_rows(pairs.view_array(0))
    q2 = _unit_rows(pairs.view_array(1))
    lam = basis_depths_from_rays(b, q1)

    family = decompose_essential(estimate_essential((q1, q2)))
    t0, a0 = family.t0, family.A0
    # unknowns (c, w, τ): A = c·A0 + t0 wᵀ, t = τ·t0, homogeneous in all five
    m = np.zeros((12, 5))
    for j in range(4):
        s2 = skew(q2[j])
        pj = lam.depths[j] * q1[j]
        m[3 * j : 3 * j + 3, 0] = s2 @ (a0 @ pj)
        m[3 * j : 3 * j + 3, 1:4] = s2 @ np.outer(t0, pj)
        m[3 * j : 3 * j + 3, 4] = s2 @ t0
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[-2] <= _FAMILY_GAP_TOL * sv[0]:
        raise AmbiguousDeformation(
            "the deformation family is not pinned by the four basis points "
            f"(two near-zero singular values, ratio {sv[-2] / sv[0]:.1e})"
        )
    sol = np.linalg.svd(m)[2][-1]
    a = sol[0] * a0 + np.outer(t0, sol[1:4])
    t = sol[4] * t0

    first = np.array([lam.depths[j] * q1[j] for j in range(4)])
    second = (a @ first.T).T + t
    coords, residuals = [], []
    for i in range(4, pairs.n_points):
        g, res = _solve_point([(q1[i], first), (q2[i], second)])
        coords.append(g)
        residuals.append(res)
    return AffineInvariantCoords(np.array(coords), np.array(residuals), lam)


def invariants_three_views(
    tracks: CorrespondenceSet,
    *,
    n_starts: int = 64,
    rng: np.random.Generator | int | None = None,
) -> AffineInvariantCoords:
    """Recover barycentric coordinates from three views, no 3D input.

    Runs the repeated-deformation pipeline (essential estimation on view
    pairs (1,2), (1,3), (2,3), then the polynomial-system solver with
    sign disambiguation from the tracks), triangulates every point, and
    solves the per-point barycentric systems across all three views.

    Raises:
        ScaleDegenerate: if the views were not produced by one repeated
            deformation (the second and first essential matrices differ).
        ResidualTooHigh: if a per-point system is inconsistent.
        Solver errors of :func:`~deformsfm.affine_recovery.solve_repeated`
            are propagated unchanged.
    """
    _require_points(tracks, 3)
    v1, v2, v3 = (tracks.view_array(k) for k in range(3))
    e12 = estimate_essential((v1, v2))
    e13 = estimate_essential((v1, v3))
    e23 = estimate_essential((v2, v3))
    recovered = solve_repeated(
        e12, e13, e23, tracks=tracks, n_starts=n_starts, rng=rng
    )
    deformation = recovered.deformation

    structure = recover_structure(deformation, tracks)
    pts = np.stack([p.affine for p in structure.points])
    a, t = deformation.linear, deformation.translation
    first = pts[:4]
    second = (a @ first.T).T + t
    third = (a @ second.T).T + t

    q1, q2, q3 = (_unit_rows(v) for v in (v1, v2, v3))
    coords, residuals = [], []
    for i in range(4, tracks.n_points):
        g, res = _solve_point(
            [(q1[i], first), (q2[i], second), (q3[i], third)]
        )
        if res > _RESIDUAL_TOL * max(1.0, float(np.abs(first).max())):
            raise ResidualTooHigh(
                f"barycentric system for point {i} is inconsistent (residual {res:.2e})"
            )
        coords.append(g)
        residuals.append(res)
    lam = BasisDepths(structure.depths.depths[:4])
    return AffineInvariantCoords(np.array(coords), np.array(residuals), lam)


def two_view_ambiguity_witness(
    pairs: CorrespondenceSet, n_solutions: int = 2
) -> list[AffineInvariantCoords]:
    """Construct several exact yet different answers from two views only.

    Distinct members of the essential-matrix deformation family each
    re-thread the two views with zero residual but reconstruct different
    scenes, hence different barycentric coordinates.  Returns
    ``n_solutions`` coordinate sets with pairwise max-norm difference
    above 1e−3, every one backed by an exact reconstruction.

    Raises:
        CriticalConfiguration: propagated when the pair cannot pin an
            essential matrix (zero translation for instance).
        NoConvergence: if the data is so special that the family cannot
            produce the requested number of distinct answers.
    """
    _require_points(pairs, 2)
    q1 = _unit_rows(pairs.view_array(0))
    q2 = _unit_rows(pairs.view_array(1))
    family = decompose_essential(estimate_essential((q1, q2)))
    t0, a0 = family.t0, family.A0
    w_scale = 0.4 * float(np.linalg.norm(a0))

    def member(k: int) -> AffineDeformation:
        c = (1.0, 1.7, 0.6, 1.3, 0.8, 2.2, 0.45, 1.05)[k % 8]
        w = np.zeros(3)
        if k:
            w[(k - 1) % 3] = w_scale * (-1.0) ** (k // 3)
        return AffineDeformation(c * a0 + np.outer(t0, w), t0)

    picked: list[AffineInvariantCoords] = []
    for k in range(max(4 * n_solutions, 16)):
        try:
            d = member(k)
        except Exception:  # non-invertible member, skip
            continue
        a, t = d.linear, d.translation
        depths = np.zeros(len(q1))
        worst = 0.0
        ok = True
        for i in range(len(q1)):
            u = np.cross(q2[i], a @ q1[i])
            v = np.cross(q2[i], t)
            uu = float(u @ u)
            if uu <= 1e-20:
                ok = False
                break
            depths[i] = -float(u @ v) / uu
            worst = max(worst, float(np.linalg.norm(depths[i] * u + v)))
        if not ok or worst > 1e-10 * max(1.0, float(np.abs(a).max())) or np.any(depths == 0):
            continue
        pts = depths[:, None] * q1
        m = np.column_stack([pts[0] - pts[3], pts[1] - pts[3], pts[2] - pts[3]])
        if abs(np.linalg.det(m)) <= 1e-12 * max(float(np.abs(m).max()), 1e-300) ** 3:
            continue
        coords = np.linalg.solve(m, (pts[4:] - pts[3]).T).T
        candidate = AffineInvariantCoords(
            coords, np.full(len(q1) - 4, worst), BasisDepths(depths[:4])
        )
        if all(candidate.max_difference(p) > 1e-3 for p in picked):
            picked.append(candidate)
        if len(picked) == n_solutions:
            return picked
    raise NoConvergence(
        f"could not produce {n_solutions} distinct coordinate sets; "
        f"found {len(picked)} (data may be non-generic)"
    )
