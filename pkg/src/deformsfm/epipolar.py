"""Essential-matrix estimation and decomposition for affine deformations.

For an affinely deforming point set viewed by a fixed pinhole camera, the
matching constraint between two views is bilinear: ``q'ᵀ E q = 0`` with
``E ≡ [t]ₓ A`` up to scale.  This module estimates ``E`` linearly from at
least eight correspondences, decomposes it into the four-parameter family
of compatible affine deformations, and detects critical configurations
where the linear system admits more than one essential matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import CriticalConfiguration, InsufficientPoints, RankDeficient
from .geometry import AffineDeformation, ImagePoint, skew
from .simulation import CorrespondenceSet

__all__ = [
    "EssentialMatrix",
    "DecompositionFamily",
    "CriticalReport",
    "estimate_essential",
    "decompose_essential",
    "epipolar_residual",
    "epipolar_residuals",
    "critical_check",
    "essential_from_deformation",
]

#: Default relative singular-value threshold for nullspace detection.
SV_TOL = 1e-7


@dataclass(frozen=True)
class EssentialMatrix:
    """A 3×3 essential matrix, defined up to scale.

    Attributes:
        matrix: the 3×3 array (unnormalized).
        residual: algebraic estimation residual, 0 for exact constructions.
    """

    matrix: np.ndarray
    residual: float = 0.0

    def __init__(self, matrix: Iterable[float], residual: float = 0.0):
        m = np.array(matrix, dtype=float, copy=True).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise ValueError("essential matrix must be finite")
        if not np.any(m):
            raise RankDeficient("essential matrix must be nonzero")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "residual", float(residual))
        self.matrix.setflags(write=False)

    def normalized(self) -> np.ndarray:
        """Frobenius-unit-norm representative."""
        return self.matrix / np.linalg.norm(self.matrix)

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)


def essential_from_deformation(deformation: AffineDeformation) -> EssentialMatrix:
    """The exact essential matrix ``[t]ₓ A`` of an affine deformation."""
    return EssentialMatrix(skew(deformation.translation) @ deformation.linear)


@dataclass(frozen=True)
class DecompositionFamily:
    """The four-parameter family of deformations compatible with one essential matrix.

    Every affine deformation with essential matrix proportional to ``E``
    has the form ``A = (1/λ)(A0 + t0 vᵀ)``, ``t = λ t0`` for some scale
    ``λ ≠ 0`` and some 3-vector ``v``.

    Attributes:
        t0: unit translation direction (first nonzero component positive).
        A0: the particular solution ``-[t0]ₓ E``.
    """

    t0: np.ndarray
    A0: np.ndarray

    def __init__(self, t0: Iterable[float], A0: Iterable[float]):
        t = np.array(t0, dtype=float, copy=True).reshape(3)
        a = np.array(A0, dtype=float, copy=True).reshape(3, 3)
        object.__setattr__(self, "t0", t)
        object.__setattr__(self, "A0", a)
        self.t0.setflags(write=False)
        self.A0.setflags(write=False)

    def member(self, lam: float, v: Iterable[float]) -> AffineDeformation:
        """The family member with parameters ``(λ, v)``."""
        if lam == 0.0:
            raise ValueError("family scale must be nonzero")
        v = np.asarray(v, dtype=float).reshape(3)
        return AffineDeformation(
            (self.A0 + np.outer(self.t0, v)) / lam, lam * self.t0
        )

    def fit(self, deformation: AffineDeformation) -> tuple[float, np.ndarray, float]:
        """Best-fit parameters ``(λ, v)`` for a candidate deformation.

        Returns:
            ``(λ, v, residual)`` where the residual is the relative
            max-norm misfit of ``λA - A0 - t0 vᵀ`` and ``t - λ t0``.
        """
        lam = float(self.t0 @ deformation.translation)
        v = (lam * deformation.linear - self.A0).T @ self.t0
        r_lin = lam * deformation.linear - self.A0 - np.outer(self.t0, v)
        r_t = deformation.translation - lam * self.t0
        scale = max(np.abs(self.A0).max(), abs(lam), 1e-300)
        residual = max(np.abs(r_lin).max(), np.abs(r_t).max()) / scale
        return lam, v, residual


@dataclass(frozen=True)
class CriticalReport:
    """Evidence about uniqueness of the linear essential-matrix estimate.

    Attributes:
        nullspace_dim: numerical nullspace dimension of the stacked
            constraint matrix (1 = unique essential matrix).
        singular_values: descending singular values of that matrix,
            padded with zeros to length 9.
        image_residuals: per-point values ``|q'ᵀ E₂ q|`` for each extra
            nullspace generator, shape ``(nullspace_dim - 1, n)``.
        quadric_residuals: per-point values of the alternative-solution
            quadric ``Pᵀ [A|t]ᵀ E₂ [I|0] P`` when ground truth was
            supplied, else ``None``.
        generators: the extra nullspace generators as 3×3 matrices.
    """

    nullspace_dim: int
    singular_values: np.ndarray
    image_residuals: np.ndarray
    quadric_residuals: np.ndarray | None
    generators: tuple[np.ndarray, ...]

    @property
    def critical(self) -> bool:
        return self.nullspace_dim >= 2


def _as_pair_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, CorrespondenceSet):
        if pairs.n_views != 2:
            raise ValueError(
                f"expected a 2-view correspondence set, got {pairs.n_views} views"
            )
        return pairs.view_array(0), pairs.view_array(1)
    q1, q2 = pairs
    q1 = np.asarray(q1, dtype=float).reshape(-1, 3)
    q2 = np.asarray(q2, dtype=float).reshape(-1, 3)
    if q1.shape != q2.shape:
        raise ValueError("views must contain the same number of points")
    return q1, q2


def _hartley_transform(q: np.ndarray) -> np.ndarray:
    """Similarity transform sending inhomogeneous points to centroid 0, RMS √2.

    Falls back to pure ray rescaling when some third coordinate is too
    small for safe dehomogenization.
    """
    w = q[:, 2]
    if np.min(np.abs(w)) < 1e-9 * np.max(np.abs(q)):
        scale = 1.0 / max(np.linalg.norm(q, axis=1).mean(), 1e-300)
        return np.diag([scale, scale, scale])
    xy = q[:, :2] / w[:, None]
    centroid = xy.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((xy - centroid) ** 2, axis=1)))
    s = np.sqrt(2.0) / max(rms, 1e-300)
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def _design_matrix(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Stack the rows ``q2ᵢ ⊗ q1ᵢ`` so that ``M · vec(E) = 0`` row-major."""
    return np.einsum("ij,ik->ijk", q2, q1).reshape(len(q1), 9)


def _nullspace_info(
    q1: np.ndarray, q2: np.ndarray, sv_tol: float
) -> tuple[np.ndarray, np.ndarray, int, np.ndarray, np.ndarray]:
    """Hartley-normalized design-matrix SVD.

    Returns ``(sv_padded, candidates, nullspace_dim, T1, T2)`` where
    ``candidates`` holds the de-normalized 3×3 nullspace generators in
    ascending singular-value order (smallest first).
    """
    t1 = _hartley_transform(q1)
    t2 = _hartley_transform(q2)
    q1n = q1 @ t1.T
    q2n = q2 @ t2.T
    m = _design_matrix(q1n, q2n)
    _, s, vt = np.linalg.svd(m, full_matrices=True)
    sv = np.zeros(9)
    sv[: s.size] = s
    dim = int(np.sum(sv < sv_tol * max(sv[0], 1e-300)))
    gens = []
    for k in range(9 - 1, 9 - 1 - max(dim, 1), -1):
        e_norm = vt[k].reshape(3, 3)
        e = t2.T @ e_norm @ t1
        gens.append(e / np.linalg.norm(e))
    return sv, np.array(gens), dim, t1, t2


def estimate_essential(
    pairs, sv_tol: float = SV_TOL
) -> EssentialMatrix:
    """Linear eight-point estimation of the essential matrix.

    Args:
        pairs: a 2-view :class:`CorrespondenceSet`, or a tuple of two
            ``(n, 3)`` arrays of homogeneous image points.
        sv_tol: relative singular-value threshold used to detect extra
            nullspace directions.

    Returns:
        The minimal-residual essential matrix, projected to rank 2 by
        zeroing its smallest singular value.

    Raises:
        InsufficientPoints: with fewer than 8 pairs.
        CriticalConfiguration: when the design matrix has two or more
            near-zero singular values, so the essential matrix is not
            unique (caused by points on a critical quadric, or by zero
            translation, which makes every compatible matrix degenerate).
    """
    q1, q2 = _as_pair_arrays(pairs)
    n = q1.shape[0]
    if n < 8:
        raise InsufficientPoints(f"essential estimation needs at least 8 pairs, got {n}")
    sv, gens, dim, _, _ = _nullspace_info(q1, q2, sv_tol)
    if dim >= 2:
        raise CriticalConfiguration(
            f"essential matrix is not unique: design-matrix nullspace has dimension {dim} "
            "(critical quadric configuration or zero translation); "
            "run critical_check for a detailed report"
        )
    e = gens[0]
    u, s, vt = np.linalg.svd(e)
    if s[1] < 1e-12 * s[0]:
        raise CriticalConfiguration(
            "estimated essential matrix is rank deficient (near-rank-1); "
            "the correspondence geometry is degenerate"
        )
    e2 = (u * np.array([s[0], s[1], 0.0])) @ vt
    e2 /= np.linalg.norm(e2)
    # Algebraic residual on the original (unnormalized) constraint rows.
    m = _design_matrix(q1 / np.linalg.norm(q1, axis=1)[:, None],
                       q2 / np.linalg.norm(q2, axis=1)[:, None])
    residual = float(np.max(np.abs(m @ e2.ravel())))
    return EssentialMatrix(e2, residual=residual)


def decompose_essential(essential: EssentialMatrix) -> DecompositionFamily:
    """Split an essential matrix into its deformation family.

    The translation direction ``t0`` is the unit left-null vector of
    ``E`` with its first nonzero component positive, and
    ``A0 = -[t0]ₓ E`` satisfies ``[t0]ₓ A0 = E`` exactly.

    Raises:
        RankDeficient: if ``E`` has rank 1 or less.
    """
    e = essential.matrix
    u, s, _ = np.linalg.svd(e)
    if s[1] < 1e-10 * s[0]:
        raise RankDeficient("cannot decompose an essential matrix of rank <= 1")
    t0 = u[:, 2]
    for comp in t0:
        if abs(comp) > 1e-12:
            if comp < 0:
                t0 = -t0
            break
    a0 = -skew(t0) @ e
    return DecompositionFamily(t0, a0)


def epipolar_residual(essential: EssentialMatrix | np.ndarray, q, qp) -> float:
    """The normalized bilinear residual ``|q'ᵀ E q|``.

    All three inputs are scaled to unit norm first, so the value is
    comparable across data sets.
    """
    e = essential.normalized() if isinstance(essential, EssentialMatrix) else (
        np.asarray(essential, dtype=float) / np.linalg.norm(essential)
    )
    qv = q.coords if isinstance(q, ImagePoint) else np.asarray(q, dtype=float)
    qpv = qp.coords if isinstance(qp, ImagePoint) else np.asarray(qp, dtype=float)
    qv = qv / np.linalg.norm(qv)
    qpv = qpv / np.linalg.norm(qpv)
    return float(abs(qpv @ e @ qv))


def epipolar_residuals(essential: EssentialMatrix | np.ndarray, pairs) -> np.ndarray:
    """Vectorized :func:`epipolar_residual` over a correspondence set."""
    q1, q2 = _as_pair_arrays(pairs)
    e = essential.normalized() if isinstance(essential, EssentialMatrix) else (
        np.asarray(essential, dtype=float) / np.linalg.norm(essential)
    )
    q1 = q1 / np.linalg.norm(q1, axis=1)[:, None]
    q2 = q2 / np.linalg.norm(q2, axis=1)[:, None]
    return np.abs(np.einsum("ij,jk,ik->i", q2, e, q1))


def critical_check(
    pairs,
    ground_truth: AffineDeformation | None = None,
    scene=None,
    sv_tol: float = SV_TOL,
) -> CriticalReport:
    """Report the numerical nullspace of the essential-matrix system.

    A nullspace dimension of 1 certifies a unique (up to scale) linear
    solution; dimension ≥ 2 flags a critical configuration.  For every
    extra generator ``E₂`` the report carries the per-point image
    residuals ``|q'ᵀ E₂ q|``; when the true deformation and scene are
    supplied it also evaluates the quadric ``Pᵀ [A|t]ᵀ E₂ [I|0] P`` whose
    vanishing characterizes critical point configurations.

    Args:
        pairs: 2-view correspondences (never raises on < 8 points; the
            nullspace is then trivially high dimensional).
        ground_truth: the true deformation, enabling quadric evaluation.
        scene: the undeformed scene (required with ``ground_truth``).
        sv_tol: relative singular-value threshold.
    """
    q1, q2 = _as_pair_arrays(pairs)
    sv, gens, dim, _, _ = _nullspace_info(q1, q2, sv_tol)
    extra = tuple(gens[1:dim]) if dim >= 2 else ()
    q1u = q1 / np.linalg.norm(q1, axis=1)[:, None]
    q2u = q2 / np.linalg.norm(q2, axis=1)[:, None]
    if extra:
        image_res = np.array(
            [np.abs(np.einsum("ij,jk,ik->i", q2u, e2, q1u)) for e2 in extra]
        )
    else:
        image_res = np.zeros((0, q1.shape[0]))
    quadric_res = None
    if ground_truth is not None and extra:
        if scene is None:
            raise ValueError("quadric evaluation needs the undeformed scene")
        pts = scene.array() if hasattr(scene, "array") else np.asarray(scene, dtype=float)
        hom = np.hstack([pts, np.ones((len(pts), 1))])
        proj = np.hstack([ground_truth.linear, ground_truth.translation[:, None]])
        canon = np.hstack([np.eye(3), np.zeros((3, 1))])
        quadric_res = np.array(
            [
                np.einsum("ij,jk,ik->i", hom @ proj.T, e2, hom @ canon.T)
                for e2 in extra
            ]
        )
    return CriticalReport(
        nullspace_dim=dim,
        singular_values=sv,
        image_residuals=image_res,
        quadric_residuals=quadric_res,
        generators=extra,
    )
