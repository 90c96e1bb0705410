"""Core domain types and geometric primitives.

Homogeneous scene points, ray-valued image points, affine and polynomial
deformations, and the canonical calibrated pinhole projection.  Everything
here is a pure function of its inputs; all types are immutable values.

Polynomial deformations use a dense monomial-coefficient representation:
a degree-``d`` deformation stores a ``3 × p`` coefficient matrix whose
columns follow the graded monomial order of :func:`exponents_for_degree`.
Downstream modules rely on this explicit monomial indexing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateDeformation, ZeroProjection

__all__ = [
    "ScenePoint",
    "ImagePoint",
    "AffineDeformation",
    "PolynomialDeformation",
    "DepthAssignment",
    "project",
    "apply_affine",
    "apply_poly",
    "compose_affine",
    "skew",
    "angular_distance",
    "exponents_for_degree",
    "num_monomials",
    "eval_monomials",
    "eval_monomial_jacobian",
]

#: Tolerance below which two rays are considered identical (1 - |cos angle|).
RAY_TOL = 1e-9


def _as_float_vector(values: Iterable[float], length: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    if arr.shape != (length,):
        raise ValueError(f"{name} must have exactly {length} coordinates, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} coordinates must be finite, got {arr}")
    return arr


def skew(v: np.ndarray) -> np.ndarray:
    """Return the 3×3 cross-product matrix ``[v]ₓ`` with ``[v]ₓ w = v × w``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def angular_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Return ``1 - |cos|`` of the angle between two nonzero 3-vectors."""
    u = np.asarray(u, dtype=float).reshape(3)
    v = np.asarray(v, dtype=float).reshape(3)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("angular distance undefined for the zero vector")
    return 1.0 - abs(float(u @ v)) / (nu * nv)


@dataclass(frozen=True)
class ScenePoint:
    """A finite point in homogeneous coordinates with last coordinate 1.

    Attributes:
        coords: 4-vector ``(X, Y, Z, 1)``.
    """

    coords: np.ndarray

    def __init__(self, coords: Iterable[float]):
        arr = np.array(coords, dtype=float, copy=True).reshape(-1)
        if arr.shape == (3,):
            arr = np.append(arr, 1.0)
        arr = _as_float_vector(arr, 4, "ScenePoint")
        if arr[3] != 1.0:
            if arr[3] == 0.0:
                raise ValueError("ScenePoint must be finite (last coordinate nonzero)")
            arr = arr / arr[3]
        object.__setattr__(self, "coords", arr)
        self.coords.setflags(write=False)

    @property
    def affine(self) -> np.ndarray:
        """The inhomogeneous 3-vector ``(X, Y, Z)``."""
        return self.coords[:3]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScenePoint):
            return NotImplemented
        return bool(np.array_equal(self.coords, other.coords))

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"ScenePoint({self.coords[:3].tolist()})"


@dataclass(frozen=True)
class ImagePoint:
    """A viewing ray: a nonzero homogeneous 3-vector defined up to scale.

    Stored unnormalized; equality is angular (two points are equal iff
    they are proportional, tested with ``1 - |cos| < 1e-9``).
    """

    coords: np.ndarray

    def __init__(self, coords: Iterable[float]):
        arr = _as_float_vector(coords, 3, "ImagePoint")
        if not np.any(arr):
            raise ValueError("ImagePoint must be a nonzero vector")
        object.__setattr__(self, "coords", arr)
        self.coords.setflags(write=False)

    def normalized(self) -> np.ndarray:
        """Unit-norm representative of the ray."""
        return self.coords / np.linalg.norm(self.coords)

    def inhomogeneous(self) -> np.ndarray:
        """The affine image coordinates ``(x/w, y/w)``; requires ``w != 0``."""
        if self.coords[2] == 0.0:
            raise ZeroDivisionError("image point has zero third coordinate")
        return self.coords[:2] / self.coords[2]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImagePoint):
            return NotImplemented
        return angular_distance(self.coords, other.coords) < RAY_TOL

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"ImagePoint({self.coords.tolist()})"


@dataclass(frozen=True)
class AffineDeformation:
    """An invertible affine deformation ``P ↦ A·P + t``.

    Attributes:
        linear: 3×3 matrix ``A`` with nonzero determinant.
        translation: 3-vector ``t``.
    """

    linear: np.ndarray
    translation: np.ndarray

    def __init__(self, linear: Iterable[float], translation: Iterable[float]):
        a = np.array(linear, dtype=float, copy=True).reshape(3, 3)
        t = _as_float_vector(translation, 3, "translation")
        if not np.all(np.isfinite(a)):
            raise ValueError("linear part must be finite")
        if np.linalg.det(a) == 0.0:
            raise DegenerateDeformation("affine deformation must be invertible")
        object.__setattr__(self, "linear", a)
        object.__setattr__(self, "translation", t)
        self.linear.setflags(write=False)
        self.translation.setflags(write=False)

    @classmethod
    def identity(cls) -> "AffineDeformation":
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """The 4×4 homogeneous matrix ``[[A, t], [0, 1]]``."""
        m = np.eye(4)
        m[:3, :3] = self.linear
        m[:3, 3] = self.translation
        return m

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AffineDeformation):
            return NotImplemented
        return bool(
            np.array_equal(self.linear, other.linear)
            and np.array_equal(self.translation, other.translation)
        )


@lru_cache(maxsize=None)
def exponents_for_degree(degree: int) -> tuple[tuple[int, int, int], ...]:
    """All monomial exponents ``(i, j, k)`` with ``i + j + k ≤ degree``.

    Ordered by total degree, then lexicographically descending, so degree 2
    yields ``1, X, Y, Z, X², XY, XZ, Y², YZ, Z²``.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    out: list[tuple[int, int, int]] = []
    for total in range(degree + 1):
        block = [
            (i, j, total - i - j)
            for i in range(total, -1, -1)
            for j in range(total - i, -1, -1)
        ]
        out.extend(block)
    return tuple(out)


def num_monomials(degree: int) -> int:
    """Dimension of the space of degree-≤ ``degree`` polynomials in 3 variables."""
    return len(exponents_for_degree(degree))


def eval_monomials(points: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate every monomial of degree ≤ ``degree`` at each point.

    Args:
        points: array of shape ``(n, 3)`` of affine coordinates.
        degree: maximum total degree.

    Returns:
        Array of shape ``(n, p)`` whose columns follow
        :func:`exponents_for_degree`.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    exps = np.array(exponents_for_degree(degree))
    # powers[n, d] = coordinate^d, built once per axis then gathered.
    maxd = degree + 1
    px = pts[:, 0:1] ** np.arange(maxd)
    py = pts[:, 1:2] ** np.arange(maxd)
    pz = pts[:, 2:3] ** np.arange(maxd)
    return px[:, exps[:, 0]] * py[:, exps[:, 1]] * pz[:, exps[:, 2]]


def eval_monomial_jacobian(points: np.ndarray, degree: int) -> np.ndarray:
    """Gradients of every monomial at each point.

    Returns:
        Array of shape ``(n, p, 3)``; entry ``[i, m, c]`` is
        ``∂(monomial m)/∂(coordinate c)`` at point ``i``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    exps = np.array(exponents_for_degree(degree))
    n, p = pts.shape[0], exps.shape[0]
    maxd = degree + 1
    pows = np.stack([pts[:, c : c + 1] ** np.arange(maxd) for c in range(3)])
    out = np.empty((n, p, 3))
    for c in range(3):
        e = exps[:, c]
        lowered = np.where(e > 0, e - 1, 0)
        factor = np.where(e > 0, e, 0).astype(float)
        term = factor * pows[c][:, lowered]
        for other in (ax for ax in range(3) if ax != c):
            term = term * pows[other][:, exps[:, other]]
        out[:, :, c] = term
    return out


@dataclass(frozen=True)
class PolynomialDeformation:
    """A polynomial deformation ``Φ = (φ₁, φ₂, φ₃)`` of bounded degree.

    Attributes:
        degree: maximum total degree ``d`` of the components.
        coefficients: ``3 × p`` matrix; row ``r`` holds the coefficients of
            ``φ_{r+1}`` in the monomial order of
            ``exponents_for_degree(degree)``.
    """

    degree: int
    coefficients: np.ndarray

    def __init__(self, degree: int, coefficients: Iterable[float]):
        if degree < 1:
            raise ValueError("degree must be at least 1")
        p = num_monomials(degree)
        coeffs = np.array(coefficients, dtype=float, copy=True).reshape(3, p)
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "degree", int(degree))
        object.__setattr__(self, "coefficients", coeffs)
        self.coefficients.setflags(write=False)

    @property
    def params(self) -> np.ndarray:
        """The free coefficients as a flat vector (row-major)."""
        return self.coefficients.ravel()

    @classmethod
    def from_affine(cls, deformation: AffineDeformation) -> "PolynomialDeformation":
        """Embed an affine deformation as a degree-1 polynomial map."""
        coeffs = np.zeros((3, 4))
        coeffs[:, 0] = deformation.translation
        coeffs[:, 1:] = deformation.linear
        return cls(1, coeffs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PolynomialDeformation):
            return NotImplemented
        return self.degree == other.degree and bool(
            np.array_equal(self.coefficients, other.coefficients)
        )


@dataclass(frozen=True)
class DepthAssignment:
    """Per-point projective depths and their reciprocal localization values.

    Attributes:
        depths: nonzero reals, one per point.
        reciprocals: ``u_i`` with ``depth_i · u_i = 1``.
    """

    depths: np.ndarray
    reciprocals: np.ndarray

    def __init__(self, depths: Iterable[float], reciprocals: Iterable[float] | None = None):
        d = np.array(depths, dtype=float, copy=True).reshape(-1)
        if d.size == 0 or not np.all(np.isfinite(d)) or np.any(d == 0.0):
            raise ValueError("depths must be nonzero finite reals")
        if reciprocals is None:
            u = 1.0 / d
        else:
            u = np.array(reciprocals, dtype=float, copy=True).reshape(-1)
            if u.shape != d.shape:
                raise ValueError("reciprocals must match depths in length")
            if np.max(np.abs(d * u - 1.0)) > 1e-9:
                raise ValueError("depth × reciprocal must equal 1")
        object.__setattr__(self, "depths", d)
        object.__setattr__(self, "reciprocals", u)
        self.depths.setflags(write=False)
        self.reciprocals.setflags(write=False)

    def __len__(self) -> int:
        return self.depths.size


def project(point: ScenePoint) -> ImagePoint:
    """Project a scene point through the canonical calibrated camera ``[I | 0]``.

    Args:
        point: finite scene point whose first three coordinates are not all zero.

    Returns:
        The viewing ray through the point.

    Raises:
        ZeroProjection: if the point coincides with the camera center.
    """
    v = point.coords[:3]
    if not np.any(v):
        raise ZeroProjection("scene point lies at the camera center")
    return ImagePoint(v)


def apply_affine(deformation: AffineDeformation, point: ScenePoint) -> ScenePoint:
    """Apply ``P ↦ A·P + t`` to a finite scene point."""
    return ScenePoint(deformation.linear @ point.affine + deformation.translation)


def apply_poly(deformation: PolynomialDeformation, point: ScenePoint) -> ScenePoint:
    """Evaluate a polynomial deformation at a scene point's affine coordinates."""
    m = eval_monomials(point.affine[None, :], deformation.degree)[0]
    return ScenePoint(deformation.coefficients @ m)


def compose_affine(d1: AffineDeformation, d2: AffineDeformation) -> AffineDeformation:
    """The deformation realizing ``d1`` followed by ``d2``.

    Returns ``(A₂A₁, A₂t₁ + t₂)``, i.e. the map ``P ↦ A₂(A₁P + t₁) + t₂``.
    """
    return AffineDeformation(
        d2.linear @ d1.linear,
        d2.linear @ d1.translation + d2.translation,
    )


def projections(points: Sequence[ScenePoint]) -> list[ImagePoint]:
    """Project every point of a sequence (convenience wrapper)."""
    return [project(p) for p in points]
