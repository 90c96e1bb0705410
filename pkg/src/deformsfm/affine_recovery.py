"""Recovering affine deformations from three-view essential matrices.

Each essential matrix pins its deformation only up to a four-parameter
family (scale and a rank-one linear update).  Intersecting the families
of the three view pairs gives polynomial systems whose character depends
on how the two deformation steps are related:

* the same deformation applied twice — :func:`solve_repeated`, unique
  answer;
* a second application scaled in its linear and translation parts —
  :func:`solve_quasi_identical`, unique answer plus the scale pair;
* two unrelated deformations — the solution set is a positive-dimensional
  fiber, so :func:`sample_generic_fiber` returns distinct samples from it
  instead of an answer.

:func:`estimate_dimension` certifies the local dimension of the solution
set at a verified point through the spectrum of the system Jacobian, and
:func:`recover_structure` triangulates per-point depths once a
deformation is known.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._backend import generic_system, quasi_system, repeated_system
from .epipolar import (
    DecompositionFamily,
    EssentialMatrix,
    decompose_essential,
    essential_from_deformation,
    estimate_essential,
)
from .errors import (
    DepthDegenerate,
    MultipleSolutions,
    NoConvergence,
    RankDeficient,
    ResidualTooHigh,
    ScaleDegenerate,
    ScaleUnidentifiable,
)
from .geometry import AffineDeformation, DepthAssignment, ScenePoint, compose_affine
from .simulation import CorrespondenceSet
from .solvers import cluster_vectors, multistart, nullity_with_gap

#: squared-cost acceptance threshold for a multi-start run (‖r‖ < 1e-10).
VERIFY_COST = 1e-20
#: localization guard: iterates with |α|, |γ| (…​) below this are rejected.
NONZERO_TOL = 1e-8
#: relative max-norm tolerance for merging solution clusters.
CLUSTER_TOL = 1e-6
#: Euclidean separation required between distinct fiber samples.
FIBER_DISTINCT_TOL = 1e-3

_SYSTEM_IDS = ("generic", "repeated", "quasi")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThreeViewEssentials:
    """The essential matrices of the three view pairs.

    Attributes:
        E12: first-to-second view essential matrix.
        E13: first-to-third view essential matrix.
        E23: second-to-third view essential matrix, when available.
    """

    E12: EssentialMatrix
    E13: EssentialMatrix
    E23: EssentialMatrix | None = None

    def __init__(
        self,
        E12: EssentialMatrix | Iterable[float],
        E13: EssentialMatrix | Iterable[float],
        E23: EssentialMatrix | Iterable[float] | None = None,
    ):
        object.__setattr__(self, "E12", _as_essential(E12))
        object.__setattr__(self, "E13", _as_essential(E13))
        object.__setattr__(self, "E23", None if E23 is None else _as_essential(E23))
        for name in ("E12", "E13", "E23"):
            e = getattr(self, name)
            if e is None:
                continue
            s = e.singular_values()
            if s[1] < 1e-10 * s[0] or s[2] > 1e-6 * s[0]:
                raise RankDeficient(f"{name} must have rank exactly 2")


@dataclass(frozen=True)
class AmbiguityPoint:
    """A point of the localized solution variety in the 15-dim ambient space.

    Carries the three family scales ``α, β, γ``, their reciprocals
    ``x, y, z`` (the localization coordinates), and the three family
    vectors ``v1, v2, v3``.
    """

    alpha: float
    beta: float
    gamma: float
    x: float
    y: float
    z: float
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray

    def __init__(
        self,
        alpha: float,
        beta: float,
        gamma: float,
        v1: Iterable[float],
        v2: Iterable[float],
        v3: Iterable[float],
        x: float | None = None,
        y: float | None = None,
        z: float | None = None,
    ):
        for name, val in (("alpha", alpha), ("beta", beta), ("gamma", gamma)):
            if val == 0.0 or not np.isfinite(val):
                raise ValueError(f"{name} must be a nonzero finite real")
        x = 1.0 / alpha if x is None else float(x)
        y = 1.0 / beta if y is None else float(y)
        z = 1.0 / gamma if z is None else float(z)
        for prod, pair in ((alpha * x, "alpha*x"), (beta * y, "beta*y"), (gamma * z, "gamma*z")):
            if abs(prod - 1.0) > 1e-6:
                raise ValueError(f"localization constraint violated: {pair} = {prod!r}")
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "beta", float(beta))
        object.__setattr__(self, "gamma", float(gamma))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        for name, vec in (("v1", v1), ("v2", v2), ("v3", v3)):
            arr = np.array(vec, dtype=float, copy=True).reshape(3)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def vector(self) -> np.ndarray:
        """``(α, β, γ, v1, v2, v3)`` as a flat 12-vector."""
        return np.concatenate([[self.alpha, self.beta, self.gamma], self.v1, self.v2, self.v3])


@dataclass(frozen=True)
class RecoveredAffine:
    """A recovered deformation together with its solve diagnostics.

    Attributes:
        deformation: the first-step deformation ``(A, a)``.
        scales: ``(λ, μ)`` scaling the second step — ``(1, 1)`` for exact
            repetition.
        residual: max-norm residual of the defining system at the answer.
        restart_count: number of solver starts spent.
        n_clusters: accepted solution clusters (1 on a successful return).
        n_candidates: distinct verified clusters before disambiguation.
    """

    deformation: AffineDeformation
    scales: tuple[float, float]
    residual: float
    restart_count: int
    n_clusters: int = 1
    n_candidates: int = 1


@dataclass(frozen=True)
class DimensionEstimate:
    """Local dimension evidence for a solution variety.

    Attributes:
        nullity: count of near-zero singular values of the system
            Jacobian at the verified point.
        singular_values: the full descending spectrum (after
            equilibration), padded to the unknown count.
        sample_points: the verified point(s) the estimate was taken at.
    """

    nullity: int
    singular_values: np.ndarray
    sample_points: tuple[AmbiguityPoint, ...]


@dataclass(frozen=True)
class StructureResult:
    """Depths and reconstructed points from a known deformation.

    Attributes:
        depths: per-point depth scalars with their reciprocals.
        points: the reconstructed scene points ``λᵢ qᵢ``.
        residuals: per-point norms of the cross-product constraint.
    """

    depths: DepthAssignment
    points: tuple[ScenePoint, ...]
    residuals: np.ndarray


# ---------------------------------------------------------------------------
# Internal helpers
# ---------------------------------------------------------------------------


def _as_essential(e) -> EssentialMatrix:
    return e if isinstance(e, EssentialMatrix) else EssentialMatrix(e)


def _proportional(e1: EssentialMatrix, e2: EssentialMatrix, tol: float = 1e-6) -> bool:
    """Whether two essential matrices agree up to a nonzero real scale."""
    m1 = e1.normalized().ravel()
    m2 = e2.normalized().ravel()
    return 1.0 - abs(float(m1 @ m2)) <= tol


def _family(matrix: np.ndarray, scale: float) -> DecompositionFamily:
    return decompose_essential(EssentialMatrix(matrix / scale))


def _composite_key(A1: np.ndarray, a1: np.ndarray, A2: np.ndarray, a2: np.ndarray) -> np.ndarray:
    """Cluster key on the induced first-to-third map, where no scaling is free."""
    k = np.concatenate([(A2 @ A1).ravel(), A2 @ a1 + a2])
    return k / np.linalg.norm(k)


def _heterogeneous_starts(
    rng: np.random.Generator, n_starts: int, dim: int, unit_coords: Sequence[int] = ()
) -> list[np.ndarray]:
    """Gaussian starts with per-start magnitudes spread over three decades.

    The solved systems mix unknowns of very different sizes (family
    scales can be tiny while family vectors are order one), so a single
    start scale would explore only part of the basin structure.  Selected
    coordinates can be forced to unit-scale draws.
    """
    starts = []
    for _ in range(n_starts):
        u0 = rng.standard_normal(dim) * 10.0 ** rng.uniform(-2.0, 1.0)
        for j in unit_coords:
            u0[j] = rng.standard_normal()
        starts.append(u0)
    return starts


def _depth_sign_class(
    A: np.ndarray,
    a: np.ndarray,
    q1: np.ndarray,
    q2: np.ndarray,
    q3: np.ndarray,
    second: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[str, float]:
    """Joint sign pattern of the depth chain a candidate induces on tracks.

    For each track the depth in view 1 and the ray scales in views 2 and
    3 are solved linearly.  A candidate consistent with the data makes
    all of them positive (``"pos"``), or all negative (``"neg"``, the
    same interpretation with the translation reversed); spurious
    algebraic branches mix signs (``"mixed"``).  The worst per-point
    misfit of the chain is returned alongside: a candidate that solves
    the essential-matrix system but cannot re-thread the actual tracks
    shows a large misfit even when its signs happen to agree.
    """
    A2, a2 = (A, a) if second is None else second
    n = q1.shape[0]
    signs = np.empty((n, 3))
    worst = 0.0
    for i in range(n):
        M = np.column_stack([A @ q1[i], -q2[i]])
        sol, *_ = np.linalg.lstsq(M, -a, rcond=None)
        lam, s2 = sol
        worst = max(worst, float(np.linalg.norm(M @ sol + a)))
        ray3 = A2 @ (s2 * q2[i]) + a2
        s3 = float(ray3 @ q3[i])
        worst = max(worst, float(np.linalg.norm(ray3 - s3 * q3[i])))
        signs[i] = [lam, s2, s3]
    if np.all(signs > 0.0):
        return "pos", worst
    if np.all(signs < 0.0):
        return "neg", worst
    return "mixed", worst


def _unit_rows(arr: np.ndarray) -> np.ndarray:
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


def _make_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(0 if rng is None else rng)


# ---------------------------------------------------------------------------
# Repeated deformation
# ---------------------------------------------------------------------------


def solve_repeated(
    e12: EssentialMatrix | Iterable[float],
    e13: EssentialMatrix | Iterable[float],
    e23: EssentialMatrix | Iterable[float] | None = None,
    *,
    tracks: CorrespondenceSet | None = None,
    n_starts: int = 64,
    rng: np.random.Generator | int | None = None,
) -> RecoveredAffine:
    """Recover the deformation applied twice between three views.

    Two input conventions are supported:

    * **Exact matrices** (``tracks=None``): ``e12`` and ``e13`` carry
      their true relative scale (e.g. both built directly from a
      deformation).  The answer ``(A, a)`` is then recovered absolutely.
    * **Estimated matrices** (``tracks`` given): ``e12``/``e13`` may each
      be arbitrarily rescaled, as an eight-point estimate is.  A free
      relative-scale unknown is added, the spurious algebraic branches
      are rejected by the sign pattern of the depth chain they induce on
      the tracks, and ``a`` is returned up to a positive factor.

    Args:
        e12: first-to-second essential matrix.
        e13: first-to-third essential matrix.
        e23: optional second-to-third matrix; must match ``e12`` up to
            scale for a repeated deformation.
        tracks: three-view correspondences for sign disambiguation.
        n_starts: solver restart budget.
        rng: seed or generator for the starts (seeded default).

    Raises:
        ScaleDegenerate: if ``e23`` is supplied but is not proportional
            to ``e12``.
        NoConvergence: if no start reaches a verified solution, or every
            algebraic branch is sign-inconsistent with the tracks.
        MultipleSolutions: if distinct verified solutions survive.
    """
    e12 = _as_essential(e12)
    e13 = _as_essential(e13)
    if e23 is not None and not _proportional(e12, _as_essential(e23)):
        raise ScaleDegenerate(
            "second-to-third essential matrix is not proportional to the "
            "first-to-second one; the deformation cannot be a repetition"
        )
    gen = _make_rng(rng)
    n12 = float(np.linalg.norm(e12.matrix))
    if tracks is None:
        fam1 = _family(e12.matrix, n12)
        fam3 = _family(e13.matrix, n12)
        out_scale = n12
        free_scale = False
        dim, unit_coords = 8, ()
    else:
        if tracks.n_views != 3:
            raise ValueError("sign disambiguation needs three-view tracks")
        fam1 = _family(e12.matrix, n12)
        fam3 = _family(e13.matrix, float(np.linalg.norm(e13.matrix)))
        out_scale = 1.0
        free_scale = True
        dim, unit_coords = 9, (2,)
    A0, a0 = fam1.A0, fam1.t0
    C0, c0 = fam3.A0, fam3.t0

    def res_jac(u):
        return repeated_system(u, A0, a0, C0, c0, free_scale)

    found = multistart(
        res_jac,
        dim,
        gen,
        n_starts=n_starts,
        verify_cost=VERIFY_COST,
        starts=_heterogeneous_starts(gen, n_starts, dim, unit_coords),
    )
    found = [
        (u, cost)
        for u, cost in found
        if abs(u[0]) > NONZERO_TOL and abs(u[1]) > NONZERO_TOL
    ]
    if not found:
        raise NoConvergence(f"no verified solution in {n_starts} restarts")

    candidates = []
    for u, cost in found:
        al = u[0]
        v1 = u[3:6] if free_scale else u[2:5]
        A = (A0 + np.outer(a0, v1)) / al
        a = al * a0 * out_scale
        candidates.append((A, a, u, cost))
    clusters = cluster_vectors(
        [_composite_key(A, a, A, a) for A, a, _, _ in candidates], CLUSTER_TOL
    )

    def best(c):
        return min((candidates[i] for i in c), key=lambda t: (t[-1], tuple(t[-2])))

    kept = []
    if tracks is None:
        kept = [best(c) for c in clusters]
    else:
        q1 = _unit_rows(tracks.view_array(0))
        q2 = _unit_rows(tracks.view_array(1))
        q3 = _unit_rows(tracks.view_array(2))
        for c in clusters:
            A, a, u, cost = best(c)
            cls, worst = _depth_sign_class(A, a, q1, q2, q3)
            if worst > 1e-6 * max(1.0, float(np.linalg.norm(A)), float(np.linalg.norm(a))):
                continue
            if cls == "pos":
                kept.append((A, a, u, cost))
            elif cls == "neg":
                kept.append((A, -a, u, cost))
    if not kept:
        raise NoConvergence(
            "no algebraic branch induces a sign-consistent depth chain on the tracks"
        )
    kept.sort(key=lambda t: (t[-1], tuple(t[-2])))
    results = [
        RecoveredAffine(
            deformation=AffineDeformation(A, a),
            scales=(1.0, 1.0),
            residual=float(np.abs(res_jac(u)[0]).max()),
            restart_count=n_starts,
            n_clusters=len(kept),
            n_candidates=len(clusters),
        )
        for A, a, u, _ in kept
    ]
    if len(results) > 1:
        raise MultipleSolutions(
            f"{len(results)} distinct verified solutions survive", solutions=results
        )
    return results[0]


def recover_repeated_from_tracks(
    tracks: CorrespondenceSet,
    *,
    n_starts: int = 64,
    rng: np.random.Generator | int | None = None,
) -> RecoveredAffine:
    """Full pipeline: estimate both essentials from tracks, then solve.

    Convenience wrapper chaining :func:`~deformsfm.epipolar.estimate_essential`
    on view pairs (1,2) and (1,3) into :func:`solve_repeated` with sign
    disambiguation from the same tracks.
    """
    if tracks.n_views != 3:
        raise ValueError("pipeline needs three-view tracks")
    e12 = estimate_essential((tracks.view_array(0), tracks.view_array(1)))
    e13 = estimate_essential((tracks.view_array(0), tracks.view_array(2)))
    return solve_repeated(e12, e13, tracks=tracks, n_starts=n_starts, rng=rng)


# ---------------------------------------------------------------------------
# Quasi-identical deformation
# ---------------------------------------------------------------------------


def solve_quasi_identical(
    e12: EssentialMatrix | Iterable[float],
    e13: EssentialMatrix | Iterable[float],
    e23: EssentialMatrix | Iterable[float],
    *,
    tracks: CorrespondenceSet | None = None,
    n_starts: int = 64,
    rng: np.random.Generator | int | None = None,
) -> RecoveredAffine:
    """Recover ``(A, a)`` and the scale pair when the second step is ``(λA, μa)``.

    The three inputs must carry their true relative scales (the ratio
    ``⟨E23, E12⟩ / ‖E12‖²`` pins the product ``λμ``).  The essential
    matrices determine the second step only up to overall sign — ``(λA,
    μa)`` and ``(-λA, -μa)`` produce the same ones — so the
    representative with ``λ > 0`` is returned.  When ``tracks`` are
    supplied, candidate interpretations that cannot re-thread the actual
    observations with an all-positive depth chain are discarded.

    Raises:
        ScaleDegenerate: if ``e23`` is not proportional to ``e12``.
        ScaleUnidentifiable: if the Jacobian at the answer is
            rank-deficient in the ``(λ, μ)`` directions.
        NoConvergence / MultipleSolutions: as for :func:`solve_repeated`.
    """
    e12 = _as_essential(e12)
    e13 = _as_essential(e13)
    e23 = _as_essential(e23)
    if not _proportional(e12, e23):
        raise ScaleDegenerate(
            "second-to-third essential matrix is not proportional to the "
            "first-to-second one; the second step cannot be a scaled repetition"
        )
    rho = float(np.tensordot(e23.matrix, e12.matrix) / np.tensordot(e12.matrix, e12.matrix))
    gen = _make_rng(rng)
    n12 = float(np.linalg.norm(e12.matrix))
    fam1 = _family(e12.matrix, n12)
    fam3 = _family(e13.matrix, n12)
    A0, a0 = fam1.A0, fam1.t0
    C0, c0 = fam3.A0, fam3.t0

    def res_jac(u):
        return quasi_system(u, A0, a0, C0, c0, rho)

    found = multistart(
        res_jac,
        10,
        gen,
        n_starts=n_starts,
        verify_cost=VERIFY_COST,
        starts=_heterogeneous_starts(gen, n_starts, 10, unit_coords=(2, 3)),
    )
    canonical = []
    for u, cost in found:
        if not all(abs(u[j]) > NONZERO_TOL for j in range(4)):
            continue
        if u[2] < 0.0:
            # sign twin: flipping (γ, λ, μ) together preserves the system
            u = u.copy()
            u[1], u[2], u[3] = -u[1], -u[2], -u[3]
        canonical.append((u, cost))
    if not canonical:
        raise NoConvergence(f"no verified solution in {n_starts} restarts")

    candidates = []
    for u, cost in canonical:
        al, ga, lam, mu = u[0], u[1], u[2], u[3]
        A = (A0 + np.outer(a0, u[4:7])) / al
        a = al * a0 * n12
        candidates.append((A, a, lam, mu, u, cost))
    keys = [
        np.concatenate([_composite_key(A, a, lam * A, mu * a), [lam, mu]])
        for A, a, lam, mu, _, _ in candidates
    ]
    clusters = cluster_vectors(keys, CLUSTER_TOL)
    reps = [
        min((candidates[i] for i in c), key=lambda t: (t[-1], tuple(t[-2])))
        for c in clusters
    ]
    n_branches = len(reps)
    if tracks is not None:
        if tracks.n_views != 3:
            raise ValueError("sign disambiguation needs three-view tracks")
        q1 = _unit_rows(tracks.view_array(0))
        q2 = _unit_rows(tracks.view_array(1))
        q3 = _unit_rows(tracks.view_array(2))
        kept = []
        for A, a, lam, mu, u, cost in reps:
            cls, worst = _depth_sign_class(
                A, a, q1, q2, q3, second=(lam * A, mu * a)
            )
            scale_ref = max(1.0, float(np.linalg.norm(A)), float(np.linalg.norm(a)))
            # signs are data here (the inputs carry their true relative
            # scales), so a negative chain disqualifies the candidate
            # outright instead of flipping the translation
            if cls == "pos" and worst <= 1e-6 * scale_ref:
                kept.append((A, a, lam, mu, u, cost))
        reps = kept
        if not reps:
            raise NoConvergence(
                "no candidate induces a sign-consistent depth chain on the tracks"
            )
    reps.sort(key=lambda t: (t[-1], tuple(t[-2])))
    results = []
    for A, a, lam, mu, u, cost in reps:
        r, J = res_jac(u)
        nullity, _ = nullity_with_gap(J)
        if nullity > 0:
            _, _, vt = np.linalg.svd(J)
            for direction in vt[J.shape[1] - nullity :]:
                if np.linalg.norm(direction[2:4]) > 0.1 * np.linalg.norm(direction):
                    raise ScaleUnidentifiable(
                        "the scale pair moves freely along the solution set"
                    )
        results.append(
            RecoveredAffine(
                deformation=AffineDeformation(A, a),
                scales=(float(lam), float(mu)),
                residual=float(np.abs(r).max()),
                restart_count=n_starts,
                n_clusters=len(reps),
                n_candidates=n_branches,
            )
        )
    if len(results) > 1:
        raise MultipleSolutions(
            f"{len(results)} distinct verified solutions survive", solutions=results
        )
    return results[0]


# ---------------------------------------------------------------------------
# Generic (unrelated) deformation pair
# ---------------------------------------------------------------------------


def sample_generic_fiber(
    e12: EssentialMatrix | Iterable[float],
    e23: EssentialMatrix | Iterable[float],
    e13: EssentialMatrix | Iterable[float],
    n_samples: int,
    *,
    n_starts: int | None = None,
    rng: np.random.Generator | int | None = None,
) -> list[AmbiguityPoint]:
    """Collect distinct verified solutions of the unrelated-pair system.

    The system's solution set is positive-dimensional, so random restarts
    land on ever-new points of it; the returned samples are constructive
    evidence of the ambiguity.  Each sample satisfies the system to
    max-norm residual below 1e-12, and samples are pairwise separated by
    more than ``FIBER_DISTINCT_TOL`` in the 12 unknowns.

    Raises:
        NoConvergence: if fewer than ``n_samples`` distinct verified
            solutions are found within the restart budget.
    """
    e12 = _as_essential(e12)
    e23 = _as_essential(e23)
    e13 = _as_essential(e13)
    gen = _make_rng(rng)
    if n_starts is None:
        n_starts = max(64, 6 * n_samples)
    n12 = float(np.linalg.norm(e12.matrix))
    famA = _family(e12.matrix, n12)
    famB = _family(e23.matrix, n12)
    famC = _family(e13.matrix, n12)
    A0, a0 = famA.A0, famA.t0
    B0, b0 = famB.A0, famB.t0
    C0, c0 = famC.A0, famC.t0

    def res_jac(u):
        return generic_system(u, A0, a0, B0, b0, C0, c0)

    found = multistart(
        res_jac,
        12,
        gen,
        n_starts=n_starts,
        verify_cost=1e-24,
        starts=_heterogeneous_starts(gen, n_starts, 12),
    )
    samples: list[AmbiguityPoint] = []
    vectors: list[np.ndarray] = []
    for u, cost in found:
        if not all(abs(u[j]) > NONZERO_TOL for j in range(3)):
            continue
        if np.abs(res_jac(u)[0]).max() >= 1e-12:
            continue
        if any(np.linalg.norm(u - v) <= FIBER_DISTINCT_TOL for v in vectors):
            continue
        vectors.append(u.copy())
        samples.append(AmbiguityPoint(u[0], u[1], u[2], u[3:6], u[6:9], u[9:12]))
    if len(samples) < n_samples:
        raise NoConvergence(
            f"found only {len(samples)} distinct fiber samples in {n_starts} restarts"
        )
    return samples


def is_fiber_member(
    e12: EssentialMatrix | Iterable[float],
    e23: EssentialMatrix | Iterable[float],
    e13: EssentialMatrix | Iterable[float],
    first: AffineDeformation,
    second: AffineDeformation,
    tol: float = 1e-8,
) -> bool:
    """Whether a deformation pair reproduces all three essential matrices.

    Membership is judged up to scale of each matrix — the natural
    equivalence, since an essential matrix determines and is determined
    by image data only up to a nonzero factor.  In particular rescaling
    the first linear part, ``(λA, a)``, keeps the pair a member.
    """
    composite = compose_affine(first, second)
    for e, d in ((e12, first), (e23, second), (e13, composite)):
        if not _proportional(_as_essential(e), essential_from_deformation(d), tol):
            return False
    return True


# ---------------------------------------------------------------------------
# Dimension certification
# ---------------------------------------------------------------------------


def system_point(system_id: str, ground_truth) -> AmbiguityPoint:
    """Embed a known deformation (pair) as a point of the solution variety.

    Args:
        system_id: ``"repeated"``, ``"quasi"`` or ``"generic"``.
        ground_truth: the deformation for ``"repeated"``; a
            ``(deformation, (λ, μ))`` pair for ``"quasi"``; a
            ``(first, second)`` deformation pair for ``"generic"``.

    Returns:
        The exact coordinates the corresponding system vanishes at.
    """
    decomps = _ground_truth_decompositions(system_id, ground_truth)
    u = decomps["u"]
    if system_id == "repeated":
        return AmbiguityPoint(u[0], u[0], u[1], u[2:5], u[2:5], u[5:8])
    if system_id == "quasi":
        return AmbiguityPoint(u[0], decomps["beta"], u[1], u[4:7], decomps["v2"], u[7:10])
    return AmbiguityPoint(u[0], u[1], u[2], u[3:6], u[6:9], u[9:12])


def estimate_dimension(
    system_id: str,
    solution: AmbiguityPoint,
    ground_truth,
) -> DimensionEstimate:
    """Numerical local dimension of a solution variety at a verified point.

    The system named by ``system_id`` is rebuilt from the exact essential
    matrices of ``ground_truth`` (formats as in :func:`system_point`), the
    candidate ``solution`` is verified to max-norm residual below 1e-12,
    and the nullity of the system Jacobian is certified with a
    singular-value gap of at least 1e4 after equilibration.

    Raises:
        ResidualTooHigh: if ``solution`` does not verify the system.
        IllConditioned: if the spectrum has no clear gap.
    """
    decomps = _ground_truth_decompositions(system_id, ground_truth)
    res_jac = decomps["res_jac"]
    u = _point_to_unknowns(system_id, solution, decomps)
    r, J = res_jac(u)
    worst = float(np.abs(r).max())
    if worst >= 1e-12:
        raise ResidualTooHigh(
            f"candidate point misses the {system_id} system (max residual {worst:.3e})"
        )
    nullity, sv = nullity_with_gap(J, rel_tol=1e-8, gap=1e4)
    return DimensionEstimate(
        nullity=nullity, singular_values=sv, sample_points=(solution,)
    )


def _ground_truth_decompositions(system_id: str, ground_truth) -> dict:
    """Exact essential matrices, families, and truth unknowns for a system."""
    if system_id not in _SYSTEM_IDS:
        raise ValueError(f"unknown system id {system_id!r}")
    if system_id == "repeated":
        d: AffineDeformation = ground_truth
        comp = compose_affine(d, d)
        E12 = essential_from_deformation(d).matrix
        E13 = essential_from_deformation(comp).matrix
        n12 = float(np.linalg.norm(E12))
        fam1 = _family(E12, n12)
        fam3 = _family(E13, n12)
        A0, a0 = fam1.A0, fam1.t0
        C0, c0 = fam3.A0, fam3.t0
        al = float(a0 @ d.translation) / n12
        v1 = (al * d.linear - A0).T @ a0
        ga = float(c0 @ comp.translation) / n12
        v3 = (ga * comp.linear - C0).T @ c0
        u = np.concatenate([[al, ga], v1, v3])
        return {
            "u": u,
            "res_jac": lambda w: repeated_system(w, A0, a0, C0, c0, False),
        }
    if system_id == "quasi":
        d, (lam, mu) = ground_truth
        second = AffineDeformation(lam * d.linear, mu * d.translation)
        comp = compose_affine(d, second)
        E12 = essential_from_deformation(d).matrix
        E23 = essential_from_deformation(second).matrix
        E13 = essential_from_deformation(comp).matrix
        rho = float(np.tensordot(E23, E12) / np.tensordot(E12, E12))
        n12 = float(np.linalg.norm(E12))
        fam1 = _family(E12, n12)
        fam2 = _family(E23, n12)
        fam3 = _family(E13, n12)
        A0, a0 = fam1.A0, fam1.t0
        C0, c0 = fam3.A0, fam3.t0
        al = float(a0 @ d.translation) / n12
        v1 = (al * d.linear - A0).T @ a0
        ga = float(c0 @ comp.translation) / n12
        v3 = (ga * comp.linear - C0).T @ c0
        be = float(fam2.t0 @ second.translation) / n12
        v2 = (be * second.linear - fam2.A0).T @ fam2.t0
        u = np.concatenate([[al, ga, lam, mu], v1, v3])
        return {
            "u": u,
            "beta": be,
            "v2": v2,
            "res_jac": lambda w: quasi_system(w, A0, a0, C0, c0, rho),
            "scales": (float(lam), float(mu)),
        }
    first, second = ground_truth
    comp = compose_affine(first, second)
    E12 = essential_from_deformation(first).matrix
    E23 = essential_from_deformation(second).matrix
    E13 = essential_from_deformation(comp).matrix
    n12 = float(np.linalg.norm(E12))
    famA = _family(E12, n12)
    famB = _family(E23, n12)
    famC = _family(E13, n12)
    A0, a0 = famA.A0, famA.t0
    B0, b0 = famB.A0, famB.t0
    C0, c0 = famC.A0, famC.t0
    al = float(a0 @ first.translation) / n12
    v1 = (al * first.linear - A0).T @ a0
    be = float(b0 @ second.translation) / n12
    v2 = (be * second.linear - B0).T @ b0
    ga = float(c0 @ comp.translation) / n12
    v3 = (ga * comp.linear - C0).T @ c0
    u = np.concatenate([[al, be, ga], v1, v2, v3])
    return {
        "u": u,
        "res_jac": lambda w: generic_system(w, A0, a0, B0, b0, C0, c0),
    }


def _point_to_unknowns(system_id: str, point: AmbiguityPoint, decomps: dict) -> np.ndarray:
    if system_id == "repeated":
        return np.concatenate([[point.alpha, point.gamma], point.v1, point.v3])
    if system_id == "quasi":
        lam, mu = decomps["scales"]
        return np.concatenate([[point.alpha, point.gamma, lam, mu], point.v1, point.v3])
    return np.concatenate(
        [[point.alpha, point.beta, point.gamma], point.v1, point.v2, point.v3]
    )


# ---------------------------------------------------------------------------
# Structure recovery
# ---------------------------------------------------------------------------


def recover_structure(
    deformation: AffineDeformation, pairs: CorrespondenceSet
) -> StructureResult:
    """Triangulate per-point depths from a known deformation.

    Uses the first two views of ``pairs``: for each track, the depth λᵢ
    minimizing ``‖qᵢ′ × (λᵢ A qᵢ + a)‖`` is solved in closed form, and
    the scene point ``λᵢ qᵢ`` is reconstructed.

    Raises:
        DepthDegenerate: when the constraint does not determine a depth
            (``A qᵢ`` parallel to the second ray, as for an identity
            deformation with zero translation), or the depth vanishes.
    """
    A = deformation.linear
    t = deformation.translation
    q1 = pairs.view_array(0)
    q2 = pairs.view_array(1)
    n = q1.shape[0]
    depths = np.empty(n)
    residuals = np.empty(n)
    points = []
    scale_A = float(np.linalg.norm(A))
    for i in range(n):
        u = np.cross(q2[i], A @ q1[i])
        w = np.cross(q2[i], t)
        gauge = scale_A * np.linalg.norm(q1[i]) * np.linalg.norm(q2[i])
        if np.linalg.norm(u) <= 1e-10 * max(gauge, 1e-300):
            raise DepthDegenerate(f"depth of point {i} is unconstrained")
        lam = -float(u @ w) / float(u @ u)
        if lam == 0.0:
            raise DepthDegenerate(f"depth of point {i} vanishes")
        depths[i] = lam
        residuals[i] = float(np.linalg.norm(lam * u + w))
        points.append(ScenePoint(lam * q1[i]))
    return StructureResult(
        depths=DepthAssignment(depths), points=tuple(points), residuals=residuals
    )
