"""Universal matching constraints for polynomial deformations.

A point ``P = α(x, y, 1)`` seen in the first image at chart coordinates
``(x, y)`` reappears after a polynomial deformation ``Φ_θ`` at
``(x', y')``.  Eliminating the depth ``α`` (and the auxiliary reciprocal
used to keep it nonzero) leaves one polynomial relation between the two
image positions that holds for *every* point and *every* deformation of
the model — the matching constraint of the model class.

This module finds that constraint numerically:

* :func:`discover_support` locates the monomials the constraint can
  touch by intersecting nullspaces of sampled-match design matrices over
  increasing bidegree boxes,
* :func:`fit_constraint` estimates the coefficient vector from actual
  matches once the support is known, and
* :func:`select_model` ranks candidate model classes on given matches
  with a residual-plus-complexity criterion.

Supports and coefficients live on image monomials
``q_x^i q_y^j q_x'^k q_y'^l`` indexed by the exponent 4-tuple
``(i, j, k, l)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllRejected,
    InsufficientPoints,
    NoConstraint,
    NonUniqueConstraint,
    RankDeficient,
    ZeroProjection,
)
from .geometry import (
    PolynomialDeformation,
    eval_monomials,
    exponents_for_degree,
    num_monomials,
)
from .simulation import CorrespondenceSet

SUPPORT_TOL = 1e-9
"""Coefficient magnitude below which a monomial is dropped from a support."""

NULLITY_TOL = 1e-9
_MIN_DEPTH = 1e-3
_MIN_CHART = 1e-6


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------


def _canonical_pattern(pattern):
    exps = {}
    for comp, exp, value in pattern:
        comp = int(comp)
        exp = tuple(int(e) for e in exp)
        if comp not in (0, 1, 2):
            raise ValueError(f"component index must be 0, 1 or 2, got {comp}")
        if len(exp) != 3 or min(exp) < 0:
            raise ValueError(f"bad monomial exponents {exp}")
        if (comp, exp) in exps:
            raise ValueError(f"duplicate pattern entry for component {comp}, {exp}")
        exps[(comp, exp)] = None if value is None else float(value)
    return exps


@dataclass(frozen=True)
class ModelSpec:
    """A structured class of polynomial deformations.

    The pattern lists, per component, which monomial coefficients are
    free parameters and which are pinned to a fixed value; everything
    unlisted is zero.  ``n_parameters`` counts the free ones.

    Attributes:
        name: short identifier used in verdicts and reports.
        degree: maximum total degree of any component.
        pattern: tuple of ``(component, (i, j, k), value)`` entries where
            ``value`` is ``None`` for a free coefficient.
    """

    name: str
    degree: int
    pattern: tuple = field(repr=False)

    def __init__(self, name: str, degree: int, pattern):
        if degree < 1:
            raise ValueError("model degree must be at least 1")
        entries = _canonical_pattern(pattern)
        exps = exponents_for_degree(degree)
        index = {e: i for i, e in enumerate(exps)}
        for comp, exp in entries:
            if exp not in index:
                raise ValueError(f"monomial {exp} exceeds degree {degree}")
        canon = tuple(
            sorted(
                ((c, e, v) for (c, e), v in entries.items()),
                key=lambda t: (t[0], index[t[1]]),
            )
        )
        object.__setattr__(self, "name", str(name))
        object.__setattr__(self, "degree", int(degree))
        object.__setattr__(self, "pattern", canon)

    @property
    def n_parameters(self) -> int:
        return sum(1 for _, _, v in self.pattern if v is None)

    def key(self):
        """Hashable identity ignoring the display name."""
        return (self.degree, self.pattern)

    def sample_parameters(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.n_parameters)

    def parameter_index(self, component: int, exponents) -> int:
        """Position in the parameter vector of one free coefficient."""
        target = (int(component), tuple(int(e) for e in exponents))
        k = 0
        for comp, exp, value in self.pattern:
            if value is not None:
                continue
            if (comp, exp) == target:
                return k
            k += 1
        raise KeyError(f"no free coefficient for component {target[0]}, monomial {target[1]}")

    def coefficient_matrix(self, theta) -> np.ndarray:
        """Dense ``3 × p`` coefficient matrix in canonical monomial order."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.n_parameters:
            raise ValueError(
                f"model '{self.name}' takes {self.n_parameters} parameters, got {theta.size}"
            )
        index = {e: i for i, e in enumerate(exponents_for_degree(self.degree))}
        coeffs = np.zeros((3, num_monomials(self.degree)))
        k = 0
        for comp, exp, value in self.pattern:
            if value is None:
                coeffs[comp, index[exp]] = theta[k]
                k += 1
            else:
                coeffs[comp, index[exp]] = value
        return coeffs

    def deformation(self, theta) -> PolynomialDeformation:
        return PolynomialDeformation(self.degree, self.coefficient_matrix(theta))

    def apply(self, theta, points: np.ndarray) -> np.ndarray:
        """Evaluate the parameterized map at each row of ``points``."""
        m = eval_monomials(np.asarray(points, dtype=float), self.degree)
        return m @ self.coefficient_matrix(theta).T

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "degree": self.degree,
                "pattern": [
                    [c, list(e), "free" if v is None else v] for c, e, v in self.pattern
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        data = json.loads(text)
        pattern = [
            (c, tuple(e), None if v == "free" else float(v))
            for c, e, v in data["pattern"]
        ]
        return cls(data["name"], data["degree"], pattern)

    # ------------------------------------------------------------------
    # Stock models
    # ------------------------------------------------------------------

    @classmethod
    def identity(cls) -> "ModelSpec":
        """The do-nothing map: each component fixed to its own coordinate."""
        return cls(
            "identity",
            1,
            [(0, (1, 0, 0), 1.0), (1, (0, 1, 0), 1.0), (2, (0, 0, 1), 1.0)],
        )

    @classmethod
    def affine(cls) -> "ModelSpec":
        """Free linear part and translation in every component (p = 12)."""
        pattern = [
            (c, e, None)
            for c in range(3)
            for e in exponents_for_degree(1)
        ]
        return cls("affine", 1, pattern)

    @classmethod
    def full(cls, degree: int, name: str | None = None) -> "ModelSpec":
        """Every coefficient of every component free up to ``degree``."""
        pattern = [
            (c, e, None) for c in range(3) for e in exponents_for_degree(degree)
        ]
        return cls(name or f"full-degree-{degree}", degree, pattern)

    @classmethod
    def affine_quadratic_cubic(cls) -> "ModelSpec":
        """First component affine in X, Y, Z; second a diagonal quadratic
        ``a·Y² + b·X² + c·Z²``; third a pure cubic ``d·Z³`` (p = 8)."""
        pattern = [
            (0, (1, 0, 0), None),
            (0, (0, 1, 0), None),
            (0, (0, 0, 1), None),
            (0, (0, 0, 0), None),
            (1, (0, 2, 0), None),
            (1, (2, 0, 0), None),
            (1, (0, 0, 2), None),
            (2, (0, 0, 3), None),
        ]
        return cls("affine-quadratic-cubic", 3, pattern)


# ---------------------------------------------------------------------------
# Image-monomial machinery
# ---------------------------------------------------------------------------


def bidegree_monomials(dq: int, dqp: int) -> list[tuple[int, int, int, int]]:
    """Exponents ``(i, j, k, l)`` with ``i + j ≤ dq`` and ``k + l ≤ dqp``,
    sorted by total degree then lexicographically."""
    out = [
        (i, j, k, l)
        for i, j in itertools.product(range(dq + 1), repeat=2)
        if i + j <= dq
        for k, l in itertools.product(range(dqp + 1), repeat=2)
        if k + l <= dqp
    ]
    out.sort(key=lambda e: (sum(e), e))
    return out


def evaluate_support(support, qx, qy, qxp, qyp) -> np.ndarray:
    """Design matrix: one row per match, one column per support monomial."""
    e = np.asarray(list(support), dtype=int)
    return (
        qx[:, None] ** e[None, :, 0]
        * qy[:, None] ** e[None, :, 1]
        * qxp[:, None] ** e[None, :, 2]
        * qyp[:, None] ** e[None, :, 3]
    )


def _charts(rays: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rays = np.asarray(rays, dtype=float).reshape(-1, 3)
    z = rays[:, 2]
    if np.any(np.abs(z) < 1e-12 * np.linalg.norm(rays, axis=1)):
        raise ZeroProjection(
            "a ray is (nearly) parallel to the image plane; chart "
            "coordinates are undefined"
        )
    return rays[:, 0] / z, rays[:, 1] / z


def _pair_charts(pairs):
    if isinstance(pairs, CorrespondenceSet):
        if pairs.n_views < 2:
            raise ValueError("need two views of the matches")
        v1, v2 = pairs.view_array(0), pairs.view_array(1)
    else:
        v1, v2 = pairs
    qx, qy = _charts(v1)
    qxp, qyp = _charts(v2)
    return qx, qy, qxp, qyp


def _nullspace(design: np.ndarray, tol: float = NULLITY_TOL):
    """Nullity, null vectors and singular values after equilibration.

    Row scaling never moves the nullspace; column scaling by ``w``
    rescales null vectors to ``w·v``, which is undone before returning
    so coefficient magnitudes refer to the original monomials.
    """
    d = design.copy()
    w = np.ones(design.shape[1])
    for _ in range(3):
        r = np.linalg.norm(d, axis=1, keepdims=True)
        r[r == 0] = 1.0
        d /= r
        c = np.linalg.norm(d, axis=0)
        c[c == 0] = 1.0
        d /= c
        w /= c
    sv = np.linalg.svd(d, compute_uv=False)
    ncols = design.shape[1]
    sv = np.concatenate([sv, np.zeros(ncols - sv.size)])
    dim = int(np.sum(sv < sv[0] * tol)) if sv[0] > 0 else ncols
    vecs = np.empty((0, ncols))
    if dim:
        vt = np.linalg.svd(d, full_matrices=True)[2]
        vecs = vt[ncols - dim :] * w[None, :]
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return dim, vecs, sv


def sample_model_matches(
    model: ModelSpec,
    theta,
    n_points: int,
    rng: np.random.Generator | int | None = None,
    label: str = "",
) -> CorrespondenceSet:
    """Exact two-view matches of random points under one model instance.

    Depths and chart positions are standard normal; draws with depth
    magnitude below 1e−3 (the localization guard) or with a deformed
    point too close to the image plane are rejected and redrawn.
    """
    gen = np.random.default_rng(0 if rng is None else rng)
    qx, qy, qxp, qyp = _sample_charts(model, theta, n_points, gen)
    first = np.column_stack([qx, qy, np.ones(n_points)])
    second = np.column_stack([qxp, qyp, np.ones(n_points)])
    return CorrespondenceSet([first, second], label=label)


def _sample_charts(model, theta, n, gen, max_attempts=200):
    qx = np.empty(n)
    qy = np.empty(n)
    qxp = np.empty(n)
    qyp = np.empty(n)
    m = 0
    attempts = 0
    while m < n:
        attempts += 1
        if attempts > max_attempts * (n + 1):
            raise NoConstraint(
                f"model '{model.name}' keeps sending sampled points into the "
                "image plane; cannot draw matches"
            )
        x, y = gen.standard_normal(2)
        depth = gen.standard_normal()
        if abs(depth) < _MIN_DEPTH:
            continue
        w = model.apply(theta, depth * np.array([[x, y, 1.0]]))[0]
        if abs(w[2]) < _MIN_CHART:
            continue
        qx[m], qy[m] = x, y
        qxp[m], qyp[m] = w[0] / w[2], w[1] / w[2]
        m += 1
    return qx, qy, qxp, qyp


# ---------------------------------------------------------------------------
# Support discovery
# ---------------------------------------------------------------------------


def _search_cells(bound: int):
    cells = [
        (dq, dqp)
        for dq in range(1, bound + 1)
        for dqp in range(1, bound + 1)
    ]
    cells.sort(key=lambda c: (c[0] + c[1], c[0]))
    return cells


def discover_support(
    model: ModelSpec,
    degree_bound: int,
    n_samples: int,
    *,
    n_instances: int = 3,
    rng: np.random.Generator | int | None = None,
) -> list[tuple[int, int, int, int]]:
    """Find the monomial support of the model's matching constraint.

    Bidegree boxes ``(d_q, d_q')`` are scanned in order of increasing
    total degree.  For each box and each of ``n_instances`` random model
    instances, a design matrix of sampled exact matches is built; the
    first box on which every instance shows a one-dimensional nullspace
    yields the support (union of entries above ``SUPPORT_TOL`` across
    instances — the specialization of a coefficient can vanish for one
    parameter draw but not for all).

    Args:
        model: the deformation class to implicitize.
        degree_bound: cap on each of the two bidegree components.
        n_samples: matches drawn per instance (raised automatically to
            comfortably overdetermine the design matrix).
        n_instances: independent model instances that must agree.
        rng: seed or generator; the default is deterministic.

    Raises:
        NoConstraint: no box up to the cap has a nullspace.
        NonUniqueConstraint: the first nonempty nullspace has dimension
            above one; its dimension and the union support ride on the
            exception for callers that can use a non-principal answer.
    """
    gen = np.random.default_rng(0 if rng is None else rng)
    for dq, dqp in _search_cells(degree_bound):
        monomials = bidegree_monomials(dq, dqp)
        rows = max(int(n_samples), len(monomials) + 12)
        dims = []
        support = np.zeros(len(monomials), dtype=bool)
        for _ in range(n_instances):
            theta = model.sample_parameters(gen)
            qx, qy, qxp, qyp = _sample_charts(model, theta, rows, gen)
            design = evaluate_support(monomials, qx, qy, qxp, qyp)
            dim, vecs, _ = _nullspace(design)
            dims.append(dim)
            for v in vecs:
                support |= np.abs(v) > SUPPORT_TOL
        if max(dims) == 0:
            continue
        found = sorted(
            (m for m, flag in zip(monomials, support) if flag),
            key=lambda e: (sum(e), e),
        )
        if min(dims) != max(dims) or max(dims) > 1:
            raise NonUniqueConstraint(
                f"model '{model.name}' has a {max(dims)}-dimensional constraint "
                f"space at bidegree ({dq}, {dqp}); the union support is attached",
                dimension=max(dims),
                support=found,
            )
        return found
    raise NoConstraint(
        f"no matching constraint for model '{model.name}' up to bidegree "
        f"({degree_bound}, {degree_bound})"
    )


# ---------------------------------------------------------------------------
# Constraint fitting and model selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchingConstraint:
    """A fitted matching polynomial: support, unit coefficients, residual."""

    support: tuple
    coefficients: np.ndarray
    fit_residual: float

    def __post_init__(self):
        sup = tuple(tuple(int(x) for x in e) for e in self.support)
        if list(sup) != sorted(sup, key=lambda e: (sum(e), e)):
            raise ValueError("support must be in canonical monomial order")
        c = np.array(self.coefficients, dtype=float).reshape(len(sup))
        norm = np.linalg.norm(c)
        if not 0.999999 < norm < 1.000001:
            raise ValueError("coefficient vector must have unit norm")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "fit_residual", float(self.fit_residual))
        self.coefficients.setflags(write=False)

    def evaluate(self, pairs) -> np.ndarray:
        """Row-normalized constraint values on matches (0 = satisfied)."""
        qx, qy, qxp, qyp = _pair_charts(pairs)
        design = evaluate_support(self.support, qx, qy, qxp, qyp)
        scale = np.linalg.norm(design, axis=1)
        scale[scale == 0] = 1.0
        return (design @ self.coefficients) / scale

    def cosine_distance(self, other_coefficients) -> float:
        """Sign- and scale-blind distance to another coefficient vector."""
        v = np.asarray(other_coefficients, dtype=float).reshape(-1)
        v = v / np.linalg.norm(v)
        return float(1.0 - abs(v @ self.coefficients))


def fit_constraint(support, pairs) -> MatchingConstraint:
    """Fit constraint coefficients on a known support from matches.

    The coefficient vector is the smallest right singular vector of the
    equilibrated design matrix; ``fit_residual`` is the ratio of its
    singular value to the largest one, so exact matches from the right
    model give ~1e−16 and wrong-model matches give order one.

    Raises:
        InsufficientPoints: fewer matches than support monomials.
        RankDeficient: the design matrix has a nullspace of dimension
            above one, so the matches cannot pin the constraint.
    """
    support = sorted((tuple(int(x) for x in e) for e in support), key=lambda e: (sum(e), e))
    qx, qy, qxp, qyp = _pair_charts(pairs)
    if qx.size < len(support):
        raise InsufficientPoints(
            f"fitting {len(support)} coefficients needs at least "
            f"{len(support)} matches, got {qx.size}"
        )
    design = evaluate_support(support, qx, qy, qxp, qyp)
    dim, vecs, sv = _nullspace(design)
    if dim > 1:
        raise RankDeficient(
            f"matches leave a {dim}-dimensional space of constraints; "
            "the data is degenerate for this support"
        )
    if dim == 1:
        coeffs = vecs[0]
    else:
        d = design / np.linalg.norm(design, axis=1, keepdims=True)
        coeffs = np.linalg.svd(d)[2][-1]
    k = int(np.argmax(np.abs(coeffs)))
    if coeffs[k] < 0:
        coeffs = -coeffs
    coeffs = coeffs / np.linalg.norm(coeffs)
    return MatchingConstraint(tuple(support), coeffs, sv[-1] / sv[0])


@dataclass(frozen=True)
class CandidateScore:
    """One model's performance on the matches under scrutiny."""

    name: str
    support_size: int
    residual: float
    rank_gap: float
    criterion: float
    accepted: bool
    note: str = ""


@dataclass(frozen=True)
class ModelVerdict:
    """Scores for every candidate plus the winning model name."""

    candidates: tuple
    selected: str

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        accepted = [c for c in self.candidates if c.accepted]
        if not accepted:
            raise ValueError("a verdict needs at least one accepted candidate")
        best = min(accepted, key=lambda c: c.criterion)
        if best.name != self.selected:
            raise ValueError("selected model must minimize the criterion")

    def score_of(self, name: str) -> CandidateScore:
        for c in self.candidates:
            if c.name == name:
                return c
        raise KeyError(name)


_SUPPORT_CACHE: dict = {}


def _support_for(model: ModelSpec, degree_bound: int, n_samples: int):
    key = (model.key(), degree_bound, n_samples)
    if key not in _SUPPORT_CACHE:
        _SUPPORT_CACHE[key] = discover_support(model, degree_bound, n_samples)
    return _SUPPORT_CACHE[key]


def select_model(
    pairs,
    candidates,
    *,
    degree_bound: int = 6,
    n_samples: int = 400,
    kappa: float = 2.0,
    reject_above: float = 1e-6,
) -> ModelVerdict:
    """Choose the candidate model class that best explains the matches.

    Each candidate's constraint support is discovered (and cached), its
    coefficients fitted on the matches, and the candidate scored by
    ``n·log(residual²) + κ·|support|`` — a fit/complexity trade-off, so
    a smaller support wins when residuals tie.  Candidates whose support
    search fails are scored as unusable but still reported.

    Raises:
        AllRejected: every candidate's residual exceeds ``reject_above``
            (or no candidate has a usable constraint).
    """
    qx, qy, qxp, qyp = _pair_charts(pairs)
    n = qx.size
    scores = []
    for model in candidates:
        try:
            support = _support_for(model, degree_bound, n_samples)
        except (NoConstraint, NonUniqueConstraint) as exc:
            scores.append(
                CandidateScore(
                    model.name, 0, float("inf"), 0.0, float("inf"), False, str(exc)
                )
            )
            continue
        try:
            fitted = fit_constraint(support, ((np.column_stack([qx, qy, np.ones(n)])),
                                              (np.column_stack([qxp, qyp, np.ones(n)]))))
        except (InsufficientPoints, RankDeficient) as exc:
            scores.append(
                CandidateScore(
                    model.name, len(support), float("inf"), 0.0, float("inf"),
                    False, str(exc)
                )
            )
            continue
        res = fitted.fit_residual
        gap = _rank_gap(support, qx, qy, qxp, qyp)
        crit = n * float(np.log(res**2 + 1e-300)) + kappa * len(support)
        scores.append(
            CandidateScore(
                model.name, len(support), res, gap, crit, res <= reject_above
            )
        )
    accepted = [s for s in scores if s.accepted]
    if not accepted:
        raise AllRejected(
            "no candidate model fits the matches: smallest residual "
            f"{min((s.residual for s in scores), default=float('inf')):.2e} "
            f"exceeds {reject_above:.0e}"
        )
    best = min(accepted, key=lambda s: s.criterion)
    return ModelVerdict(tuple(scores), best.name)


def _rank_gap(support, qx, qy, qxp, qyp) -> float:
    _, _, sv = _nullspace(evaluate_support(list(support), qx, qy, qxp, qyp))
    if sv[-1] <= 0:
        return float("inf")
    return float(sv[-2] / sv[-1])
