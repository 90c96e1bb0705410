"""Pure-Python (NumPy) implementations of the numerical hot kernels.

Every function here has an identically named, identically behaving twin
in the compiled extension ``_kernels``; the active backend is chosen in
``_backend``.  Keep the two in sync — the test suite checks parity.

Conventions shared by all kernels:

* image rays ``q1, q2, q3`` are ``(n, 3)`` float64 arrays (unit rays in
  the solvers, but nothing here assumes unit norm);
* the unknown vector of the three-view quadratic systems is
  ``u = [theta (30), depths (n)]`` where ``theta`` is the row-major
  3×10 coefficient matrix of a quadratic map;
* the quadratic monomial order is that of
  ``geometry.exponents_for_degree(2)``:
  ``1, X, Y, Z, X², XY, XZ, Y², YZ, Z²``.
"""

from __future__ import annotations

import numpy as np

P_QUAD = 30  # free coefficients of a full quadratic map
M_QUAD = 10  # quadratic monomials

_EXP2 = np.array(
    [
        (0, 0, 0),
        (1, 0, 0),
        (0, 1, 0),
        (0, 0, 1),
        (2, 0, 0),
        (1, 1, 0),
        (1, 0, 1),
        (0, 2, 0),
        (0, 1, 1),
        (0, 0, 2),
    ]
)


def quad_monomials(points: np.ndarray) -> np.ndarray:
    """Quadratic monomial matrix, shape ``(n, 10)``."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    one = np.ones_like(x)
    return np.stack(
        [one, x, y, z, x * x, x * y, x * z, y * y, y * z, z * z], axis=1
    )


def quad_monomial_grads(points: np.ndarray) -> np.ndarray:
    """Gradients of the quadratic monomials, shape ``(3, n, 10)``.

    ``out[ax, i, m]`` is the derivative of monomial ``m`` with respect to
    coordinate ``ax`` at point ``i``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    n = P.shape[0]
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    zero = np.zeros(n)
    one = np.ones(n)
    gx = np.stack([zero, one, zero, zero, 2 * x, y, z, zero, zero, zero], axis=1)
    gy = np.stack([zero, zero, one, zero, zero, x, zero, 2 * y, z, zero], axis=1)
    gz = np.stack([zero, zero, zero, one, zero, zero, x, zero, y, 2 * z], axis=1)
    return np.stack([gx, gy, gz])


# ---------------------------------------------------------------------------
# Three-view affine systems (12 base equations each)
# ---------------------------------------------------------------------------


def repeated_system(
    u: np.ndarray,
    A0: np.ndarray,
    a0: np.ndarray,
    C0: np.ndarray,
    c0: np.ndarray,
    free_scale: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Residual and Jacobian of the repeated-deformation system.

    Unknowns: ``[alpha, gamma, (s,), v1 (3), v3 (3)]`` — 8 of them, or 9
    when ``free_scale`` adds the relative scale ``s`` of the second input
    decomposition.  The 12 equations are

    ``r1 = N a0 + alpha a0 - gamma c0``            (3)
    ``r2 = gamma N² - alpha² (s C0 + c0 v3ᵀ)``     (9)

    with ``N = A0 + a0 v1ᵀ``.
    """
    if free_scale:
        al, ga, sc = u[0], u[1], u[2]
        v1, v3 = u[3:6], u[6:9]
        nu, kv = 9, 3
    else:
        al, ga, sc = u[0], u[1], 1.0
        v1, v3 = u[2:5], u[5:8]
        nu, kv = 8, 2
    N = A0 + np.outer(a0, v1)
    Na0 = N @ a0
    NN = N @ N
    S3 = sc * C0 + np.outer(c0, v3)
    r = np.concatenate([Na0 + al * a0 - ga * c0, (ga * NN - al**2 * S3).ravel()])
    J = np.zeros((12, nu))
    J[0:3, 0] = a0
    J[3:12, 0] = (-2.0 * al * S3).ravel()
    J[0:3, 1] = -c0
    J[3:12, 1] = NN.ravel()
    if free_scale:
        J[3:12, 2] = (-(al**2) * C0).ravel()
    for j in range(3):
        J[0:3, kv + j] = a0 * a0[j]
        dr2 = ga * np.outer(a0, N[j, :])
        dr2[:, j] += ga * Na0
        J[3:12, kv + j] = dr2.ravel()
        dr2 = np.zeros((3, 3))
        dr2[:, j] = -(al**2) * c0
        J[3:12, kv + 3 + j] = dr2.ravel()
    return r, J


def quasi_system(
    u: np.ndarray,
    A0: np.ndarray,
    a0: np.ndarray,
    C0: np.ndarray,
    c0: np.ndarray,
    rho: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Residual and Jacobian of the scaled-repetition system (13 rows).

    Unknowns ``[alpha, gamma, lam, mu, v1 (3), v3 (3)]``.  The equations
    extend :func:`repeated_system` with the scale pair ``(lam, mu)`` of a
    second deformation ``(lam·A, mu·a)``:

    ``r1 = lam N a0 + alpha mu a0 - gamma c0``     (3)
    ``r2 = lam gamma N² - alpha² (C0 + c0 v3ᵀ)``   (9)
    ``r3 = lam·mu - rho``                          (1)

    where ``rho`` pins the product of the scales to the ratio observed
    between the direct 2→3 and 1→2 essential matrices.
    """
    al, ga, lam, mu = u[0], u[1], u[2], u[3]
    v1, v3 = u[4:7], u[7:10]
    N = A0 + np.outer(a0, v1)
    Na0 = N @ a0
    NN = N @ N
    S3 = C0 + np.outer(c0, v3)
    r = np.concatenate(
        [
            lam * Na0 + al * mu * a0 - ga * c0,
            (lam * ga * NN - al**2 * S3).ravel(),
            [lam * mu - rho],
        ]
    )
    J = np.zeros((13, 10))
    J[0:3, 0] = mu * a0
    J[3:12, 0] = (-2.0 * al * S3).ravel()
    J[0:3, 1] = -c0
    J[3:12, 1] = (lam * NN).ravel()
    J[0:3, 2] = Na0
    J[3:12, 2] = (ga * NN).ravel()
    J[12, 2] = mu
    J[0:3, 3] = al * a0
    J[12, 3] = lam
    for j in range(3):
        J[0:3, 4 + j] = lam * a0 * a0[j]
        dr2 = lam * ga * np.outer(a0, N[j, :])
        dr2[:, j] += lam * ga * Na0
        J[3:12, 4 + j] = dr2.ravel()
        dr2 = np.zeros((3, 3))
        dr2[:, j] = -(al**2) * c0
        J[3:12, 7 + j] = dr2.ravel()
    return r, J


def generic_system(
    u: np.ndarray,
    A0: np.ndarray,
    a0: np.ndarray,
    B0: np.ndarray,
    b0: np.ndarray,
    C0: np.ndarray,
    c0: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Residual and Jacobian of the two-unrelated-deformations system.

    Unknowns ``[alpha, beta, gamma, v1 (3), v2 (3), v3 (3)]`` (12).  With
    ``N_A = A0 + a0 v1ᵀ`` and ``N_B = B0 + b0 v2ᵀ``, the 12 equations
    (denominators cleared by ``beta``) are

    ``r1 = alpha N_B a0 + beta² b0 - beta gamma c0``   (3)
    ``r2 = gamma N_B N_A - alpha beta (C0 + c0 v3ᵀ)``  (9)
    """
    al, be, ga = u[0], u[1], u[2]
    v1, v2, v3 = u[3:6], u[6:9], u[9:12]
    NA = A0 + np.outer(a0, v1)
    NB = B0 + np.outer(b0, v2)
    NBa0 = NB @ a0
    NBNA = NB @ NA
    S3 = C0 + np.outer(c0, v3)
    r = np.concatenate(
        [al * NBa0 + be**2 * b0 - be * ga * c0, (ga * NBNA - al * be * S3).ravel()]
    )
    J = np.zeros((12, 12))
    J[0:3, 0] = NBa0
    J[3:12, 0] = (-be * S3).ravel()
    J[0:3, 1] = 2.0 * be * b0 - ga * c0
    J[3:12, 1] = (-al * S3).ravel()
    J[0:3, 2] = -be * c0
    J[3:12, 2] = NBNA.ravel()
    for j in range(3):
        dr2 = np.zeros((3, 3))
        dr2[:, j] = ga * NBa0
        J[3:12, 3 + j] = dr2.ravel()
        J[0:3, 6 + j] = al * b0 * a0[j]
        J[3:12, 6 + j] = (ga * np.outer(b0, NA[j, :])).ravel()
        dr2 = np.zeros((3, 3))
        dr2[:, j] = -al * be * c0
        J[3:12, 9 + j] = dr2.ravel()
    return r, J


# ---------------------------------------------------------------------------
# Three-view quadratic-map systems
# ---------------------------------------------------------------------------


def three_view_residual(
    u: np.ndarray, q1: np.ndarray, q2: np.ndarray, q3: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Single-map formulation: one quadratic map applied twice.

    Rows: ``q2_i × Φ(P_i)`` and ``q3_i × Φ(Φ(P_i))`` for every point
    (``P_i = depth_i · q1_i``), plus the gauge row
    ``mean(constant coefficients) - 1``.
    """
    n = q1.shape[0]
    th = u[:P_QUAD].reshape(3, M_QUAD)
    al = u[P_QUAD:]
    P = al[:, None] * q1
    MP = quad_monomials(P)
    Q = MP @ th.T
    MQ = quad_monomials(Q)
    R = MQ @ th.T
    r = np.concatenate(
        [
            np.cross(q2, Q).ravel(),
            np.cross(q3, R).ravel(),
            [(th[0, 0] + th[1, 0] + th[2, 0]) / 3.0 - 1.0],
        ]
    )
    dmP = quad_monomial_grads(P)
    dmQ = quad_monomial_grads(Q)
    JP = np.empty((n, 3, 3))
    JQ = np.empty((n, 3, 3))
    for ax in range(3):
        JP[:, :, ax] = dmP[ax] @ th.T
        JQ[:, :, ax] = dmQ[ax] @ th.T
    J = np.zeros((6 * n + 1, P_QUAD + n))
    for k in range(3):
        ek = np.zeros(3)
        ek[k] = 1.0
        cr2 = np.cross(q2, ek)
        J[: 3 * n, k * M_QUAD : (k + 1) * M_QUAD] = (
            cr2[:, :, None] * MP[:, None, :]
        ).reshape(3 * n, M_QUAD)
        blk = np.einsum("ni,nj->nij", JQ[:, :, k], MP) + ek[None, :, None] * MQ[:, None, :]
        crb = np.cross(
            q3[:, None, :].repeat(M_QUAD, 1), blk.transpose(0, 2, 1)
        ).transpose(0, 2, 1)
        J[3 * n : 6 * n, k * M_QUAD : (k + 1) * M_QUAD] = crb.reshape(3 * n, M_QUAD)
    dQa = np.einsum("nij,nj->ni", JP, q1)
    dRa = np.einsum("nij,nj->ni", JQ, dQa)
    cr2a = np.cross(q2, dQa)
    cr3a = np.cross(q3, dRa)
    for i in range(n):
        J[3 * i : 3 * i + 3, P_QUAD + i] = cr2a[i]
        J[3 * n + 3 * i : 3 * n + 3 * i + 3, P_QUAD + i] = cr3a[i]
    J[6 * n, 0] = J[6 * n, M_QUAD] = J[6 * n, 2 * M_QUAD] = 1.0 / 3.0
    return r, J


def split_residual(
    u: np.ndarray, q1: np.ndarray, q2: np.ndarray, q3: np.ndarray, w: float
) -> tuple[np.ndarray, np.ndarray]:
    """Two-map splitting formulation with coupling weight ``w``.

    Unknowns ``[theta1 (30), theta2 (30), depth1 (n), depth2 (n)]``.
    The 1→2 step is written as an exact point equation
    ``Φ₁(P_i) = depth2_i · q2_i`` (3 rows per point), the 2→3 step as a
    cross product ``q3_i × Φ₂(depth2_i q2_i)``, plus one gauge row per
    map and ``√w (theta1 - theta2)`` coupling rows.  Ramping ``w`` from 0
    to large is the continuation strategy that merges the two maps.
    """
    n = q1.shape[0]
    sw = np.sqrt(w)
    th1 = u[:P_QUAD].reshape(3, M_QUAD)
    th2 = u[P_QUAD : 2 * P_QUAD].reshape(3, M_QUAD)
    al = u[2 * P_QUAD : 2 * P_QUAD + n]
    be = u[2 * P_QUAD + n :]
    P = al[:, None] * q1
    W = be[:, None] * q2
    MP = quad_monomials(P)
    MW = quad_monomials(W)
    F1 = MP @ th1.T - be[:, None] * q2
    R3 = np.cross(q3, MW @ th2.T)
    g1 = (th1[0, 0] + th1[1, 0] + th1[2, 0]) / 3.0 - 1.0
    g2 = (th2[0, 0] + th2[1, 0] + th2[2, 0]) / 3.0 - 1.0
    cpl = sw * (u[:P_QUAD] - u[P_QUAD : 2 * P_QUAD])
    r = np.concatenate([F1.ravel(), R3.ravel(), [g1, g2], cpl])

    J = np.zeros((6 * n + 2 + P_QUAD, 2 * P_QUAD + 2 * n))
    for k in range(3):
        J[np.arange(n) * 3 + k, k * M_QUAD : (k + 1) * M_QUAD] = MP
    dmP = quad_monomial_grads(P)
    JP = np.empty((n, 3, 3))
    for ax in range(3):
        JP[:, :, ax] = dmP[ax] @ th1.T
    dF1a = np.einsum("nij,nj->ni", JP, q1)
    for i in range(n):
        J[3 * i : 3 * i + 3, 2 * P_QUAD + i] = dF1a[i]
        J[3 * i : 3 * i + 3, 2 * P_QUAD + n + i] = -q2[i]
    for k in range(3):
        ek = np.zeros(3)
        ek[k] = 1.0
        cr = np.cross(q3, ek)
        J[3 * n : 6 * n, P_QUAD + k * M_QUAD : P_QUAD + (k + 1) * M_QUAD] = (
            cr[:, :, None] * MW[:, None, :]
        ).reshape(3 * n, M_QUAD)
    dmW = quad_monomial_grads(W)
    JW = np.empty((n, 3, 3))
    for ax in range(3):
        JW[:, :, ax] = dmW[ax] @ th2.T
    dR3b = np.cross(q3, np.einsum("nij,nj->ni", JW, q2))
    for i in range(n):
        J[3 * n + 3 * i : 3 * n + 3 * i + 3, 2 * P_QUAD + n + i] = dR3b[i]
    J[6 * n, 0] = J[6 * n, M_QUAD] = J[6 * n, 2 * M_QUAD] = 1.0 / 3.0
    J[6 * n + 1, P_QUAD] = J[6 * n + 1, P_QUAD + M_QUAD] = J[
        6 * n + 1, P_QUAD + 2 * M_QUAD
    ] = 1.0 / 3.0
    J[6 * n + 2 :, :P_QUAD] = sw * np.eye(P_QUAD)
    J[6 * n + 2 :, P_QUAD : 2 * P_QUAD] = -sw * np.eye(P_QUAD)
    return r, J


def two_view_residual(
    u: np.ndarray, q1: np.ndarray, q2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Two-view quadratic system: rows ``q2_i × Φ(P_i)`` plus the gauge row.

    Unknowns ``[theta (30), depths (n)]``.  With only two views the
    system is underdetermined (3n + 1 rows, 30 + n unknowns), which is
    exactly what the insufficiency witness demonstrates.
    """
    n = q1.shape[0]
    th = u[:P_QUAD].reshape(3, M_QUAD)
    al = u[P_QUAD:]
    P = al[:, None] * q1
    MP = quad_monomials(P)
    Q = MP @ th.T
    r = np.concatenate(
        [np.cross(q2, Q).ravel(), [(th[0, 0] + th[1, 0] + th[2, 0]) / 3.0 - 1.0]]
    )
    dmP = quad_monomial_grads(P)
    JP = np.empty((n, 3, 3))
    for ax in range(3):
        JP[:, :, ax] = dmP[ax] @ th.T
    J = np.zeros((3 * n + 1, P_QUAD + n))
    for k in range(3):
        ek = np.zeros(3)
        ek[k] = 1.0
        cr2 = np.cross(q2, ek)
        J[: 3 * n, k * M_QUAD : (k + 1) * M_QUAD] = (
            cr2[:, :, None] * MP[:, None, :]
        ).reshape(3 * n, M_QUAD)
    dQa = np.einsum("nij,nj->ni", JP, q1)
    cr2a = np.cross(q2, dQa)
    for i in range(n):
        J[3 * i : 3 * i + 3, P_QUAD + i] = cr2a[i]
    J[3 * n, 0] = J[3 * n, M_QUAD] = J[3 * n, 2 * M_QUAD] = 1.0 / 3.0
    return r, J


def theta_design(
    al: np.ndarray,
    be: np.ndarray,
    q1: np.ndarray,
    q2: np.ndarray,
    q3: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Linear design for the map coefficients given both depth vectors.

    Returns ``(A, b)`` with ``A θ ≈ b``: exact 1→2 point equations, 2→3
    cross-product rows, and the gauge row.  Solving by least squares
    gives the alternation update for ``θ``.
    """
    n = q1.shape[0]
    P = al[:, None] * q1
    W = be[:, None] * q2
    MP = quad_monomials(P)
    MW = quad_monomials(W)
    A = np.zeros((6 * n + 1, P_QUAD))
    b = np.zeros(6 * n + 1)
    for k in range(3):
        A[np.arange(n) * 3 + k, k * M_QUAD : (k + 1) * M_QUAD] = MP
    b[: 3 * n] = (be[:, None] * q2).ravel()
    for k in range(3):
        ek = np.zeros(3)
        ek[k] = 1.0
        cr = np.cross(q3, ek)
        A[3 * n : 6 * n, k * M_QUAD : (k + 1) * M_QUAD] = (
            cr[:, :, None] * MW[:, None, :]
        ).reshape(3 * n, M_QUAD)
    A[6 * n, 0] = A[6 * n, M_QUAD] = A[6 * n, 2 * M_QUAD] = 1.0 / 3.0
    b[6 * n] = 1.0
    return A, b


def depth_scan(
    theta: np.ndarray,
    q1: np.ndarray,
    q2: np.ndarray,
    q3: np.ndarray,
    grid: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-point grid search for the best depth pair given a map.

    For each point, scans the candidate first-view depths in ``grid``,
    computes the induced second-view depth by projection, and keeps the
    pair minimizing the reprojection cost in views 2 and 3.
    """
    n = q1.shape[0]
    C = np.asarray(theta, dtype=float).reshape(3, M_QUAD)
    al = np.empty(n)
    be = np.empty(n)
    for i in range(n):
        Pg = grid[:, None] * q1[i][None, :]
        Qg = quad_monomials(Pg) @ C.T
        bg = Qg @ q2[i]
        res2 = Qg - bg[:, None] * q2[i][None, :]
        Wg = bg[:, None] * q2[i][None, :]
        Rg = quad_monomials(Wg) @ C.T
        res3 = np.cross(np.broadcast_to(q3[i], Rg.shape), Rg)
        cost = (res2**2).sum(1) + (res3**2).sum(1)
        j = int(np.argmin(cost))
        al[i] = grid[j]
        be[i] = bg[j]
    return al, be
