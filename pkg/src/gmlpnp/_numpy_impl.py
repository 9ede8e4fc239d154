"""Pure-numpy reference implementations of the solver hot kernels.

Every function here has an ``@njit`` twin in :mod:`gmlpnp._numba_impl` with
the same signature; :mod:`gmlpnp.backend` picks the active set at import time
(``GMLPNP_BACKEND=numpy|numba``). Keep the control flow of ``inner_solve``
in lockstep with the numba twin so both backends take the same branches.

Covariances enter only through ``W``, the inverse of the lower Cholesky
factor of the noise covariance (whitening matrix), so no explicit covariance
inverse is ever formed.
"""

import numpy as np

LM_LAMBDA_MIN = 1e-15
LM_LAMBDA_MAX = 1e32


def cholesky3(S):
    """Lower Cholesky factor of a 3x3 SPD matrix. Returns (L, ok)."""
    L = np.zeros((3, 3))
    a = S[0, 0]
    if not np.isfinite(a) or a <= 0.0:
        return L, False
    l00 = np.sqrt(a)
    l10 = S[1, 0] / l00
    l20 = S[2, 0] / l00
    b = S[1, 1] - l10 * l10
    if not np.isfinite(b) or b <= 0.0:
        return L, False
    l11 = np.sqrt(b)
    l21 = (S[2, 1] - l20 * l10) / l11
    c = S[2, 2] - l20 * l20 - l21 * l21
    if not np.isfinite(c) or c <= 0.0:
        return L, False
    l22 = np.sqrt(c)
    L[0, 0] = l00
    L[1, 0] = l10
    L[1, 1] = l11
    L[2, 0] = l20
    L[2, 1] = l21
    L[2, 2] = l22
    return L, True


def whitening_from_cholesky(L):
    """Inverse of a lower-triangular 3x3 factor, in closed form."""
    W = np.zeros((3, 3))
    W[0, 0] = 1.0 / L[0, 0]
    W[1, 1] = 1.0 / L[1, 1]
    W[2, 2] = 1.0 / L[2, 2]
    W[1, 0] = -L[1, 0] / (L[0, 0] * L[1, 1])
    W[2, 1] = -L[2, 1] / (L[1, 1] * L[2, 2])
    W[2, 0] = (L[1, 0] * L[2, 1] - L[2, 0] * L[1, 1]) / (L[0, 0] * L[1, 1] * L[2, 2])
    return W


def rodrigues(phi):
    """Rotation matrix from an axis-angle vector (Rodrigues formula)."""
    t2 = float(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    if t2 < 1e-16:
        # second-order series; truncation error ~ theta^3 / 6
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        theta = np.sqrt(t2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / t2
    x, y, z = float(phi[0]), float(phi[1]), float(phi[2])
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + a * K + b * (K @ K)


def optimal_scales(points, rays, R, t, W):
    """Closed-form per-point depths minimizing the whitened residual."""
    rm = rays @ R.T
    wp = (points - t) @ W.T
    wr = rm @ W.T
    return np.sum(wp * wr, axis=1) / np.sum(wr * wr, axis=1)


def residual_array(points, rays, R, t, s):
    """Object-space residuals p_i - (s_i * R m_i + t), one row per point."""
    return points - (s[:, None] * (rays @ R.T) + t)


def whitened_cost(e, W):
    """Half the squared Frobenius norm of the whitened residuals."""
    we = e @ W.T
    return 0.5 * float(np.sum(we * we))


def _whitened_jacobians(rays, R, s, W):
    """Whitened per-point 3x6 Jacobians of the residual.

    The parameter order is (rotation tangent, translation) with the rotation
    perturbed on the right: R <- R @ rodrigues(delta_phi). The rotation block
    of the raw Jacobian is s_i * R @ skew(m_i) (its k-th column is
    s_i * cross(R m_i, R e_k)); the translation block is -I.
    """
    n = rays.shape[0]
    rm = rays @ R.T
    B = np.stack(
        [np.cross(rm, R[:, 0]), np.cross(rm, R[:, 1]), np.cross(rm, R[:, 2])],
        axis=2,
    ) * s[:, None, None]
    J = np.empty((n, 3, 6))
    J[:, :, :3] = np.einsum("ab,nbc->nac", W, B)
    J[:, :, 3:] = -W
    return J, rm


def gradient_fixed_scales(rays, R, s, e, W):
    """Exact gradient of ``whitened_cost`` with the depths held fixed."""
    J, _ = _whitened_jacobians(rays, R, s, W)
    ew = e @ W.T
    return np.einsum("nba,nb->a", J, ew)


def normal_equations(rays, R, s, e, W):
    """Gauss-Newton system of the depth-concentrated cost.

    Variable projection (Kaufman form): each whitened Jacobian is projected
    onto the orthogonal complement of its whitened ray direction, which is
    the subspace the residual lives in once the depth is refit per
    evaluation. With optimal depths the returned g equals
    ``gradient_fixed_scales`` (envelope theorem); H additionally accounts
    for the depth refit, which is what makes the steps converge fast.
    """
    J, rm = _whitened_jacobians(rays, R, s, W)
    u = rm @ W.T
    q = np.sum(u * u, axis=1)
    coef = np.einsum("nb,nbc->nc", u, J) / q[:, None]
    Jp = J - u[:, :, None] * coef[:, None, :]
    ew = e @ W.T
    H = np.einsum("nba,nbc->ac", Jp, Jp)
    g = np.einsum("nba,nb->a", Jp, ew)
    return H, g


def solve_spd(A, b):
    """Solve A x = b for symmetric positive-definite A. Returns (x, ok)."""
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.zeros_like(b), False
    if not np.all(np.isfinite(x)):
        return x, False
    return x, True


def second_moment(e):
    """Unnormalized residual second moment sum_i e_i e_i^T."""
    return e.T @ e


def det3(M):
    """Determinant of a 3x3 matrix."""
    return float(
        M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
        - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
        + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0])
    )


def inner_solve(points, rays, W, R0, t0, max_iters, gtol, steptol, lam0):
    """Alternate closed-form depth elimination with damped GN pose steps.

    Depths are refit per candidate pose (the cost compared for acceptance is
    the depth-concentrated one), so accepted costs are monotonically
    non-increasing in the joint (pose, depths) objective.

    Returns (R, t, scales, cost, iterations, converged, ok). ``ok`` is False
    when the cost became non-finite; the caller turns that into an error.
    """
    R = R0.copy()
    t = t0.copy()
    lam = lam0
    s = optimal_scales(points, rays, R, t, W)
    e = residual_array(points, rays, R, t, s)
    cost = whitened_cost(e, W)
    iters = 0
    converged = False
    if not np.isfinite(cost):
        return R, t, s, cost, iters, converged, False

    for it in range(max_iters):
        H, g = normal_equations(rays, R, s, e, W)
        gnorm = np.sqrt(float(g @ g))
        if not np.isfinite(gnorm):
            return R, t, s, cost, iters, converged, False
        if gnorm < gtol:
            converged = True
            break
        iters = it + 1

        dH = np.diag(H).copy()
        dmax = float(np.max(dH))
        floor = 1e-12 * dmax if dmax > 0.0 else 1e-12
        dH = np.maximum(dH, floor)

        accepted = False
        while True:
            A = H + lam * np.diag(dH)
            delta, solved = solve_spd(A, -g)
            if solved:
                stepnorm = np.sqrt(float(delta @ delta))
                if stepnorm < steptol:
                    converged = True
                    break
                Rc = R @ rodrigues(delta[:3])
                tc = t + delta[3:]
                sc = optimal_scales(points, rays, Rc, tc, W)
                ec = residual_array(points, rays, Rc, tc, sc)
                costc = whitened_cost(ec, W)
                if np.isfinite(costc) and costc < cost:
                    R = Rc
                    t = tc
                    s = sc
                    e = ec
                    cost = costc
                    lam = max(lam * 0.1, LM_LAMBDA_MIN)
                    accepted = True
                    break
            lam = lam * 10.0
            if lam > LM_LAMBDA_MAX:
                break

        if converged or not accepted:
            break

    return R, t, s, cost, iters, converged, True
