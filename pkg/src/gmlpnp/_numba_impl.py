"""Numba-compiled twins of the hot kernels in :mod:`gmlpnp._numpy_impl`.

Same signatures, same branch structure; the loops here replace vectorized
numpy with machine code so small problems (n in the dozens) are not
dominated by per-call array overhead. All kernels are serial and
deterministic for a fixed input order.
"""

import numpy as np
from numba import njit

LM_LAMBDA_MIN = 1e-15
LM_LAMBDA_MAX = 1e32

_JIT = dict(cache=True, nogil=True, fastmath=False)


@njit(**_JIT)
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


@njit(**_JIT)
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


@njit(**_JIT)
def rodrigues(phi):
    """Rotation matrix from an axis-angle vector (Rodrigues formula)."""
    x = phi[0]
    y = phi[1]
    z = phi[2]
    t2 = x * x + y * y + z * z
    if t2 < 1e-16:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        theta = np.sqrt(t2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / t2
    R = np.empty((3, 3))
    R[0, 0] = 1.0 + b * (-y * y - z * z)
    R[0, 1] = -a * z + b * (x * y)
    R[0, 2] = a * y + b * (x * z)
    R[1, 0] = a * z + b * (x * y)
    R[1, 1] = 1.0 + b * (-x * x - z * z)
    R[1, 2] = -a * x + b * (y * z)
    R[2, 0] = -a * y + b * (x * z)
    R[2, 1] = a * x + b * (y * z)
    R[2, 2] = 1.0 + b * (-x * x - y * y)
    return R


@njit(**_JIT)
def optimal_scales(points, rays, R, t, W):
    """Closed-form per-point depths minimizing the whitened residual."""
    n = points.shape[0]
    s = np.empty(n)
    for i in range(n):
        num = 0.0
        den = 0.0
        rm0 = R[0, 0] * rays[i, 0] + R[0, 1] * rays[i, 1] + R[0, 2] * rays[i, 2]
        rm1 = R[1, 0] * rays[i, 0] + R[1, 1] * rays[i, 1] + R[1, 2] * rays[i, 2]
        rm2 = R[2, 0] * rays[i, 0] + R[2, 1] * rays[i, 1] + R[2, 2] * rays[i, 2]
        d0 = points[i, 0] - t[0]
        d1 = points[i, 1] - t[1]
        d2 = points[i, 2] - t[2]
        for k in range(3):
            wr = W[k, 0] * rm0 + W[k, 1] * rm1 + W[k, 2] * rm2
            wp = W[k, 0] * d0 + W[k, 1] * d1 + W[k, 2] * d2
            num += wp * wr
            den += wr * wr
        s[i] = num / den
    return s


@njit(**_JIT)
def residual_array(points, rays, R, t, s):
    """Object-space residuals p_i - (s_i * R m_i + t), one row per point."""
    n = points.shape[0]
    e = np.empty((n, 3))
    for i in range(n):
        rm0 = R[0, 0] * rays[i, 0] + R[0, 1] * rays[i, 1] + R[0, 2] * rays[i, 2]
        rm1 = R[1, 0] * rays[i, 0] + R[1, 1] * rays[i, 1] + R[1, 2] * rays[i, 2]
        rm2 = R[2, 0] * rays[i, 0] + R[2, 1] * rays[i, 1] + R[2, 2] * rays[i, 2]
        e[i, 0] = points[i, 0] - (s[i] * rm0 + t[0])
        e[i, 1] = points[i, 1] - (s[i] * rm1 + t[1])
        e[i, 2] = points[i, 2] - (s[i] * rm2 + t[2])
    return e


@njit(**_JIT)
def whitened_cost(e, W):
    """Half the squared Frobenius norm of the whitened residuals."""
    n = e.shape[0]
    acc = 0.0
    for i in range(n):
        for k in range(3):
            w = W[k, 0] * e[i, 0] + W[k, 1] * e[i, 1] + W[k, 2] * e[i, 2]
            acc += w * w
    return 0.5 * acc


@njit(**_JIT)
def _fill_whitened_jacobian(J, rays, R, s, W, i):
    """Whitened 3x6 residual Jacobian of point i, written into J.

    Same convention as the numpy twin: right-multiplicative rotation
    perturbation, parameters ordered (rotation tangent, translation); the
    rotation block of the raw Jacobian is s_i * R skew(m_i) (column k is
    s_i * cross(R m_i, R e_k)), the translation block is -I.
    """
    rm0 = R[0, 0] * rays[i, 0] + R[0, 1] * rays[i, 1] + R[0, 2] * rays[i, 2]
    rm1 = R[1, 0] * rays[i, 0] + R[1, 1] * rays[i, 1] + R[1, 2] * rays[i, 2]
    rm2 = R[2, 0] * rays[i, 0] + R[2, 1] * rays[i, 1] + R[2, 2] * rays[i, 2]
    si = s[i]
    for k in range(3):
        b0 = si * (rm1 * R[2, k] - rm2 * R[1, k])
        b1 = si * (rm2 * R[0, k] - rm0 * R[2, k])
        b2 = si * (rm0 * R[1, k] - rm1 * R[0, k])
        J[0, k] = W[0, 0] * b0 + W[0, 1] * b1 + W[0, 2] * b2
        J[1, k] = W[1, 0] * b0 + W[1, 1] * b1 + W[1, 2] * b2
        J[2, k] = W[2, 0] * b0 + W[2, 1] * b1 + W[2, 2] * b2
    for k in range(3):
        J[0, 3 + k] = -W[0, k]
        J[1, 3 + k] = -W[1, k]
        J[2, 3 + k] = -W[2, k]
    return rm0, rm1, rm2


@njit(**_JIT)
def gradient_fixed_scales(rays, R, s, e, W):
    """Exact gradient of ``whitened_cost`` with the depths held fixed."""
    n = rays.shape[0]
    g = np.zeros(6)
    J = np.empty((3, 6))
    for i in range(n):
        _fill_whitened_jacobian(J, rays, R, s, W, i)
        ew0 = W[0, 0] * e[i, 0] + W[0, 1] * e[i, 1] + W[0, 2] * e[i, 2]
        ew1 = W[1, 0] * e[i, 0] + W[1, 1] * e[i, 1] + W[1, 2] * e[i, 2]
        ew2 = W[2, 0] * e[i, 0] + W[2, 1] * e[i, 1] + W[2, 2] * e[i, 2]
        for a in range(6):
            g[a] += J[0, a] * ew0 + J[1, a] * ew1 + J[2, a] * ew2
    return g


@njit(**_JIT)
def normal_equations(rays, R, s, e, W):
    """Gauss-Newton system of the depth-concentrated cost.

    Variable projection (Kaufman form), mirroring the numpy twin: each
    whitened Jacobian is projected against its whitened ray direction
    before accumulation.
    """
    n = rays.shape[0]
    H = np.zeros((6, 6))
    g = np.zeros(6)
    J = np.empty((3, 6))
    for i in range(n):
        rm0, rm1, rm2 = _fill_whitened_jacobian(J, rays, R, s, W, i)
        u0 = W[0, 0] * rm0 + W[0, 1] * rm1 + W[0, 2] * rm2
        u1 = W[1, 0] * rm0 + W[1, 1] * rm1 + W[1, 2] * rm2
        u2 = W[2, 0] * rm0 + W[2, 1] * rm1 + W[2, 2] * rm2
        q = u0 * u0 + u1 * u1 + u2 * u2
        for a in range(6):
            coef = (u0 * J[0, a] + u1 * J[1, a] + u2 * J[2, a]) / q
            J[0, a] -= u0 * coef
            J[1, a] -= u1 * coef
            J[2, a] -= u2 * coef
        ew0 = W[0, 0] * e[i, 0] + W[0, 1] * e[i, 1] + W[0, 2] * e[i, 2]
        ew1 = W[1, 0] * e[i, 0] + W[1, 1] * e[i, 1] + W[1, 2] * e[i, 2]
        ew2 = W[2, 0] * e[i, 0] + W[2, 1] * e[i, 1] + W[2, 2] * e[i, 2]
        for a in range(6):
            g[a] += J[0, a] * ew0 + J[1, a] * ew1 + J[2, a] * ew2
            for b in range(a, 6):
                H[a, b] += J[0, a] * J[0, b] + J[1, a] * J[1, b] + J[2, a] * J[2, b]
    for a in range(6):
        for b in range(a):
            H[a, b] = H[b, a]
    return H, g


@njit(**_JIT)
def solve_spd(A, b):
    """Solve A x = b by 6x6 Cholesky. Returns (x, ok)."""
    L = np.zeros((6, 6))
    x = np.zeros(6)
    for i in range(6):
        for j in range(i + 1):
            acc = A[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if not np.isfinite(acc) or acc <= 0.0:
                    return x, False
                L[i, i] = np.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    y = np.zeros(6)
    for i in range(6):
        acc = b[i]
        for k in range(i):
            acc -= L[i, k] * y[k]
        y[i] = acc / L[i, i]
    for i in range(5, -1, -1):
        acc = y[i]
        for k in range(i + 1, 6):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]
    return x, True


@njit(**_JIT)
def second_moment(e):
    """Unnormalized residual second moment sum_i e_i e_i^T."""
    n = e.shape[0]
    V = np.zeros((3, 3))
    for i in range(n):
        for a in range(3):
            for b in range(3):
                V[a, b] += e[i, a] * e[i, b]
    return V


@njit(**_JIT)
def det3(M):
    """Determinant of a 3x3 matrix."""
    return (
        M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
        - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
        + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0])
    )


@njit(**_JIT)
def _mat33_mul(A, B):
    C = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            C[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]
    return C


@njit(**_JIT)
def inner_solve(points, rays, W, R0, t0, max_iters, gtol, steptol, lam0):
    """Alternate closed-form depth elimination with damped GN pose steps.

    Mirrors the numpy twin exactly; see there for the contract.
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

    minus_g = np.empty(6)
    for it in range(max_iters):
        H, g = normal_equations(rays, R, s, e, W)
        gnorm = 0.0
        for k in range(6):
            gnorm += g[k] * g[k]
        gnorm = np.sqrt(gnorm)
        if not np.isfinite(gnorm):
            return R, t, s, cost, iters, converged, False
        if gnorm < gtol:
            converged = True
            break
        iters = it + 1

        dmax = 0.0
        for k in range(6):
            if H[k, k] > dmax:
                dmax = H[k, k]
        floor = 1e-12 * dmax if dmax > 0.0 else 1e-12
        for k in range(6):
            minus_g[k] = -g[k]

        accepted = False
        A = np.empty((6, 6))
        while True:
            for a in range(6):
                for b in range(6):
                    A[a, b] = H[a, b]
                d = H[a, a] if H[a, a] > floor else floor
                A[a, a] = H[a, a] + lam * d
            delta, solved = solve_spd(A, minus_g)
            if solved:
                stepnorm = 0.0
                for k in range(6):
                    stepnorm += delta[k] * delta[k]
                stepnorm = np.sqrt(stepnorm)
                if stepnorm < steptol:
                    converged = True
                    break
                Rc = _mat33_mul(R, rodrigues(delta[:3]))
                tc = np.empty(3)
                tc[0] = t[0] + delta[3]
                tc[1] = t[1] + delta[4]
                tc[2] = t[2] + delta[5]
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
