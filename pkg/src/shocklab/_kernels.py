"""Compiled inner loops. Flux arguments use the layout of FluxFunction.packed()."""

import numpy as np
from numba import njit


@njit(cache=True)
def phi_eval(y, breaks, coefs, ext, phi0):
    if ext > 0.0 and y < 0.0:
        return phi0 - ext * y
    k = 0
    while k < breaks.size and y >= breaks[k]:
        k += 1
    s = 1.0 - y
    acc = 0.0
    for j in range(coefs.shape[1] - 1, -1, -1):
        acc = acc * s + coefs[k, j]
    return acc


@njit(cache=True)
def delay_rk4(F, D, filled, m, h, C, beta, stop_gap, breaks, coefs, ext, phi0):
    """Advance C y'(x) = phi(y)(y(x) - y(x-1)) on the uniform grid by method of steps.

    F[:filled] and D[:filled] hold values and slopes; the delay equals m steps.
    Delayed midpoints use the cubic Hermite midpoint formula. Returns the new
    fill count, or minus it when a non-finite value appears.
    """
    n = F.size
    j = filled - 1
    while j + 1 < n:
        y = F[j]
        a0 = F[j - m]
        a1 = F[j - m + 1]
        amid = 0.5 * (a0 + a1) + h * (D[j - m] - D[j - m + 1]) / 8.0
        k1 = phi_eval(y, breaks, coefs, ext, phi0) * (y - a0) / C
        y2 = y + 0.5 * h * k1
        k2 = phi_eval(y2, breaks, coefs, ext, phi0) * (y2 - amid) / C
        y3 = y + 0.5 * h * k2
        k3 = phi_eval(y3, breaks, coefs, ext, phi0) * (y3 - amid) / C
        y4 = y + h * k3
        k4 = phi_eval(y4, breaks, coefs, ext, phi0) * (y4 - a1) / C
        yn = y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        j += 1
        F[j] = yn
        D[j] = phi_eval(yn, breaks, coefs, ext, phi0) * (yn - F[j - m]) / C
        if not np.isfinite(yn):
            return -(j + 1)
        if beta - yn < stop_gap:
            return j + 1
    return j + 1


@njit(cache=True)
def _lattice_rhs(v, alpha, out, breaks, coefs, ext, phi0):
    left = alpha
    for i in range(v.size):
        out[i] = phi_eval(v[i], breaks, coefs, ext, phi0) * (left - v[i])
        left = v[i]


@njit(cache=True)
def lattice_rk4(v, alpha, dt, nsteps, last_dt, breaks, coefs, ext, phi0):
    """In-place RK4 steps of dF(n)/dt = phi(F(n))(F(n-1) - F(n)).

    Takes ``nsteps`` steps of size dt followed by one of size last_dt when
    last_dt > 0. Cells left of the array are held at alpha. Returns False on
    a non-finite value.
    """
    n = v.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    w = np.empty(n)
    total = nsteps + (1 if last_dt > 0.0 else 0)
    for step in range(total):
        h = dt if step < nsteps else last_dt
        _lattice_rhs(v, alpha, k1, breaks, coefs, ext, phi0)
        for i in range(n):
            w[i] = v[i] + 0.5 * h * k1[i]
        _lattice_rhs(w, alpha, k2, breaks, coefs, ext, phi0)
        for i in range(n):
            w[i] = v[i] + 0.5 * h * k2[i]
        _lattice_rhs(w, alpha, k3, breaks, coefs, ext, phi0)
        for i in range(n):
            w[i] = v[i] + h * k3[i]
        _lattice_rhs(w, alpha, k4, breaks, coefs, ext, phi0)
        ok = True
        for i in range(n):
            v[i] += h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
            if not np.isfinite(v[i]):
                ok = False
        if not ok:
            return False
    return True


@njit(cache=True)
def _pde_rhs(f, alpha, beta, dx, eps, out, breaks, acoefs, aoff):
    # conservative backward upwind for phi(f) f_x = d/dx Psi(f), central f_xx
    n = f.size
    inv = 1.0 / dx
    inv2 = eps / (dx * dx)
    prev = alpha
    psi_prev = _psi(alpha, breaks, acoefs, aoff)
    for i in range(n):
        nxt = f[i + 1] if i + 1 < n else beta
        psi_i = _psi(f[i], breaks, acoefs, aoff)
        out[i] = -(psi_i - psi_prev) * inv + (nxt - 2.0 * f[i] + prev) * inv2
        prev = f[i]
        psi_prev = psi_i


@njit(cache=True)
def _psi(y, breaks, acoefs, aoff):
    # Psi(y) = aoff[k] + A_k(1 - y) on piece k
    k = 0
    while k < breaks.size and y >= breaks[k]:
        k += 1
    s = 1.0 - y
    acc = 0.0
    for j in range(acoefs.shape[1] - 1, -1, -1):
        acc = acc * s + acoefs[k, j]
    return aoff[k] + acc


@njit(cache=True)
def pde_rk4(f, alpha, beta, dx, eps, dt, nsteps, last_dt, breaks, acoefs, aoff):
    """In-place RK4 steps of the method-of-lines system with Dirichlet fills."""
    n = f.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    w = np.empty(n)
    total = nsteps + (1 if last_dt > 0.0 else 0)
    for step in range(total):
        h = dt if step < nsteps else last_dt
        _pde_rhs(f, alpha, beta, dx, eps, k1, breaks, acoefs, aoff)
        for i in range(n):
            w[i] = f[i] + 0.5 * h * k1[i]
        _pde_rhs(w, alpha, beta, dx, eps, k2, breaks, acoefs, aoff)
        for i in range(n):
            w[i] = f[i] + 0.5 * h * k2[i]
        _pde_rhs(w, alpha, beta, dx, eps, k3, breaks, acoefs, aoff)
        for i in range(n):
            w[i] = f[i] + h * k3[i]
        _pde_rhs(w, alpha, beta, dx, eps, k4, breaks, acoefs, aoff)
        ok = True
        for i in range(n):
            f[i] += h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
            if not np.isfinite(f[i]):
                ok = False
        if not ok:
            return False
    return True
