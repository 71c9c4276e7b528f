# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Newton-Raphson kernel.

Same contract as bgcosim._pf_python.newton_solve. Explicit-loop polar
formulation with a hand-rolled partial-pivot LU solve, so the extension
needs nothing beyond libc at runtime. Compiled without -ffast-math to keep
IEEE semantics close to the numpy fallback.
"""

from libc.math cimport cos, sin, sqrt, fabs, atan2, isfinite

import numpy as np


cdef int _lu_solve(double[:, ::1] A, double[::1] b, int n, int[::1] piv) nogil:
    """In-place LU factorization with partial pivoting; solves A x = b into b.

    Returns 0 on success, 1 if the matrix is numerically singular.
    """
    cdef int i, j, k, p
    cdef double maxval, tmp, factor
    for k in range(n):
        p = k
        maxval = fabs(A[k, k])
        for i in range(k + 1, n):
            if fabs(A[i, k]) > maxval:
                maxval = fabs(A[i, k])
                p = i
        if maxval == 0.0 or not isfinite(maxval):
            return 1
        piv[k] = p
        if p != k:
            for j in range(n):
                tmp = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = tmp
            tmp = b[k]
            b[k] = b[p]
            b[p] = tmp
        for i in range(k + 1, n):
            factor = A[i, k] / A[k, k]
            A[i, k] = factor
            for j in range(k + 1, n):
                A[i, j] -= factor * A[k, j]
            b[i] -= factor * b[k]
    for i in range(n - 1, -1, -1):
        tmp = b[i]
        for j in range(i + 1, n):
            tmp -= A[i, j] * b[j]
        b[i] = tmp / A[i, i]
    return 0


def newton_solve(double[:, ::1] G, double[:, ::1] B,
                 double[::1] p_spec, double[::1] q_spec,
                 int slack, double v_slack, double tol, int max_iter):
    """Solve the AC power-flow equations; see bgcosim._pf_python.newton_solve."""
    cdef int n = G.shape[0]
    cdef int npq = n - 1
    cdef int dim = 2 * npq

    vm_arr = np.ones(n)
    va_arr = np.zeros(n)
    p_calc_arr = np.zeros(n)
    q_calc_arr = np.zeros(n)
    pq_arr = np.empty(npq, dtype=np.int32)
    jac_arr = np.zeros((dim if dim > 0 else 1, dim if dim > 0 else 1))
    rhs_arr = np.zeros(dim if dim > 0 else 1)
    piv_arr = np.zeros(dim if dim > 0 else 1, dtype=np.int32)

    cdef double[::1] vm = vm_arr
    cdef double[::1] va = va_arr
    cdef double[::1] p_calc = p_calc_arr
    cdef double[::1] q_calc = q_calc_arr
    cdef int[::1] pq = pq_arr
    cdef double[:, ::1] jac = jac_arr
    cdef double[::1] rhs = rhs_arr
    cdef int[::1] piv = piv_arr

    cdef int i, j, k, a, b, it
    cdef double gij, bij, theta, cos_t, sin_t, pi, qi, vi, vj
    cdef double max_mis, mis
    cdef bint converged = False
    cdef int iterations = 0

    vm[slack] = v_slack
    j = 0
    for i in range(n):
        if i != slack:
            pq[j] = i
            j += 1

    max_mis = 0.0
    for it in range(max_iter + 1):
        # injections at the current iterate
        for i in range(n):
            pi = 0.0
            qi = 0.0
            vi = vm[i]
            for k in range(n):
                theta = va[i] - va[k]
                cos_t = cos(theta)
                sin_t = sin(theta)
                gij = G[i, k]
                bij = B[i, k]
                pi += vm[k] * (gij * cos_t + bij * sin_t)
                qi += vm[k] * (gij * sin_t - bij * cos_t)
            p_calc[i] = vi * pi
            q_calc[i] = vi * qi

        max_mis = 0.0
        for a in range(npq):
            i = pq[a]
            mis = fabs(p_calc[i] - p_spec[i])
            if mis > max_mis:
                max_mis = mis
            mis = fabs(q_calc[i] - q_spec[i])
            if mis > max_mis:
                max_mis = mis
        if not isfinite(max_mis):
            break
        if max_mis <= tol:
            converged = True
            break
        if it == max_iter:
            break

        # polar Jacobian over PQ buses: [[dP/dth, dP/dVm], [dQ/dth, dQ/dVm]]
        for a in range(npq):
            i = pq[a]
            vi = vm[i]
            for b in range(npq):
                j = pq[b]
                if i == j:
                    jac[a, b] = -q_calc[i] - B[i, i] * vi * vi
                    jac[a, npq + b] = p_calc[i] / vi + G[i, i] * vi
                    jac[npq + a, b] = p_calc[i] - G[i, i] * vi * vi
                    jac[npq + a, npq + b] = q_calc[i] / vi - B[i, i] * vi
                else:
                    vj = vm[j]
                    theta = va[i] - va[j]
                    cos_t = cos(theta)
                    sin_t = sin(theta)
                    gij = G[i, j]
                    bij = B[i, j]
                    jac[a, b] = vi * vj * (gij * sin_t - bij * cos_t)
                    jac[a, npq + b] = vi * (gij * cos_t + bij * sin_t)
                    jac[npq + a, b] = -vi * vj * (gij * cos_t + bij * sin_t)
                    jac[npq + a, npq + b] = vi * (gij * sin_t - bij * cos_t)
            rhs[a] = p_spec[i] - p_calc[i]
            rhs[npq + a] = q_spec[i] - q_calc[i]

        if dim > 0:
            if _lu_solve(jac, rhs, dim, piv) != 0:
                break
            for a in range(npq):
                i = pq[a]
                va[i] += rhs[a]
                vm[i] += rhs[npq + a]
        iterations += 1

    return vm_arr, va_arr, bool(converged), iterations, float(max_mis)
