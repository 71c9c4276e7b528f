"""Pure-numpy Newton-Raphson kernel (fallback for the compiled core).

Mirrors the semantics of the Cython kernel in ``_pf_core.pyx``: flat start,
check-then-update iteration, polar mismatch/Jacobian formulation, one slack
bus and PQ buses everywhere else. Non-convergence (including a singular
Jacobian or a non-finite iterate) is reported through the ``converged``
flag, never as an exception.
"""

from __future__ import annotations

import numpy as np


def newton_solve(G, B, p_spec, q_spec, slack, v_slack, tol, max_iter):
    """Solve the AC power-flow equations.

    Args:
        G, B: real and imaginary parts of the bus admittance matrix (p.u.).
        p_spec, q_spec: scheduled net active/reactive injections (p.u.).
        slack: index of the slack bus (fixed magnitude, zero angle).
        v_slack: slack voltage magnitude (p.u.).
        tol: maximum allowed power mismatch (p.u.).
        max_iter: maximum number of Newton updates.

    Returns:
        (vm, va, converged, iterations, max_mismatch)
    """
    n = G.shape[0]
    Y = G + 1j * B
    vm = np.ones(n)
    va = np.zeros(n)
    vm[slack] = v_slack
    pq = np.array([i for i in range(n) if i != slack], dtype=np.intp)
    npq = pq.size
    s_spec = p_spec + 1j * q_spec

    converged = False
    iterations = 0
    max_mis = 0.0
    for it in range(max_iter + 1):
        V = vm * np.exp(1j * va)
        I = Y @ V
        mis = V * np.conj(I) - s_spec
        F = np.concatenate([mis[pq].real, mis[pq].imag])
        max_mis = float(np.max(np.abs(F))) if npq else 0.0
        if not np.isfinite(max_mis):
            break
        if max_mis <= tol:
            converged = True
            break
        if it == max_iter:
            break

        v_norm = V / np.abs(V)
        diag_v = np.diag(V)
        diag_i = np.diag(I)
        ds_dva = 1j * diag_v @ np.conj(diag_i - Y @ diag_v)
        ds_dvm = diag_v @ np.conj(Y @ np.diag(v_norm)) + np.conj(diag_i) @ np.diag(v_norm)
        ix = np.ix_(pq, pq)
        J = np.block(
            [
                [ds_dva[ix].real, ds_dvm[ix].real],
                [ds_dva[ix].imag, ds_dvm[ix].imag],
            ]
        )
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        va[pq] += dx[:npq]
        vm[pq] += dx[npq:]
        iterations += 1

    return vm, va, converged, iterations, max_mis
