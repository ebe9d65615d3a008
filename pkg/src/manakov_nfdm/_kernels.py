"""Trapezoidal transfer kernels for the 3x3 scattering problem.

One step of the implicit trapezoidal rule maps psi_n to psi_{n+1} through

    (I - h/2 A_{n+1}) psi_{n+1} = (I + h/2 A_n) psi_n,
    A_n = [[-i lam, q1, q2], [-q1*, i lam, 0], [-q2*, 0, i lam]].

Both matrices have the shape [[al, u, v], [-u*, de, 0], [-v*, 0, de]],
which admits a closed-form solve.  The lambda-derivative of the discrete
solution is carried along exactly (not by finite differences).

Two backends compute the same march:

* ``march_numba``: sequential loop, compiled with numba.
* ``march_numpy``: vectorized step matrices, multiplied by pairwise tree
  reduction.

The public entry point :func:`march` picks one from ``_accel.USE_NUMBA``.
"""
import numpy as np

from . import _accel
from ._accel import optional_njit

_RESCALE_HI = 1e150
_RESCALE_LO = 1e-150


@optional_njit(cache=True)
def _solve3(al, de, u, v, y0, y1, y2):
    cu = np.conj(u)
    cv = np.conj(v)
    x0 = (de * y0 - u * y1 - v * y2) / (al * de + (u * cu).real + (v * cv).real)
    x1 = (y1 + cu * x0) / de
    x2 = (y2 + cv * x0) / de
    return x0, x1, x2


@optional_njit(cache=True)
def _mul3(al, de, u, v, x0, x1, x2):
    return al * x0 + u * x1 + v * x2, -np.conj(u) * x0 + de * x1, -np.conj(v) * x0 + de * x2


@optional_njit(cache=True)
def march_numba(q1, q2, h, lam, psi, dpsi, start, stop, with_deriv):
    """March (psi, dpsi) from grid index ``start`` to ``stop`` (either direction).

    Returns (psi, dpsi, log_scale): the true solution is exp(log_scale)
    times the returned vectors.
    """
    hh = 0.5 * h
    ilh = 1j * lam * hh
    p0, p1, p2 = psi[0], psi[1], psi[2]
    d0, d1, d2 = dpsi[0], dpsi[1], dpsi[2]
    log_scale = 0.0
    step = 1 if stop >= start else -1
    n = start
    while n != stop:
        m = n + step
        # explicit half at n, implicit half at m
        if step == 1:
            ae, de_e, ue, ve = 1.0 - ilh, 1.0 + ilh, hh * q1[n], hh * q2[n]
            ai, di, ui, vi = 1.0 + ilh, 1.0 - ilh, -hh * q1[m], -hh * q2[m]
            sgn = 1.0
        else:
            ae, de_e, ue, ve = 1.0 + ilh, 1.0 - ilh, -hh * q1[n], -hh * q2[n]
            ai, di, ui, vi = 1.0 - ilh, 1.0 + ilh, hh * q1[m], hh * q2[m]
            sgn = -1.0
        r0, r1, r2 = _mul3(ae, de_e, ue, ve, p0, p1, p2)
        n0, n1, n2 = _solve3(ai, di, ui, vi, r0, r1, r2)
        if with_deriv:
            # d/dlam of both sides; A_lam = diag(-i, i, i)
            s0, s1, s2 = _mul3(ae, de_e, ue, ve, d0, d1, d2)
            c = sgn * hh * 1j
            s0 = s0 - c * (p0 + n0)
            s1 = s1 + c * (p1 + n1)
            s2 = s2 + c * (p2 + n2)
            d0, d1, d2 = _solve3(ai, di, ui, vi, s0, s1, s2)
        p0, p1, p2 = n0, n1, n2
        mag = abs(p0) + abs(p1) + abs(p2)
        if mag > _RESCALE_HI or mag < _RESCALE_LO:
            p0 /= mag
            p1 /= mag
            p2 /= mag
            d0 /= mag
            d1 /= mag
            d2 /= mag
            log_scale += np.log(mag)
        n = m
    out = np.empty(3, dtype=np.complex128)
    dout = np.empty(3, dtype=np.complex128)
    out[0], out[1], out[2] = p0, p1, p2
    dout[0], dout[1], dout[2] = d0, d1, d2
    return out, dout, log_scale


def _step_matrices(q1, q2, h, lam, start, stop):
    """Per-step (T_k, dT_k) in application order, shape (n_steps, 3, 3)."""
    hh = 0.5 * h
    step = 1 if stop >= start else -1
    idx_from = np.arange(start, stop, step)
    idx_to = idx_from + step
    sgn = float(step)

    def mats(idx, sign):
        n = idx.size
        M = np.zeros((n, 3, 3), dtype=complex)
        M[:, 0, 0] = 1 - sign * hh * (-1j * lam)
        M[:, 1, 1] = 1 - sign * hh * (1j * lam)
        M[:, 2, 2] = M[:, 1, 1]
        M[:, 0, 1] = -sign * hh * q1[idx]
        M[:, 0, 2] = -sign * hh * q2[idx]
        M[:, 1, 0] = sign * hh * np.conj(q1[idx])
        M[:, 2, 0] = sign * hh * np.conj(q2[idx])
        return M

    # (I - s h/2 A_to) x_to = (I + s h/2 A_from) x_from, s = step direction
    explicit = mats(idx_from, -sgn)
    implicit = mats(idx_to, sgn)
    T = np.linalg.solve(implicit, explicit)
    a_lam = np.diag([-1j, 1j, 1j])
    eye = np.eye(3)
    dT = np.linalg.solve(implicit, sgn * hh * (a_lam @ (eye + T)))
    return T, dT


def _tree_product(T, dT):
    """Ordered product T[-1] ... T[0] and its derivative, with log scaling."""
    if T.shape[0] == 0:
        return np.eye(3, dtype=complex), np.zeros((3, 3), dtype=complex), 0.0
    logs = np.zeros(T.shape[0])
    while T.shape[0] > 1:
        n = T.shape[0]
        odd = n % 2
        first, second = T[0:n - odd:2], T[1:n:2]
        dfirst, dsecond = dT[0:n - odd:2], dT[1:n:2]
        P = second @ first
        dP = dsecond @ first + second @ dfirst
        lg = logs[0:n - odd:2] + logs[1:n:2]
        scale = np.abs(P).max(axis=(1, 2))
        scale[scale == 0] = 1.0
        P /= scale[:, None, None]
        dP /= scale[:, None, None]
        lg = lg + np.log(scale)
        if odd:
            P = np.concatenate([P, T[-1:]])
            dP = np.concatenate([dP, dT[-1:]])
            lg = np.concatenate([lg, logs[-1:]])
        T, dT, logs = P, dP, lg
    return T[0], dT[0], float(logs[0])


def march_numpy(q1, q2, h, lam, psi, dpsi, start, stop, with_deriv):
    T, dT = _step_matrices(q1, q2, h, lam, start, stop)
    P, dP, log_scale = _tree_product(T, dT)
    out = P @ psi
    dout = dP @ psi + P @ dpsi if with_deriv else np.zeros(3, dtype=complex)
    return out, dout, log_scale


def march(q1, q2, h, lam, psi, dpsi=None, start=0, stop=None, with_deriv=True,
          use_numba=None):
    q1 = np.ascontiguousarray(q1, dtype=np.complex128)
    q2 = np.ascontiguousarray(q2, dtype=np.complex128)
    if stop is None:
        stop = q1.size - 1
    psi = np.asarray(psi, dtype=np.complex128)
    dpsi = np.zeros(3, dtype=np.complex128) if dpsi is None else np.asarray(dpsi, np.complex128)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    fn = march_numba if (use_numba and _accel.numba_installed) else march_numpy
    return fn(q1, q2, float(h), complex(lam), psi, dpsi, int(start), int(stop), bool(with_deriv))
