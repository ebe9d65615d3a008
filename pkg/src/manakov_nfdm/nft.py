"""Forward NFT: discrete eigenvalues and NF coefficients of a dual-pol field.

Boundary conditions use the discrete free solution of the trapezoidal
scheme rather than exp(-i lam t), so a zero field gives a = 1 and
b = 0 exactly on any grid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._kernels import march
from .core import NORMALIZED, DualPolSignal

log = logging.getLogger(__name__)


class ScatteringError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ScatteringResult:
    lam: complex
    a: complex
    a_prime: complex
    b1: complex
    b2: complex


def _discrete_wavenumber(lam, h):
    """kappa with exp(kappa h) equal to one free trapezoidal step of psi_1, and dkappa/dlam."""
    x = 0.5j * lam * h
    kappa = (np.log(1 - x) - np.log(1 + x)) / h
    dkappa = (-0.5j / (1 - x) - 0.5j / (1 + x))
    return kappa, dkappa


def _check_signal(signal):
    if signal.units != NORMALIZED:
        raise ValueError("the NFT operates on normalized signals")


def match_index(signal: DualPolSignal) -> int:
    """Grid index of peak total power; the forward and backward legs meet here."""
    return int(np.argmax(signal.power()))


def scatter(signal: DualPolSignal, lam: complex, t_match: int | None = None,
            use_numba: bool | None = None) -> ScatteringResult:
    """Scattering data a(lam), a'(lam), b1(lam), b2(lam).

    a and a' come from a single left-to-right march with the exact
    derivative of the discrete scheme.  b is obtained by marching the left
    Jost solution to ``t_match`` and the two decaying right Jost solutions
    back to the same point, then matching in the least-squares sense.  This
    is only meaningful at (or very near) a zero of a.
    """
    _check_signal(signal)
    lam = complex(lam)
    q1, q2 = signal.q1, signal.q2
    g = signal.grid
    h, n = g.dt, g.n_samples
    t0 = g.t0
    tn = t0 + (n - 1) * h
    kappa, dkappa = _discrete_wavenumber(lam, h)
    e1 = np.array([1, 0, 0], dtype=complex)

    psi, dpsi, s = march(q1, q2, h, lam, e1, None, 0, n - 1, True, use_numba)
    span = tn - t0
    fac = np.exp(s - kappa * span)
    a = fac * psi[0]
    a_prime = fac * (dpsi[0] - dkappa * span * psi[0])
    if not (np.isfinite(a) and np.isfinite(a_prime)):
        raise ScatteringError(f"non-finite a({lam}) = {a}")

    m = match_index(signal) if t_match is None else int(t_match)
    left, _, s_left = march(q1, q2, h, lam, e1, None, 0, m, False, use_numba)
    # right Jost solutions decaying at +inf, marched back to the match point;
    # the growing one is left out: it is swamped by rounding on the way back
    # and carries no weight at a root of a
    cols = np.empty((3, 2), dtype=complex)
    col_logs = np.empty(2)
    for k in (1, 2):
        ek = np.zeros(3, dtype=complex)
        ek[k] = 1
        cols[:, k - 1], _, col_logs[k - 1] = march(q1, q2, h, lam, ek, None, n - 1, m, False,
                                                   use_numba)
    norms = np.linalg.norm(cols, axis=0)
    if not np.all(norms > 0) or not np.all(np.isfinite(cols)) or not np.all(np.isfinite(left)):
        raise ScatteringError(f"ill-conditioned matching at lambda={lam}")
    z = np.linalg.lstsq(cols / norms, left, rcond=None)[0]
    if not np.any(z):
        raise ScatteringError(f"matched solution vanishes at lambda={lam}")
    with np.errstate(divide="ignore"):
        log_y = np.log(z + 0j) - np.log(norms) - col_logs + s_left
    b = np.exp(log_y + kappa * (t0 + tn))
    if not np.all(np.isfinite(b) | (z == 0)):
        raise ScatteringError(f"non-finite b at lambda={lam}")
    b = np.where(z == 0, 0, b)
    return ScatteringResult(lam, complex(a), complex(a_prime), complex(b[0]), complex(b[1]))


def scatter_forward_only(signal: DualPolSignal, lam: complex, use_numba=None):
    """b from a single left-to-right march; kept to measure what matching buys."""
    _check_signal(signal)
    g = signal.grid
    h, n, t0 = g.dt, g.n_samples, g.t0
    tn = t0 + (n - 1) * h
    kappa, _ = _discrete_wavenumber(complex(lam), h)
    psi, _, s = march(signal.q1, signal.q2, h, lam, np.array([1, 0, 0], complex), None,
                      0, n - 1, False, use_numba)
    b = psi[1:] * np.exp(s + kappa * (t0 + tn))
    return complex(b[0]), complex(b[1])


def find_eigenvalues(signal: DualPolSignal, guesses, tol: float = 1e-9, max_iter: int = 50,
                     use_numba=None) -> list[complex]:
    """Newton search for zeros of a(lam) in the upper half plane.

    Each guess is iterated until |a| < tol; guesses that leave the upper
    half plane, hit a vanishing derivative or exhaust ``max_iter`` are
    retried after all guesses, with the roots found so far deflated out of
    a(lam) (which pushes them towards new zeros even when they start in the
    basin of an earlier one) and from slightly off-axis starting points.
    Later guesses are deflated too.  Roots closer than 10*tol are merged.  Returns roots
    sorted by imaginary part (possibly an empty list).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    _check_signal(signal)
    roots = []
    failed = []
    for g0 in guesses:
        lam = complex(g0)
        if not lam.imag > 0:
            raise ValueError(f"guess {lam} is not in the upper half plane")
        r = _newton(signal, lam, roots, tol, max_iter, use_numba)
        (failed if r is None else roots).append(lam if r is None else r)
    # Retry failed guesses with the roots found so far deflated, then from
    # points nudged off the imaginary axis: for a nearly symmetric field
    # Newton started on the axis stays on it and misses an off-axis pair.
    dropped = 0
    for lam in failed:
        d = 0.2 * lam.imag
        starts = ([lam] if roots else []) + [lam + d, lam - d]
        for start in starts:
            r = _newton(signal, start, roots, tol, max_iter, use_numba)
            if r is not None:
                roots.append(r)
                break
        else:
            dropped += 1
    if dropped:
        log.debug("find_eigenvalues: %d of %d guesses did not converge", dropped, len(guesses))
    merged = []
    for r in roots:
        if all(abs(r - m) >= 10 * tol for m in merged):
            merged.append(r)
    return sorted(merged, key=lambda z: z.imag)


def _newton(signal, lam, roots, tol, max_iter, use_numba):
    """Deflated Newton iteration; returns the root or None."""
    for _ in range(max_iter):
        a, ap = scatter_a(signal, lam, use_numba)
        if abs(a) < tol:
            return lam
        if ap == 0 or not np.isfinite(ap):
            return None
        # Newton on a(lam) / prod(lam - r) over the roots found so far
        d = ap / a - sum(1 / (lam - r) for r in roots)
        if d == 0 or not np.isfinite(d):
            return None
        lam = lam - 1 / d
        if not (np.isfinite(lam) and lam.imag > 0) or abs(lam) > 1e3:
            return None
    return None


def scatter_a(signal: DualPolSignal, lam: complex, use_numba=None):
    """(a, a') only; the cheap half of :func:`scatter` used inside Newton."""
    lam = complex(lam)
    g = signal.grid
    h, n = g.dt, g.n_samples
    kappa, dkappa = _discrete_wavenumber(lam, h)
    psi, dpsi, s = march(signal.q1, signal.q2, h, lam, np.array([1, 0, 0], complex), None,
                         0, n - 1, True, use_numba)
    span = (n - 1) * h
    fac = np.exp(s - kappa * span)
    return complex(fac * psi[0]), complex(fac * (dpsi[0] - dkappa * span * psi[0]))


def compute_b(signal: DualPolSignal, lam: complex, use_numba=None) -> tuple[complex, complex]:
    r = scatter(signal, lam, use_numba=use_numba)
    return r.b1, r.b2
