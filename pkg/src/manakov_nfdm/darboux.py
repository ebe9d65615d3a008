"""Multi-soliton synthesis by iterated Darboux transformations.

Starting from the null field, each step adds one eigenvalue to the discrete
spectrum.  Auxiliary solutions grow like exp(Im(lambda)|t|), so they are
stored per grid point as a unit-norm direction plus a log-magnitude.  The
Darboux matrix only needs the projector onto that direction, so the
direction alone is enough for the field update.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (NORMALIZED, DiscreteSpectrum, DualPolSignal, SpectralEntry, TimeGrid)


class DegenerateDarbouxError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class AuxiliarySolution:
    """Solution of the scattering problem at eigenvalue ``lam``.

    The actual vector at grid point k is ``psi[:, k] * exp(log_scale[k])``.
    """

    lam: complex
    psi: np.ndarray        # (3, n) complex, unit column norms
    log_scale: np.ndarray  # (n,) real

    @property
    def psi1(self):
        return self.psi[0] * np.exp(self.log_scale)

    @property
    def psi2(self):
        return self.psi[1] * np.exp(self.log_scale)

    @property
    def psi3(self):
        return self.psi[2] * np.exp(self.log_scale)


def seed_constants(b1: complex, b2: complex) -> tuple[complex, complex]:
    """Null-field seed constants (c1, c2) giving NF coefficients (b1, b2).

    Calibrated against :func:`manakov_nfdm.nft.scatter`: the synthesized
    field then carries exactly (b1, b2) at its eigenvalue, whatever the
    other eigenvalues are.
    """
    return -complex(b1), -complex(b2)


def seed_solution(lam: complex, b1: complex, b2: complex, grid: TimeGrid) -> AuxiliarySolution:
    """Null-field solution (e^{-i lam t}, c1 e^{i lam t}, c2 e^{i lam t}), rebalanced."""
    lam = complex(lam)
    if not lam.imag > 0:
        raise ValueError(f"seed eigenvalue must lie in the upper half plane, got {lam}")
    if b1 == 0 and b2 == 0:
        raise ValueError("(b1, b2) = (0, 0) carries no eigenvalue")
    c = seed_constants(b1, b2)
    t = grid.t
    # log of each component: -i lam t and log(c) + i lam t
    logs = np.empty((3, t.size), dtype=complex)
    logs[0] = -1j * lam * t
    for j in (0, 1):
        logs[j + 1] = (np.log(c[j]) if c[j] != 0 else -np.inf) + 1j * lam * t
    m = logs.real.max(axis=0)
    psi = np.exp(logs - m)
    norm = np.sqrt(np.sum(np.abs(psi) ** 2, axis=0))
    return AuxiliarySolution(lam, psi / norm, m + np.log(norm))


def darboux_step(q1, q2, aux_new: AuxiliarySolution, aux_rest=(), floor: float = 1e-30):
    """Add ``aux_new.lam`` to the spectrum of (q1, q2).

    Returns the updated fields and the remaining auxiliary solutions
    transformed by T(lam) = (lam - lam0*) I - (lam0 - lam0*) P, where P is
    the projector onto the seed direction.
    """
    lam0 = aux_new.lam
    psi = aux_new.psi
    nrm2 = np.sum(np.abs(psi) ** 2, axis=0)
    bad = ~(nrm2 > floor)
    if bad.any():
        k = int(np.argmax(bad))
        raise DegenerateDarbouxError(
            f"auxiliary solution for lambda={lam0} vanishes at grid index {k}")
    coef = 2j * (np.conj(lam0) - lam0)
    q1n = q1 + coef * psi[0] * np.conj(psi[1]) / nrm2
    q2n = q2 + coef * psi[0] * np.conj(psi[2]) / nrm2

    out = []
    for aux in aux_rest:
        if abs(aux.lam - lam0) == 0:
            raise ValueError(f"eigenvalue {lam0} added twice")
        proj = np.sum(np.conj(psi) * aux.psi, axis=0) / nrm2
        phi = (aux.lam - np.conj(lam0)) * aux.psi - (lam0 - np.conj(lam0)) * psi * proj
        norm = np.sqrt(np.sum(np.abs(phi) ** 2, axis=0))
        if not np.all(norm > floor):
            k = int(np.argmax(~(norm > floor)))
            raise DegenerateDarbouxError(
                f"transformed solution for lambda={aux.lam} vanishes at grid index {k}")
        out.append(AuxiliarySolution(aux.lam, phi / norm, aux.log_scale + np.log(norm)))
    return q1n, q2n, out


def synthesize(spectrum: DiscreteSpectrum, grid: TimeGrid, order=None,
               floor_db: float | None = -40.0) -> DualPolSignal:
    """Multi-soliton field with the given discrete spectrum.

    Eigenvalues are added in order of increasing imaginary part unless
    ``order`` (a permutation of entry indices) is given.  With ``floor_db``
    set, the edge power is checked against the truncation floor.
    """
    if not isinstance(spectrum, DiscreteSpectrum):
        spectrum = DiscreteSpectrum(tuple(spectrum))
    entries = list(spectrum.entries)
    if order is None:
        order = sorted(range(len(entries)), key=lambda k: entries[k].lam.imag)
    auxes = [seed_solution(entries[k].lam, entries[k].b1, entries[k].b2, grid) for k in order]
    q1 = np.zeros(grid.n_samples, dtype=complex)
    q2 = np.zeros(grid.n_samples, dtype=complex)
    while auxes:
        q1, q2, auxes = darboux_step(q1, q2, auxes[0], auxes[1:])
    sig = DualPolSignal(grid, q1, q2, NORMALIZED)
    if floor_db is not None and entries:
        sig.check_truncation(floor_db)
    return sig


def one_soliton(t, lam: complex, b1: complex, b2: complex):
    """Closed-form single-eigenvalue field, used as an oracle in tests.

    For lam = xi + i eta the field is
    2 eta sech(2 eta t - log|c|) e^{-2i xi t} conj(c_j)/|c| with c the seed
    constants.
    """
    lam = complex(lam)
    xi, eta = lam.real, lam.imag
    c = np.array(seed_constants(b1, b2))
    cn = np.linalg.norm(c)
    env = 2 * eta / np.cosh(2 * eta * np.asarray(t) - np.log(cn)) * np.exp(-2j * xi * np.asarray(t))
    return env * np.conj(c[0]) / cn, env * np.conj(c[1]) / cn


__all__ = ["AuxiliarySolution", "DegenerateDarbouxError", "SpectralEntry", "darboux_step",
           "one_soliton", "seed_constants", "seed_solution", "synthesize"]
