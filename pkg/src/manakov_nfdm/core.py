"""Shared types, grids and unit normalization.

Physical quantities are SI throughout (s, W, m) except where a field name
says otherwise (fiber parameters use the customary ps/(nm km), 1/(W km),
dB/km and km).  The normalized Manakov system used by the NFT code is

    dq_j/dz = i d^2q_j/dt^2 + 2i q_j (|q_1|^2 + |q_2|^2)

and the map between the two is ``tau = T0 t``, ``ell = L0 z``,
``A_j = sqrt(P0) q_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

C_LIGHT = 2.99792458e8
H_PLANCK = 6.62607015e-34

NORMALIZED = "normalized"
PHYSICAL = "physical"
_UNITS = (NORMALIZED, PHYSICAL)

MANAKOV_FACTOR = 8.0 / 9.0


class GridTooNarrowError(ValueError):
    """Signal does not decay below the truncation floor at the window edges."""


def _frozen(a, dtype=np.complex128):
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling grid ``t_k = t0 + k dt``, k = 0 .. n_samples-1."""

    n_samples: int
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise ValueError(f"n_samples must be an integer >= 2, got {self.n_samples}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @classmethod
    def centered(cls, n_samples: int, width: float) -> "TimeGrid":
        """Periodic grid of ``n_samples`` points covering ``[-width/2, width/2)``.

        Concatenating such grids end to end gives a uniform grid, which is
        what the frame assembly relies on.
        """
        return cls(n_samples, width / n_samples, -width / 2)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    @property
    def width(self) -> float:
        return self.n_samples * self.dt

    @property
    def omega(self) -> np.ndarray:
        """Angular frequencies in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n_samples, self.dt)

    def scaled(self, factor: float) -> "TimeGrid":
        return TimeGrid(self.n_samples, self.dt * factor, self.t0 * factor)

    def tiled(self, n_slots: int) -> "TimeGrid":
        """Grid of ``n_slots`` consecutive copies of this one."""
        return TimeGrid(self.n_samples * n_slots, self.dt, self.t0)


@dataclass(frozen=True, eq=False)
class DualPolSignal:
    """Two complex envelopes sampled on a common grid.

    ``units`` is ``"normalized"`` (dimensionless q of the Manakov system) or
    ``"physical"`` (sqrt(W), time in seconds).
    """

    grid: TimeGrid
    q1: np.ndarray
    q2: np.ndarray
    units: str = NORMALIZED

    def __post_init__(self):
        if self.units not in _UNITS:
            raise ValueError(f"units must be one of {_UNITS}, got {self.units!r}")
        q1 = _frozen(self.q1)
        q2 = _frozen(self.q2)
        n = self.grid.n_samples
        if q1.shape != (n,) or q2.shape != (n,):
            raise ValueError(
                f"q1/q2 must have shape ({n},), got {q1.shape} and {q2.shape}")
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "q2", q2)

    @classmethod
    def zeros(cls, grid: TimeGrid, units: str = NORMALIZED) -> "DualPolSignal":
        z = np.zeros(grid.n_samples, dtype=np.complex128)
        return cls(grid, z, z, units)

    def replace(self, q1=None, q2=None, grid=None, units=None) -> "DualPolSignal":
        return DualPolSignal(
            self.grid if grid is None else grid,
            self.q1 if q1 is None else q1,
            self.q2 if q2 is None else q2,
            self.units if units is None else units,
        )

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    def power(self) -> np.ndarray:
        """Total instantaneous power |q1|^2 + |q2|^2."""
        return self.q1.real ** 2 + self.q1.imag ** 2 + self.q2.real ** 2 + self.q2.imag ** 2

    def mean_power(self) -> float:
        return float(np.mean(self.power()))

    def energy(self) -> float:
        """Trapezoidal quadrature of the total power over the grid."""
        return float(np.trapezoid(self.power(), dx=self.grid.dt))

    def edge_level_db(self) -> float:
        """Power at the window edges relative to peak power, in dB."""
        p = self.power()
        peak = p.max()
        if peak == 0:
            return -np.inf
        edge = max(p[0], p[-1])
        if edge == 0:
            return -np.inf
        return 10 * math.log10(edge / peak)

    def check_truncation(self, floor_db: float = -40.0) -> None:
        level = self.edge_level_db()
        if level > floor_db:
            raise GridTooNarrowError(
                f"edge power {level:.1f} dB above truncation floor {floor_db:.1f} dB "
                f"(grid [{self.grid.t0:g}, {self.grid.t0 + self.grid.width:g}))")

    def concatenate(self, others: Iterable["DualPolSignal"]) -> "DualPolSignal":
        parts = [self, *others]
        q1 = np.concatenate([p.q1 for p in parts])
        q2 = np.concatenate([p.q2 for p in parts])
        return DualPolSignal(TimeGrid(len(q1), self.grid.dt, self.grid.t0), q1, q2, self.units)

    def __repr__(self):
        return (f"DualPolSignal(n={self.grid.n_samples}, dt={self.grid.dt:g}, "
                f"units={self.units!r}, energy={self.energy():.6g})")


@dataclass(frozen=True)
class SpectralEntry:
    """One discrete eigenvalue with its two NF coefficients."""

    lam: complex
    b1: complex
    b2: complex

    def __post_init__(self):
        lam = complex(self.lam)
        if not lam.imag > 0:
            raise ValueError(f"discrete eigenvalues need Im(lambda) > 0, got {lam}")
        b1, b2 = complex(self.b1), complex(self.b2)
        if b1 == 0 and b2 == 0:
            raise ValueError(f"(b1, b2) = (0, 0) at lambda = {lam}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "b2", b2)

    @property
    def b(self) -> np.ndarray:
        return np.array([self.b1, self.b2])


@dataclass(frozen=True)
class DiscreteSpectrum:
    """Ordered collection of :class:`SpectralEntry` with distinct eigenvalues."""

    entries: tuple = ()
    min_separation: float = field(default=1e-6, compare=False)

    def __post_init__(self):
        entries = tuple(e if isinstance(e, SpectralEntry) else SpectralEntry(*e)
                        for e in self.entries)
        for i, ei in enumerate(entries):
            for ej in entries[i + 1:]:
                if abs(ei.lam - ej.lam) < self.min_separation:
                    raise ValueError(
                        f"eigenvalues {ei.lam} and {ej.lam} closer than {self.min_separation}")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries], dtype=complex)

    def swapped(self) -> "DiscreteSpectrum":
        """Spectrum with the two polarization coefficients exchanged."""
        return DiscreteSpectrum(tuple(SpectralEntry(e.lam, e.b2, e.b1) for e in self.entries),
                                self.min_separation)


def dispersion_to_beta2(D: float, wavelength_nm: float = 1550.0) -> float:
    """Convert a dispersion parameter in ps/(nm km) to beta2 in s^2/m.

    >>> round(dispersion_to_beta2(17.0) * 1e27, 2)
    -21.68
    """
    if not D > 0 or not wavelength_nm > 0:
        raise ValueError(f"D and wavelength must be positive, got D={D}, wavelength={wavelength_nm}")
    lam = wavelength_nm * 1e-9
    return -(D * 1e-6) * lam ** 2 / (2 * np.pi * C_LIGHT)


@dataclass(frozen=True)
class FiberLink:
    """Amplified SMF link in customary fiber units.

    Parameters
    ----------
    D : float
        Dispersion parameter, ps/(nm km).  Must be positive (anomalous).
    gamma : float
        Nonlinear coefficient, 1/(W km).
    alpha : float
        Attenuation, dB/km.
    span_length : float
        Span length, km.
    n_spans : int
        Number of amplified spans.
    amp_noise_figure : float
        EDFA noise figure, dB.
    center_wavelength : float
        Carrier wavelength, nm.
    """

    D: float = 17.5
    gamma: float = 1.25
    alpha: float = 0.195
    span_length: float = 41.5
    n_spans: int = 1
    amp_noise_figure: float = 5.0
    center_wavelength: float = 1550.0

    def __post_init__(self):
        errors = []
        if not self.D > 0:
            errors.append(f"D must be > 0 (anomalous dispersion), got {self.D}")
        if not self.gamma > 0:
            errors.append(f"gamma must be > 0, got {self.gamma}")
        if not self.alpha >= 0:
            errors.append(f"alpha must be >= 0, got {self.alpha}")
        if not self.span_length > 0:
            errors.append(f"span_length must be > 0, got {self.span_length}")
        if int(self.n_spans) != self.n_spans or self.n_spans < 0:
            errors.append(f"n_spans must be a non-negative integer, got {self.n_spans}")
        if not self.center_wavelength > 0:
            errors.append(f"center_wavelength must be > 0, got {self.center_wavelength}")
        if errors:
            raise ValueError("; ".join(errors))

    @classmethod
    def from_beta2(cls, beta2: float, center_wavelength: float = 1550.0, **kw) -> "FiberLink":
        lam = center_wavelength * 1e-9
        D = -beta2 * 2 * np.pi * C_LIGHT / lam ** 2 * 1e6
        return cls(D=D, center_wavelength=center_wavelength, **kw)

    @property
    def beta2(self) -> float:
        return dispersion_to_beta2(self.D, self.center_wavelength)

    @property
    def gamma_si(self) -> float:
        """Nonlinear coefficient in 1/(W m)."""
        return self.gamma * 1e-3

    @property
    def alpha_si(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.alpha * 1e-3 * math.log(10) / 10

    @property
    def span_loss_db(self) -> float:
        return self.alpha * self.span_length

    @property
    def carrier_frequency(self) -> float:
        return C_LIGHT / (self.center_wavelength * 1e-9)

    def path_average_factor(self) -> float:
        """(1 - exp(-alpha L)) / (alpha L) for one span; 1 for a lossless fiber."""
        aL = self.alpha_si * self.span_length * 1e3
        if aL == 0:
            return 1.0
        return -math.expm1(-aL) / aL

    def with_spans(self, n_spans: int) -> "FiberLink":
        return FiberLink(self.D, self.gamma, self.alpha, self.span_length, n_spans,
                         self.amp_noise_figure, self.center_wavelength)


@dataclass(frozen=True)
class NormalizationMap:
    """Scales between physical fields and the normalized Manakov system."""

    T0: float
    P0: float
    L0: float
    beta2: float
    gamma_eff: float

    def time_to_norm(self, tau):
        return tau / self.T0

    def distance_to_norm(self, ell):
        return ell / self.L0

    def energy_to_phys(self, energy_norm: float) -> float:
        return self.P0 * self.T0 * energy_norm


def make_normalization(link: FiberLink, T0: float, lossless_path_avg: bool = True,
                       manakov_factor: float = MANAKOV_FACTOR) -> NormalizationMap:
    """Build the physical <-> normalized map for ``link`` with time scale ``T0``.

    ``gamma_eff`` carries the 8/9 polarization-averaging factor and, when
    ``lossless_path_avg`` is set, the per-span path-average factor.
    """
    if not T0 > 0:
        raise ValueError(f"T0 must be positive, got {T0}")
    beta2 = link.beta2
    if beta2 == 0:
        raise ValueError("zero dispersion cannot be normalized")
    eta = link.path_average_factor() if lossless_path_avg else 1.0
    gamma_eff = manakov_factor * link.gamma_si * eta
    L0 = 2 * T0 ** 2 / abs(beta2)
    P0 = 2 / (gamma_eff * L0)
    return NormalizationMap(T0=T0, P0=P0, L0=L0, beta2=beta2, gamma_eff=gamma_eff)


def normalize(signal: DualPolSignal, nmap: NormalizationMap) -> DualPolSignal:
    if signal.units != PHYSICAL:
        raise ValueError(f"normalize expects a physical signal, got {signal.units!r}")
    s = 1 / math.sqrt(nmap.P0)
    return DualPolSignal(signal.grid.scaled(1 / nmap.T0), signal.q1 * s, signal.q2 * s, NORMALIZED)


def denormalize(signal: DualPolSignal, nmap: NormalizationMap) -> DualPolSignal:
    if signal.units != NORMALIZED:
        raise ValueError(f"denormalize expects a normalized signal, got {signal.units!r}")
    s = math.sqrt(nmap.P0)
    return DualPolSignal(signal.grid.scaled(nmap.T0), signal.q1 * s, signal.q2 * s, PHYSICAL)


def relative_l2(x: Sequence, y: Sequence) -> float:
    """||x - y|| / ||y|| over stacked arrays."""
    x = np.concatenate([np.ravel(a) for a in x])
    y = np.concatenate([np.ravel(a) for a in y])
    ny = np.linalg.norm(y)
    return float(np.linalg.norm(x - y) / ny) if ny else float(np.linalg.norm(x))
