"""Digital transmitter and receiver.

Each 1/baud slot carries one dual-polarization multi-soliton whose four NF
coefficients b1(l1), b2(l1), b1(l2), b2(l2) are QPSK phase modulated, two
bits each.  The receiver chain is rescale -> low-pass -> clock recovery ->
per-slot NFT -> blind phase search per coefficient -> demap.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from .core import (NORMALIZED, DiscreteSpectrum, DualPolSignal, GridTooNarrowError,
                   NormalizationMap, SpectralEntry, TimeGrid, normalize)
from .darboux import synthesize
from .nft import ScatteringError, find_eigenvalues, scatter

log = logging.getLogger(__name__)

HD_FEC_THRESHOLD = 3.8e-3

# 2-bit Gray label -> QPSK point index (phase = rotation + index * pi/2)
GRAY = {(0, 0): 0, (0, 1): 1, (1, 1): 2, (1, 0): 3}
GRAY_INV = {v: k for k, v in GRAY.items()}

COEFFICIENT_NAMES = ("b1_l1", "b2_l1", "b1_l2", "b2_l2")


class AmbiguousClockError(RuntimeError):
    pass


@dataclass(frozen=True)
class SignalingPlan:
    """Eigenvalues, constellations and slot sampling of the NFDM signal.

    Constellation k (for eigenvalue k) has phases
    ``base_rotation + k*pi/4 + m*pi/2``, so the second one is the first
    rotated by pi/4.  ``slot_width`` is the symbol slot in normalized time;
    it fixes T0 = 1 / (baud * slot_width).
    """

    baud: float = 1e9
    eigenvalues: tuple = (0.3j, 0.6j)
    b_modulus: tuple = (1.0, 1.0)
    base_rotation: float = np.pi / 4
    slot_width: float = 32.0
    samples_per_slot: int = 256

    def __post_init__(self):
        eigs = tuple(complex(e) for e in self.eigenvalues)
        object.__setattr__(self, "eigenvalues", eigs)
        object.__setattr__(self, "b_modulus", tuple(float(m) for m in self.b_modulus))
        if len(eigs) != 2:
            raise ValueError("the signaling uses exactly two eigenvalues (8 bits/symbol)")
        if len(self.b_modulus) != len(eigs):
            raise ValueError("need one b modulus per eigenvalue")
        if any(not e.imag > 0 for e in eigs):
            raise ValueError("eigenvalues must lie in the upper half plane")
        if any(not m > 0 for m in self.b_modulus):
            raise ValueError("b moduli must be positive")
        if not self.baud > 0 or not self.slot_width > 0 or self.samples_per_slot < 2:
            raise ValueError("baud, slot_width must be positive and samples_per_slot >= 2")

    @property
    def bits_per_symbol(self) -> int:
        return 4 * len(self.eigenvalues)

    @property
    def symbol_period(self) -> float:
        return 1.0 / self.baud

    @property
    def T0(self) -> float:
        return self.symbol_period / self.slot_width

    @property
    def slot_grid(self) -> TimeGrid:
        return TimeGrid.centered(self.samples_per_slot, self.slot_width)

    def rotation(self, k: int) -> float:
        return self.base_rotation + k * np.pi / 4

    def constellation(self, k: int) -> np.ndarray:
        """Unit QPSK points of eigenvalue k, indexed by Gray point index."""
        return np.exp(1j * (self.rotation(k) + np.arange(4) * np.pi / 2))


def prbs11(seed_state: int = 0x7FF, n_bits: int | None = None) -> np.ndarray:
    """PRBS-11 bits from the Fibonacci LFSR x^11 + x^9 + 1.

    Returns one full period (2047 bits) unless ``n_bits`` is given, in
    which case the sequence is repeated or truncated to that length.
    """
    seed_state = int(seed_state)
    if not 0 < seed_state < (1 << 11):
        raise ValueError(f"seed_state must be a nonzero 11-bit value, got {seed_state}")
    period = (1 << 11) - 1
    out = np.empty(period, dtype=np.uint8)
    state = seed_state
    for i in range(period):
        bit = ((state >> 10) ^ (state >> 8)) & 1
        out[i] = bit
        state = ((state << 1) | bit) & 0x7FF
    if n_bits is None:
        return out
    reps = -(-n_bits // period)
    return np.tile(out, reps)[:n_bits]


def lfsr11_states(seed_state: int = 0x7FF, n: int = 2048):
    """Register contents after each shift; used to check the period."""
    state = seed_state
    states = []
    for _ in range(n):
        bit = ((state >> 10) ^ (state >> 8)) & 1
        state = ((state << 1) | bit) & 0x7FF
        states.append(state)
    return states


def split_symbols(bits, bits_per_symbol: int = 8):
    """Whole symbols (n, bits_per_symbol) and the leftover bits for the next frame."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = len(bits) // bits_per_symbol
    return bits[:n * bits_per_symbol].reshape(n, bits_per_symbol), bits[n * bits_per_symbol:]


def symbol_phases(bits8, plan: SignalingPlan) -> np.ndarray:
    """The four transmitted phases, in coefficient order."""
    bits8 = np.asarray(bits8).ravel()
    if bits8.size != plan.bits_per_symbol:
        raise ValueError(f"need {plan.bits_per_symbol} bits, got {bits8.size}")
    ph = np.empty(4)
    for c in range(4):
        m = GRAY[(int(bits8[2 * c]), int(bits8[2 * c + 1]))]
        ph[c] = plan.rotation(c // 2) + m * np.pi / 2
    return ph


def map_bits(bits8, plan: SignalingPlan) -> DiscreteSpectrum:
    ph = symbol_phases(bits8, plan)
    b = np.exp(1j * ph)
    entries = []
    for k, lam in enumerate(plan.eigenvalues):
        mod = plan.b_modulus[k]
        entries.append(SpectralEntry(lam, mod * b[2 * k], mod * b[2 * k + 1]))
    return DiscreteSpectrum(tuple(entries))


def decide(values, k: int, plan: SignalingPlan) -> np.ndarray:
    """Nearest-phase QPSK decision for eigenvalue k; returns point indices."""
    rel = np.angle(np.asarray(values) * np.exp(-1j * plan.rotation(k)))
    return np.mod(np.rint(rel / (np.pi / 2)), 4).astype(int)


def demap_coefficients(coeffs, plan: SignalingPlan) -> np.ndarray:
    """Bits from the four complex coefficients of one symbol."""
    coeffs = np.asarray(coeffs)
    bits = np.empty(8, dtype=np.uint8)
    for c in range(4):
        m = int(decide(coeffs[c], c // 2, plan))
        bits[2 * c:2 * c + 2] = GRAY_INV[m]
    return bits


def demap_bits(spectrum: DiscreteSpectrum, plan: SignalingPlan) -> np.ndarray:
    coeffs = []
    for e in spectrum:
        coeffs.extend([e.b1, e.b2])
    return demap_coefficients(coeffs, plan)


def _symbol_index(bits8) -> int:
    return int(np.dot(np.asarray(bits8, dtype=int), 1 << np.arange(7, -1, -1)))


def _index_bits(idx: int) -> np.ndarray:
    return np.array([(idx >> s) & 1 for s in range(7, -1, -1)], dtype=np.uint8)


@functools.lru_cache(maxsize=8)
def _pulse_table(plan: SignalingPlan, grid: TimeGrid, floor_db: float):
    """Synthesized pulses for all 256 symbol values, shape (256, 2, n)."""
    table = np.empty((256, 2, grid.n_samples), dtype=complex)
    for idx in range(256):
        try:
            s = synthesize(map_bits(_index_bits(idx), plan), grid, floor_db=floor_db)
        except GridTooNarrowError as exc:
            raise GridTooNarrowError(f"symbol {idx:08b}: {exc}") from None
        table[idx, 0] = s.q1
        table[idx, 1] = s.q2
    table.flags.writeable = False
    return table


def modulate(bits, plan: SignalingPlan, grid: TimeGrid | None = None,
             floor_db: float = -40.0) -> DualPolSignal:
    """Normalized frame of len(bits)/8 consecutive symbol slots."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % plan.bits_per_symbol:
        raise ValueError(f"bit count {bits.size} is not a multiple of {plan.bits_per_symbol}")
    grid = plan.slot_grid if grid is None else grid
    symbols, _ = split_symbols(bits, plan.bits_per_symbol)
    table = _pulse_table(plan, grid, floor_db)
    idx = symbols.astype(int) @ (1 << np.arange(7, -1, -1))
    q1 = table[idx, 0].ravel()
    q2 = table[idx, 1].ravel()
    return DualPolSignal(grid.tiled(len(idx)), q1, q2, NORMALIZED)


def slot_template(plan: SignalingPlan, grid: TimeGrid | None = None) -> np.ndarray:
    """Average slot power profile over all 256 symbols; data-independent."""
    grid = plan.slot_grid if grid is None else grid
    table = _pulse_table(plan, grid, -40.0)
    return np.mean(np.abs(table[:, 0]) ** 2 + np.abs(table[:, 1]) ** 2, axis=0)


def ideal_mean_power(plan: SignalingPlan, grid: TimeGrid | None = None) -> float:
    """Mean normalized power of a frame with uniformly distributed symbols."""
    return float(np.mean(slot_template(plan, grid)))


def rx_rescale(signal: DualPolSignal, ideal_power: float) -> DualPolSignal:
    """Scale both polarizations jointly so the mean power equals ``ideal_power``."""
    p = signal.mean_power()
    if not p > 0:
        raise ValueError("cannot rescale a zero-power signal")
    g = np.sqrt(ideal_power / p)
    return signal.replace(q1=signal.q1 * g, q2=signal.q2 * g)


def lowpass(signal: DualPolSignal, cutoff: float) -> DualPolSignal:
    """Zero-phase brick-wall filter; ``cutoff`` in inverse grid time units (Hz if physical)."""
    nyq = 0.5 / signal.grid.dt
    if cutoff >= nyq:
        return signal
    f = np.fft.fftfreq(signal.grid.n_samples, signal.grid.dt)
    keep = np.abs(f) <= cutoff
    return signal.replace(q1=np.fft.ifft(np.fft.fft(signal.q1) * keep),
                          q2=np.fft.ifft(np.fft.fft(signal.q2) * keep))


def clock_recover(frame: DualPolSignal, template, ambiguity: float = 0.01):
    """Align slots to the template by circular power cross-correlation.

    The received power is folded onto one slot and correlated with the
    template in the frequency domain.  Returns the aligned frame and the
    integer shift that was applied (``np.roll`` convention).
    """
    template = np.asarray(template, dtype=float)
    n = template.size
    p = frame.power()
    if p.size % n:
        raise ValueError("frame length is not a whole number of slots")
    folded = p.reshape(-1, n).mean(axis=0)
    a = folded - folded.mean()
    b = template - template.mean()
    xc = np.fft.ifft(np.fft.fft(a) * np.conj(np.fft.fft(b))).real
    lag = int(np.argmax(xc))
    peak = xc[lag]
    if peak > 0:
        is_max = (xc >= np.roll(xc, 1)) & (xc >= np.roll(xc, -1))
        is_max[lag] = False
        if np.any(is_max & (xc >= (1 - ambiguity) * peak)):
            raise AmbiguousClockError("two clock phases within 1% of the correlation peak")
    if lag >= n // 2:
        lag -= n
    shift = -lag
    return frame.replace(q1=np.roll(frame.q1, shift), q2=np.roll(frame.q2, shift)), shift


def bps(symbols, constellation, n_test_phases: int = 32, window: int = 16,
        pilots=None):
    """Blind phase search for one QPSK coefficient stream.

    ``symbols`` may contain NaN for erased positions.  The test rotations
    cover [0, pi/2); the best one per window is refined by the windowed
    mean phase error against the decisions it implies.  The estimate is
    unwrapped with period pi/2 and the remaining four-fold ambiguity is
    fixed with ``pilots`` (the known constellation points of the first
    symbols).  Returns the de-rotated
    symbols and the applied phase per symbol.
    """
    if n_test_phases < 8:
        raise ValueError("n_test_phases must be >= 8")
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(symbols, dtype=complex)
    erased = ~np.isfinite(x)
    mag = np.abs(np.where(erased, 1, x))
    u = np.where(erased, 0, x / np.where(mag > 0, mag, 1))
    const = np.asarray(constellation)
    test = np.arange(n_test_phases) * (np.pi / 2) / n_test_phases
    rot = u[:, None] * np.exp(1j * test)[None, :]
    d = np.min(np.abs(rot[:, :, None] - const[None, None, :]) ** 2, axis=2)
    d[erased] = 0.0
    dsum = uniform_filter1d(d, size=window, axis=0, mode="nearest")
    theta = test[np.argmin(dsum, axis=1)]
    # second stage: windowed decision-directed correction below the grid step
    r = u * np.exp(1j * theta)
    dec = const[np.argmin(np.abs(r[:, None] - const[None, :]), axis=1)]
    z = np.where(erased, 0, r * np.conj(dec))
    zs = (uniform_filter1d(z.real, window, mode="nearest")
          + 1j * uniform_filter1d(z.imag, window, mode="nearest"))
    theta = theta - np.angle(np.where(zs == 0, 1, zs))
    theta = np.unwrap(theta, period=np.pi / 2)
    if pilots is not None and len(pilots):
        pilots = np.asarray(pilots)
        k = min(len(pilots), len(x))
        seg = u[:k] * np.exp(1j * theta[:k])
        ok = ~erased[:k]
        best = max(range(4), key=lambda m: -np.sum(
            np.abs(seg[ok] * np.exp(1j * m * np.pi / 2) - pilots[:k][ok]) ** 2))
        theta = theta + best * np.pi / 2
    out = np.where(erased, np.nan + 0j, x * np.exp(1j * theta))
    return out, theta


@dataclass
class BerReport:
    """Bit errors per coefficient (order b1(l1), b2(l1), b1(l2), b2(l2))."""

    errors: np.ndarray
    n_symbols: int
    erasures: int = 0

    @property
    def bits_per_coefficient(self) -> int:
        return 2 * self.n_symbols

    @property
    def n_bits(self) -> int:
        return 8 * self.n_symbols

    @property
    def ber(self) -> np.ndarray:
        return self.errors / max(self.bits_per_coefficient, 1)

    @property
    def ber_avg(self) -> float:
        return float(self.errors.sum() / max(self.n_bits, 1))

    def per_eigenvalue(self) -> np.ndarray:
        return np.array([self.errors[:2].sum(), self.errors[2:].sum()]) / max(2 * self.bits_per_coefficient, 1)


def assign_to_nominal(spectrum: DiscreteSpectrum, plan: SignalingPlan, radius: float | None = None):
    """Map detected entries onto nominal eigenvalue slots; None marks an erasure.

    With as many detections as nominal eigenvalues the assignment is by
    increasing imaginary part (robust to a common drift of all roots, e.g.
    from power-rescaling bias).  Otherwise each detection goes to the
    nearest nominal eigenvalue within ``radius``.
    """
    nominal = np.array(plan.eigenvalues)
    entries = list(spectrum)
    if len(entries) == nominal.size:
        by_im = sorted(entries, key=lambda e: e.lam.imag)
        order = np.argsort(nominal.imag, kind="stable")
        out = [None] * nominal.size
        for k, e in zip(order, by_im):
            out[k] = e
        return out
    if radius is None:
        radius = 0.5 * np.min(np.abs(nominal[0] - nominal[1:])) if nominal.size > 1 else np.inf
    out = [None] * nominal.size
    for e in spectrum:
        k = int(np.argmin(np.abs(nominal - e.lam)))
        d = abs(nominal[k] - e.lam)
        if d < radius and (out[k] is None or d < abs(nominal[k] - out[k].lam)):
            out[k] = e
    return out


def demap_and_count(rx_spectra, tx_bits, plan: SignalingPlan, skip_symbols: int = 0) -> BerReport:
    """Count bit errors; a missing eigenvalue costs 2 bit errors on each of its coefficients."""
    tx_sym, _ = split_symbols(tx_bits, plan.bits_per_symbol)
    if len(rx_spectra) != len(tx_sym):
        raise ValueError(f"{len(rx_spectra)} received symbols for {len(tx_sym)} transmitted")
    errors = np.zeros(4, dtype=np.int64)
    erasures = 0
    for spec, bits in zip(list(rx_spectra)[skip_symbols:], tx_sym[skip_symbols:]):
        slots = assign_to_nominal(spec, plan)
        for k, e in enumerate(slots):
            if e is None:
                erasures += 1
                errors[2 * k:2 * k + 2] += 2
                continue
            for j, b in enumerate((e.b1, e.b2)):
                c = 2 * k + j
                m = int(decide(b, k, plan))
                rx = GRAY_INV[m]
                errors[c] += (rx[0] != bits[2 * c]) + (rx[1] != bits[2 * c + 1])
    return BerReport(errors, len(tx_sym) - skip_symbols, erasures)


@dataclass(frozen=True)
class ReceiverConfig:
    """Receiver settings, frequencies in Hz; None disables a filter.

    ``frontend_bandwidth`` models the analog bandwidth of the coherent
    receiver and acts before the power rescaling; ``lowpass_cutoff`` is the
    DSP filter applied after it.
    """

    frontend_bandwidth: float | None = 33e9
    lowpass_cutoff: float | None = 25e9
    bps_test_phases: int = 32
    bps_window: int = 16
    n_pilots: int = 32
    newton_tol: float = 1e-9
    newton_max_iter: int = 50
    clock_recovery: bool = True


@dataclass
class Demodulated:
    """Receiver output before and after phase recovery."""

    raw: np.ndarray          # (n_symbols, 4) complex, NaN where erased
    corrected: np.ndarray    # same, after BPS
    eigenvalues: np.ndarray  # (n_symbols, 2) complex, NaN where erased
    shift: int = 0
    spectra: list = field(default_factory=list)


def detect_slots(frame: DualPolSignal, plan: SignalingPlan, cfg: ReceiverConfig):
    """Per-slot NFT; returns raw coefficients and eigenvalues (NaN = erasure)."""
    n = plan.samples_per_slot
    n_sym = frame.grid.n_samples // n
    grid = plan.slot_grid
    raw = np.full((n_sym, 4), np.nan + 0j)
    eigs = np.full((n_sym, 2), np.nan + 0j)
    guesses = list(plan.eigenvalues)
    for s in range(n_sym):
        sl = slice(s * n, (s + 1) * n)
        slot = DualPolSignal(grid, frame.q1[sl], frame.q2[sl], NORMALIZED)
        roots = find_eigenvalues(slot, guesses, cfg.newton_tol, cfg.newton_max_iter)
        entries = []
        for lam in roots:
            try:
                r = scatter(slot, lam)
            except ScatteringError:
                continue
            if r.b1 == 0 and r.b2 == 0:
                continue
            entries.append(SpectralEntry(lam, r.b1, r.b2))
        spec = DiscreteSpectrum(tuple(entries), min_separation=0.0)
        for k, e in enumerate(assign_to_nominal(spec, plan)):
            if e is not None:
                raw[s, 2 * k:2 * k + 2] = (e.b1, e.b2)
                eigs[s, k] = e.lam
    return raw, eigs


def demodulate(signal: DualPolSignal, plan: SignalingPlan, nmap: NormalizationMap,
               cfg: ReceiverConfig | None = None, ideal_power: float | None = None,
               pilot_bits=None) -> Demodulated:
    """Full receive chain on a physical frame.

    ``ideal_power`` is the mean physical power of the ideal INFT signal;
    ``pilot_bits`` are the known bits of the first ``cfg.n_pilots`` symbols.
    """
    cfg = cfg or ReceiverConfig()
    if ideal_power is None:
        ideal_power = ideal_mean_power(plan) * nmap.P0
    sig = signal
    if cfg.frontend_bandwidth is not None:
        sig = lowpass(sig, cfg.frontend_bandwidth)
    sig = rx_rescale(sig, ideal_power)
    if cfg.lowpass_cutoff is not None:
        sig = lowpass(sig, cfg.lowpass_cutoff)
    sig = normalize(sig, nmap)
    shift = 0
    if cfg.clock_recovery:
        sig, shift = clock_recover(sig, slot_template(plan))
    raw, eigs = detect_slots(sig, plan, cfg)

    pilot_pts = None
    if pilot_bits is not None and cfg.n_pilots:
        psym, _ = split_symbols(pilot_bits, plan.bits_per_symbol)
        psym = psym[:cfg.n_pilots]
        pilot_pts = np.array([np.exp(1j * symbol_phases(b, plan)) for b in psym])
    corrected = np.empty_like(raw)
    for c in range(4):
        k = c // 2
        pil = None if pilot_pts is None else pilot_pts[:, c]
        corrected[:, c], _ = bps(raw[:, c], plan.constellation(k), cfg.bps_test_phases,
                                 cfg.bps_window, pil)
    spectra = []
    for s in range(raw.shape[0]):
        entries = [SpectralEntry(eigs[s, k], corrected[s, 2 * k], corrected[s, 2 * k + 1])
                   for k in range(2) if np.isfinite(eigs[s, k])]
        spectra.append(DiscreteSpectrum(tuple(entries), min_separation=0.0))
    return Demodulated(raw, corrected, eigs, shift, spectra)
