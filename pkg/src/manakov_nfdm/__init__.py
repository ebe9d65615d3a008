"""Dual-polarization NFDM simulation: Darboux INFT, forward NFT, SSFM channel and receiver DSP."""
from .core import (DiscreteSpectrum, DualPolSignal, FiberLink, GridTooNarrowError,
                   NormalizationMap, SpectralEntry, TimeGrid, denormalize, make_normalization,
                   normalize)
from .darboux import one_soliton, synthesize
from .nft import ScatteringResult, find_eigenvalues, scatter
from .channel import (PropagationConfig, edfa, noise_loading, polarization_derotate,
                      polarization_rotate, propagate_normalized, ssfm_manakov, transmit)
from .transceiver import (BerReport, ReceiverConfig, SignalingPlan, bps, clock_recover,
                          demap_and_count, demodulate, lowpass, map_bits, modulate, prbs11,
                          rx_rescale)

__version__ = "0.1.0"
