"""EMD, EEMD and CEEMDAN decompositions with source-separation metrics and experiments."""

__version__ = "0.1.0"

from .emd import Decomposition, InsufficientExtrema, SiftConfig, emd, find_local_extrema, is_imf
from .ensemble import EnsembleConfig, ceemdan, decompose, eemd
from .metrics import MetricError, assign_imfs, decompose_error, sar, sdr, snr
from .signal_io import Signal, SignalError, load_wav, mix, mix_at_snr, save_wav, synth_sine

__all__ = [
    "Decomposition", "InsufficientExtrema", "SiftConfig", "emd", "find_local_extrema", "is_imf",
    "EnsembleConfig", "ceemdan", "decompose", "eemd",
    "MetricError", "assign_imfs", "decompose_error", "sar", "sdr", "snr",
    "Signal", "SignalError", "load_wav", "mix", "mix_at_snr", "save_wav", "synth_sine",
]
