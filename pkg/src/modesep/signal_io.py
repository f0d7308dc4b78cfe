"""Signal container, synthesis, mixing, WAV/CSV persistence and spectrograms."""

from __future__ import annotations

import csv
import logging
import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 8000
PCM16_SCALE = 32768.0


class SignalError(ValueError):
    """Invalid signal arguments (bad frequency, mismatched rates, zero energy...)."""


class WavFormatError(SignalError):
    """A WAV file that is not mono PCM16 / float32, or is malformed."""


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled real-valued time series.

    Parameters
    ----------
    samples : 1d array
        Amplitudes, finite, typically within [-1, 1].
    sample_rate : int
        Sampling rate in Hz.
    """

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        x = np.array(self.samples, dtype=float, copy=True).ravel()
        if x.size == 0:
            raise SignalError("signal must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise SignalError("signal contains NaN or Inf samples")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise SignalError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))

    def with_samples(self, samples: np.ndarray) -> "Signal":
        return Signal(samples, self.sample_rate)


def as_array(x) -> np.ndarray:
    """Return the sample array of a :class:`Signal` or array-like."""
    if isinstance(x, Signal):
        return x.samples
    return np.asarray(x, dtype=float)


def energy(x) -> float:
    a = as_array(x)
    return float(np.dot(a, a))


def synth_sine(freq_hz: float, amplitude: float = 1.0, phase_rad: float = 0.0,
               duration_s: float = 1.0, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Signal:
    """Sampled sinusoid ``amplitude * sin(2 pi f n / fs + phase)``.

    Raises
    ------
    SignalError
        If the frequency is not strictly between 0 and Nyquist, or the
        duration rounds to zero samples.
    """
    if not 0 < freq_hz < sample_rate / 2:
        raise SignalError(
            f"frequency {freq_hz} Hz must lie in (0, {sample_rate / 2}) Hz (Nyquist) "
            f"for sample rate {sample_rate}"
        )
    if duration_s <= 0:
        raise SignalError(f"duration must be positive, got {duration_s}")
    n_samples = int(round(duration_s * sample_rate))
    if n_samples < 1:
        raise SignalError("duration too short for one sample")
    n = np.arange(n_samples)
    x = amplitude * np.sin(2 * np.pi * freq_hz * n / sample_rate + phase_rad)
    return Signal(x, sample_rate)


def _check_rates(a: Signal, b: Signal):
    if a.sample_rate != b.sample_rate:
        raise SignalError(f"sample rate mismatch: {a.sample_rate} Hz vs {b.sample_rate} Hz")


def _truncate_pair(a: Signal, b: Signal) -> tuple[np.ndarray, np.ndarray]:
    n = min(len(a), len(b))
    if len(a) != len(b):
        warnings.warn(
            f"length mismatch ({len(a)} vs {len(b)}); truncating to {n} samples",
            stacklevel=3,
        )
    return a.samples[:n], b.samples[:n]


def mix(a: Signal, b: Signal, gain_a: float = 1.0, gain_b: float = 1.0) -> Signal:
    """Instantaneous two-source mixture ``gain_a * a + gain_b * b``.

    Signals of unequal length are truncated to the shorter one and a
    ``UserWarning`` is emitted.
    """
    _check_rates(a, b)
    xa, xb = _truncate_pair(a, b)
    return Signal(gain_a * xa + gain_b * xb, a.sample_rate)


def mix_at_snr(clean: Signal, noise: Signal, snr_db: float) -> tuple[Signal, Signal]:
    """Scale ``noise`` so that the clean-to-noise energy ratio equals ``snr_db``.

    Returns
    -------
    noisy : Signal
        ``clean + g * noise``.
    scaled_noise : Signal
        ``g * noise``, kept as the reference for later metrics.
    """
    _check_rates(clean, noise)
    xc, xn = _truncate_pair(clean, noise)
    e_clean = float(np.dot(xc, xc))
    e_noise = float(np.dot(xn, xn))
    if e_clean == 0:
        raise SignalError("clean signal has zero energy; SNR is undefined")
    if e_noise == 0:
        raise SignalError("noise signal has zero energy; cannot reach the requested SNR")
    gain = math.sqrt(e_clean / (e_noise * 10 ** (snr_db / 10)))
    scaled = gain * xn
    return Signal(xc + scaled, clean.sample_rate), Signal(scaled, clean.sample_rate)


def load_wav(path) -> Signal:
    """Read a mono 16-bit PCM or 32-bit float WAV file.

    Integer samples are divided by 32768 so they land in [-1, 1).
    """
    path = Path(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, EOFError, struct.error, wavfile.WavFileWarning) as exc:
        raise WavFormatError(f"{path}: malformed or unsupported WAV ({exc})") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: expected mono audio, found {data.shape[1]} channels")
    if data.dtype == np.int16:
        x = data.astype(float) / PCM16_SCALE
    elif data.dtype == np.float32:
        x = data.astype(float)
    else:
        raise WavFormatError(f"{path}: unsupported sample format {data.dtype}; "
                             "need 16-bit PCM or 32-bit float")
    if x.size == 0:
        raise WavFormatError(f"{path}: no audio samples")
    return Signal(x, rate)


def save_wav(signal: Signal, path, fmt: str = "pcm16") -> None:
    """Write ``signal`` as mono WAV, either ``"pcm16"`` (clipped) or ``"float32"``."""
    if fmt == "pcm16":
        q = np.round(signal.samples * PCM16_SCALE)
        clipped = np.clip(q, -32768, 32767)
        if np.any(clipped != q):
            logger.warning("clipping %d samples while writing %s", int(np.sum(clipped != q)), path)
        data = clipped.astype(np.int16)
    elif fmt == "float32":
        data = signal.samples.astype(np.float32)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    wavfile.write(Path(path), signal.sample_rate, data)


def load_csv_signal(path, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Signal:
    """Read a one-column CSV (header row, then one value per line) as a signal."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise SignalError(f"{path}: CSV needs a header row and at least one value")
    try:
        values = [float(r[0]) for r in rows[1:] if r]
    except (ValueError, IndexError) as exc:
        raise SignalError(f"{path}: non-numeric CSV content ({exc})") from exc
    return Signal(values, sample_rate)


def fmt_num(value: float) -> str:
    """Fixed 6-significant-digit rendering; infinities become ``inf``/``-inf``."""
    if value is None:
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.6g}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a UTF-8 CSV; floats are rendered with :func:`fmt_num`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_num(v) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def write_columns_csv(path, columns: dict[str, np.ndarray]) -> None:
    """Write equal-length arrays as named CSV columns, one sample per line."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names]) if names else []
    write_csv(path, names, ([float(v) for v in row] for row in data))


def spectrogram(signal: Signal, frame_len: int = 256, hop: int = 128) -> np.ndarray:
    """Hann-windowed magnitude STFT, shape ``(n_frames, frame_len // 2 + 1)``.

    Frames are taken without padding, so there are
    ``(N - frame_len) // hop + 1`` of them.
    """
    if frame_len < 2:
        raise SignalError("frame_len must be at least 2")
    if not 0 < hop <= frame_len:
        raise SignalError("hop must satisfy 0 < hop <= frame_len")
    x = as_array(signal)
    if x.size < frame_len:
        raise SignalError(f"signal has {x.size} samples, shorter than frame_len={frame_len}")
    n_frames = (x.size - frame_len) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop][:n_frames]
    window = np.hanning(frame_len)
    return np.abs(np.fft.rfft(frames * window, axis=1))


def write_spectrogram_csv(path, mags: np.ndarray, sample_rate: int, frame_len: int,
                          hop: int) -> None:
    """Long-format spectrogram CSV: ``frame,time_s,bin,freq_hz,magnitude``."""
    n_frames, n_bins = mags.shape

    def rows():
        for f in range(n_frames):
            t = f * hop / sample_rate
            for b in range(n_bins):
                yield [f, float(t), b, float(b * sample_rate / frame_len), float(mags[f, b])]

    write_csv(path, ["frame", "time_s", "bin", "freq_hz", "magnitude"], rows())
