"""Empirical mode decomposition: extrema, spline envelopes, sifting and the outer loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .signal_io import Signal, as_array, write_columns_csv


class InsufficientExtrema(ValueError):
    """Raised when a signal has too few extrema to build both envelopes."""


@dataclass(frozen=True)
class SiftConfig:
    """Sifting parameters.

    Parameters
    ----------
    sd_threshold : float
        Stop sifting once the Cauchy-type SD between successive iterates
        drops below this value.
    max_sift_iterations : int
        Hard cap on sifting iterations per IMF.
    envelope_boundary : str
        End extension policy; only ``"mirror"`` is implemented.
    mean_tol, mean_tol_max, mean_tol_fraction : float
        Approximate zero-mean-envelope test: ``|m| / a`` (mean over
        half-range of the envelopes) must stay below ``mean_tol`` on all but
        a ``mean_tol_fraction`` share of samples and below ``mean_tol_max``
        everywhere.
    """

    sd_threshold: float = 0.2
    max_sift_iterations: int = 100
    envelope_boundary: str = "mirror"
    mean_tol: float = 0.05
    mean_tol_max: float = 0.5
    mean_tol_fraction: float = 0.05

    def __post_init__(self):
        if not self.sd_threshold > 0:
            raise ValueError("sd_threshold must be positive")
        if self.max_sift_iterations < 1:
            raise ValueError("max_sift_iterations must be >= 1")
        if not 0 < self.mean_tol <= self.mean_tol_max:
            raise ValueError("need 0 < mean_tol <= mean_tol_max")
        if not 0 <= self.mean_tol_fraction <= 1:
            raise ValueError("mean_tol_fraction must lie in [0, 1]")
        if self.envelope_boundary != "mirror":
            raise ValueError(f"unsupported envelope boundary {self.envelope_boundary!r}")


class ExtremaSet(NamedTuple):
    max_idx: np.ndarray
    max_val: np.ndarray
    min_idx: np.ndarray
    min_val: np.ndarray

    @property
    def n_max(self) -> int:
        return self.max_idx.size

    @property
    def n_min(self) -> int:
        return self.min_idx.size

    @property
    def count(self) -> int:
        return self.max_idx.size + self.min_idx.size


@dataclass
class Decomposition:
    """IMFs (one per row, highest frequency first) plus the final residue."""

    imfs: np.ndarray
    residue: np.ndarray
    sample_rate: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.residue = np.asarray(self.residue, dtype=float)
        n = self.residue.size
        self.imfs = np.asarray(self.imfs, dtype=float).reshape(-1, n)

    @property
    def n_imfs(self) -> int:
        return self.imfs.shape[0]

    @property
    def source_length(self) -> int:
        return self.residue.size

    def modes(self) -> np.ndarray:
        """IMFs with the residue appended as a final row."""
        return np.vstack([self.imfs, self.residue[None, :]])

    def reconstruct(self) -> np.ndarray:
        return self.imfs.sum(axis=0) + self.residue

    def reconstruction_error(self, signal) -> float:
        """Max absolute reconstruction error relative to ``max|signal|``."""
        x = as_array(signal)
        scale = np.max(np.abs(x))
        err = np.max(np.abs(x - self.reconstruct()))
        return float(err / scale) if scale > 0 else float(err)

    def imf_signals(self) -> list[Signal]:
        rate = self.sample_rate or 1
        return [Signal(row, rate) for row in self.imfs]

    def to_csv(self, path) -> None:
        """One column per IMF (``imf1``...), final column ``residue``."""
        cols = {f"imf{k + 1}": row for k, row in enumerate(self.imfs)}
        cols["residue"] = self.residue
        write_columns_csv(path, cols)


def find_local_extrema(signal) -> ExtremaSet:
    """Strict local maxima and minima; endpoints are never extrema.

    A flat run bounded on both sides by lower samples counts as one maximum
    located at its first index (symmetrically for minima).
    """
    x = np.ascontiguousarray(as_array(signal), dtype=float)
    imax, imin = _kernels.extrema(x)
    return ExtremaSet(imax, x[imax], imin, x[imin])


def envelope(signal, idx, values=None, boundary: str = "mirror") -> np.ndarray:
    """Natural cubic spline through extrema, evaluated at every sample index.

    Parameters
    ----------
    signal : Signal or 1d array
        Only its length is used.
    idx : array of int, or list of (index, value) pairs
        Knot positions (and values when ``values`` is omitted).
    values : array, optional
        Knot values.
    boundary : {"mirror", "none"}
        ``"mirror"`` reflects the two outermost knots about each endpoint.

    Raises
    ------
    InsufficientExtrema
        If fewer than two knots are available after extension.
    """
    n = as_array(signal).size
    if values is None:
        pairs = np.asarray(idx, dtype=float).reshape(-1, 2)
        idx, values = pairs[:, 0], pairs[:, 1]
    idx = np.asarray(idx, dtype=float)
    values = np.asarray(values, dtype=float)
    if idx.size == 0:
        raise InsufficientExtrema("no extrema to interpolate")
    order = np.argsort(idx, kind="stable")
    idx, values = idx[order], values[order]
    if boundary == "mirror":
        idx, values = _kernels.mirror_knots(idx, values, n)
    elif boundary != "none":
        raise ValueError(f"unknown boundary policy {boundary!r}")
    if idx.size < 2:
        raise InsufficientExtrema("fewer than 2 knots after boundary extension")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("knot positions must be distinct")
    return _kernels.natural_spline(idx, values, n)


def _mean_envelope(x: np.ndarray, ext: ExtremaSet) -> np.ndarray:
    return _kernels.mean_envelope(x, ext.max_idx, ext.min_idx)


def _decomposable(ext: ExtremaSet) -> bool:
    return ext.n_max >= 2 and ext.n_min >= 2


def sift_once(signal, config: SiftConfig | None = None) -> np.ndarray:
    """One sifting step: subtract the mean of the upper and lower envelopes."""
    config = config or SiftConfig()
    x = np.ascontiguousarray(as_array(signal), dtype=float)
    ext = find_local_extrema(x)
    if not _decomposable(ext):
        raise InsufficientExtrema(
            f"need >= 2 maxima and >= 2 minima, found {ext.n_max} and {ext.n_min}")
    return x - _mean_envelope(x, ext)


def count_zero_crossings(signal) -> int:
    """Sign changes between consecutive samples; a zero takes the next sample's sign."""
    return int(_kernels.zero_crossings(np.ascontiguousarray(as_array(signal), dtype=float)))


def _imf_counts_ok(x: np.ndarray, ext: ExtremaSet) -> bool:
    return abs(ext.count - count_zero_crossings(x)) <= 1


def is_imf(candidate) -> bool:
    """Extrema count and zero-crossing count differ by at most one."""
    x = as_array(candidate)
    return _imf_counts_ok(x, find_local_extrema(x))


def sd_criterion(prev, curr) -> float:
    """Sum over samples of ``(prev - curr)**2 / prev**2``, skipping ``prev == 0``."""
    p = as_array(prev)
    c = as_array(curr)
    if p.shape != c.shape:
        raise ValueError("sd_criterion needs equal-length inputs")
    keep = p != 0
    return float(np.sum((p[keep] - c[keep]) ** 2 / p[keep] ** 2))


def extract_imf(x, config: SiftConfig | None = None) -> np.ndarray:
    """Sift ``x`` until it is an IMF or the iteration cap is hit.

    A candidate is accepted when its extrema and zero-crossing counts match
    (within one) and either its mean envelope is small or the SD between
    successive iterates has dropped below ``config.sd_threshold``.  If the
    cap is reached on a candidate whose counts do not match, the latest
    earlier iterate whose counts did match is returned instead.

    Sifting starts unconditionally, so ``x`` must have at least two maxima
    and two minima; otherwise it is returned unchanged.
    """
    config = config or SiftConfig()
    x = np.ascontiguousarray(as_array(x), dtype=float)
    h, _ = _kernels.extract_imf(x, config.sd_threshold, config.max_sift_iterations,
                                config.mean_tol, config.mean_tol_max, config.mean_tol_fraction)
    return h


def first_imf(signal, config: SiftConfig | None = None) -> np.ndarray:
    """First IMF of ``signal``; all zeros when the signal cannot be sifted."""
    config = config or SiftConfig()
    x = np.ascontiguousarray(as_array(signal), dtype=float)
    ext = find_local_extrema(x)
    if not _decomposable(ext):
        return np.zeros_like(x)
    return extract_imf(x, config)


def emd(signal, config: SiftConfig | None = None, max_imfs: int | None = None) -> Decomposition:
    """Decompose ``signal`` into IMFs plus a residue.

    IMFs are extracted until the residue has fewer than two maxima or fewer
    than two minima, or ``max_imfs`` have been produced.  The residue is the
    running difference, so ``sum(imfs) + residue`` reproduces the input up to
    rounding.
    """
    config = config or SiftConfig()
    x = as_array(signal)
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains NaN or Inf samples")
    rate = signal.sample_rate if isinstance(signal, Signal) else None
    residue = x.astype(float, copy=True)
    imfs = []
    while max_imfs is None or len(imfs) < max_imfs:
        ext = find_local_extrema(residue)
        if not _decomposable(ext):
            break
        imf = extract_imf(residue, config)
        imfs.append(imf)
        residue = residue - imf
    imfs = np.array(imfs) if imfs else np.empty((0, x.size))
    return Decomposition(imfs, residue, rate)
