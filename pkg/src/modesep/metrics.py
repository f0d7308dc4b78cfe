"""Separation metrics (SDR, SAR, SNR) and oracle grouping of modes onto references."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .emd import Decomposition
from .signal_io import as_array, fmt_num

INF = math.inf
EXHAUSTIVE_MAX_IMFS = 16
EXHAUSTIVE_MAX_ASSIGNMENTS = 2 ** 17


class MetricError(ValueError):
    """Metric undefined for the given inputs (zero-energy reference, length mismatch...)."""


def _pair(reference, estimate) -> tuple[np.ndarray, np.ndarray]:
    s = as_array(reference)
    e = as_array(estimate)
    if s.shape != e.shape:
        raise MetricError(f"length mismatch: reference {s.size} vs estimate {e.size}")
    return s, e


def _ratio_db(num: float, den: float) -> float:
    if den == 0:
        return INF
    return 10 * math.log10(num / den)


def sdr(reference, estimate) -> float:
    """Signal-to-distortion ratio ``10 log10(|s|^2 / |s - s_hat|^2)`` in dB.

    Gain errors count as distortion (no projection).  Returns ``inf`` for
    an exact estimate.
    """
    s, e = _pair(reference, estimate)
    e_ref = float(np.dot(s, s))
    if e_ref == 0:
        raise MetricError("reference has zero energy")
    d = s - e
    return _ratio_db(e_ref, float(np.dot(d, d)))


def snr(clean, degraded) -> float:
    """``10 log10(|clean|^2 / |degraded - clean|^2)`` in dB."""
    c, d = _pair(clean, degraded)
    e_clean = float(np.dot(c, c))
    if e_clean == 0:
        raise MetricError("clean signal has zero energy")
    diff = d - c
    return _ratio_db(e_clean, float(np.dot(diff, diff)))


@dataclass
class ErrorDecomposition:
    target: np.ndarray
    e_interf: np.ndarray
    e_noise: np.ndarray
    e_artif: np.ndarray

    def total(self) -> np.ndarray:
        return self.target + self.e_interf + self.e_noise + self.e_artif


def _project(x: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    if not basis:
        return np.zeros_like(x)
    B = np.column_stack(basis)
    coef, *_ = np.linalg.lstsq(B, x, rcond=None)
    return B @ coef


def decompose_error(reference, estimate, noise_ref=None,
                    interferers: Sequence | None = None) -> ErrorDecomposition:
    """Split an estimate into target, interference, noise and artifact parts.

    ``target`` is the orthogonal projection of the estimate onto the
    reference.  The rest of the estimate is projected (least squares) onto
    the span of ``interferers`` to give ``e_interf``; what is left after that
    is projected onto ``noise_ref`` to give ``e_noise``; artifacts are the
    final remainder.  The four parts sum to the estimate.
    """
    s, e = _pair(reference, estimate)
    e_ref = float(np.dot(s, s))
    if e_ref == 0:
        raise MetricError("reference has zero energy")
    target = (float(np.dot(e, s)) / e_ref) * s
    rest = e - target
    interferers = [as_array(v) for v in (interferers or [])]
    for v in interferers:
        if v.shape != s.shape:
            raise MetricError("interferer length differs from the reference")
    e_interf = _project(rest, interferers)
    rest = rest - e_interf
    if noise_ref is not None:
        n = as_array(noise_ref)
        if n.shape != s.shape:
            raise MetricError("noise reference length differs from the reference")
        e_noise = _project(rest, [n])
    else:
        e_noise = np.zeros_like(e)
    return ErrorDecomposition(target, e_interf, e_noise, rest - e_noise)


def sar(error: ErrorDecomposition) -> float:
    """Signal-to-artifact ratio in dB; ``inf`` when there are no artifacts."""
    legit = error.target + error.e_interf + error.e_noise
    num = float(np.dot(legit, legit))
    if num == 0:
        raise MetricError("target + interference + noise has zero energy")
    return _ratio_db(num, float(np.dot(error.e_artif, error.e_artif)))


@dataclass
class Assignment:
    """Grouping of decomposition modes (IMFs, then residue) onto references.

    ``groups[j]`` lists the mode indices summed into the estimate of
    reference ``j``; index ``n_imfs`` denotes the residue.
    """

    groups: list[list[int]]
    per_source_sdr: list[float]
    estimates: np.ndarray
    method: str

    @property
    def total_sdr_db(self) -> float:
        return float(sum(self.per_source_sdr))

    @property
    def mean_sdr_db(self) -> float:
        return self.total_sdr_db / len(self.per_source_sdr)


def _labels_to_groups(labels: Sequence[int], n_refs: int) -> list[list[int]]:
    return [[i for i, lab in enumerate(labels) if lab == j] for j in range(n_refs)]


def _finish(modes, refs, labels, method) -> Assignment:
    labels = np.asarray(labels)
    estimates = np.array([modes[labels == j].sum(axis=0) for j in range(len(refs))])
    per = [sdr(r, est) for r, est in zip(refs, estimates)]
    return Assignment(_labels_to_groups(labels.tolist(), len(refs)), per, estimates, method)


def _score(err: np.ndarray, ref_energy: np.ndarray) -> np.ndarray:
    # cap at 200 dB so exact matches compare as finite maxima
    err = np.maximum(err, ref_energy * 1e-20)
    return 10 * np.log10(ref_energy / err).sum(axis=-1)


def assign_exhaustive(modes: np.ndarray, refs: np.ndarray) -> Assignment:
    """Best grouping over every labelling of modes to references."""
    n_modes = modes.shape[0]
    n_refs = refs.shape[0]
    gram = modes @ modes.T
    cross = modes @ refs.T                     # (n_modes, n_refs)
    ref_energy = np.einsum("ij,ij->i", refs, refs)
    labels = np.array(list(itertools.product(range(n_refs), repeat=n_modes)), dtype=np.int8)
    errs = np.empty((labels.shape[0], n_refs))
    for j in range(n_refs):
        a = (labels == j).astype(float)
        errs[:, j] = ref_energy[j] - 2 * a @ cross[:, j] + ((a @ gram) * a).sum(axis=1)
    best = int(np.argmax(_score(errs, ref_energy)))
    return _finish(modes, refs, labels[best], "exhaustive")


def assign_greedy(modes: np.ndarray, refs: np.ndarray) -> Assignment:
    """Give each mode to the reference it correlates with most (signed, normalized)."""
    mode_norm = np.linalg.norm(modes, axis=1)
    ref_norm = np.linalg.norm(refs, axis=1)
    corr = (modes @ refs.T) / np.outer(np.where(mode_norm > 0, mode_norm, 1.0), ref_norm)
    return _finish(modes, refs, np.argmax(corr, axis=1), "greedy")


def assign_imfs(decomposition: Decomposition, references: Sequence) -> Assignment:
    """Group IMFs and residue onto references, maximizing the summed SDR.

    Exhaustive search is used while there are at most 16 IMFs and the
    number of labellings stays within 2**17; otherwise each mode goes to
    its most correlated reference.
    """
    if decomposition.n_imfs == 0:
        raise MetricError("decomposition has no IMFs to assign")
    refs = np.array([as_array(r) for r in references], dtype=float)
    if refs.ndim != 2 or refs.shape[0] == 0:
        raise MetricError("need at least one reference")
    if refs.shape[1] != decomposition.source_length:
        raise MetricError("references and decomposition differ in length")
    if np.any(np.einsum("ij,ij->i", refs, refs) == 0):
        raise MetricError("a reference has zero energy")
    modes = decomposition.modes()
    n_assign = refs.shape[0] ** modes.shape[0]
    if decomposition.n_imfs <= EXHAUSTIVE_MAX_IMFS and n_assign <= EXHAUSTIVE_MAX_ASSIGNMENTS:
        return assign_exhaustive(modes, refs)
    return assign_greedy(modes, refs)


@dataclass
class MetricsReport:
    sdr_db: float
    sar_db: float
    snr_db: float | None = None
    per_source: list[tuple[str, float, float]] = field(default_factory=list)

    CSV_HEADER = ("snr_db", "sdr_db", "sar_db")

    def csv_row(self) -> list[str]:
        return [fmt_num(self.snr_db), fmt_num(self.sdr_db), fmt_num(self.sar_db)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_source"] = [{"source": s, "sdr_db": a, "sar_db": b} for s, a, b in self.per_source]
        return d

    def to_json(self) -> str:
        # infinities are written as the string "inf" to stay valid JSON
        def clean(v):
            if isinstance(v, float) and math.isinf(v):
                return fmt_num(v)
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v
        return json.dumps(clean(self.to_dict()), sort_keys=True)
