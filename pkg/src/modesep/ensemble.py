"""Noise-assisted decompositions (EEMD and CEEMDAN) with keyed, reproducible noise."""

from __future__ import annotations

import json
import math
import threading
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .emd import Decomposition, SiftConfig, emd, find_local_extrema, first_imf
from .signal_io import Signal, as_array


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble parameters shared by :func:`eemd` and :func:`ceemdan`.

    ``epsilon0`` is relative: trial noise is scaled by ``epsilon0`` times the
    standard deviation of the signal (EEMD) or of the current residue
    (CEEMDAN).  ``max_imfs=None`` means ``ceil(log2(N)) + 2``.
    """

    trials: int = 100
    epsilon0: float = 0.2
    base_seed: int = 0
    sift: SiftConfig = field(default_factory=SiftConfig)
    max_imfs: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")
        if self.base_seed < 0:
            raise ValueError("base_seed must be non-negative")
        if self.max_imfs is not None and self.max_imfs < 1:
            raise ValueError("max_imfs must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def imf_cap(self, n_samples: int) -> int:
        if self.max_imfs is not None:
            return self.max_imfs
        return math.ceil(math.log2(max(n_samples, 2))) + 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleConfig":
        d = dict(d)
        d["sift"] = SiftConfig(**d.get("sift", {}))
        return cls(**d)


def gaussian_noise(length: int, base_seed: int, trial_index: int) -> np.ndarray:
    """Standard normal samples keyed by ``(base_seed, trial_index)``.

    Each trial gets its own Philox counter-based stream, so the noise of a
    trial does not depend on which other trials were drawn or in what order.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    key = np.random.SeedSequence([base_seed, trial_index])
    return np.random.Generator(np.random.Philox(key)).standard_normal(length)


# noise decompositions are reused by every stage of every CEEMDAN run with the
# same length, seed and sift settings; keep them up to a memory budget
NOISE_CACHE_BYTES = 512 * 2 ** 20
_noise_cache: OrderedDict = OrderedDict()
_noise_lock = threading.Lock()


def _noise_emd(n: int, base_seed: int, trial: int, sift: SiftConfig, cap: int) -> np.ndarray:
    modes = emd(gaussian_noise(n, base_seed, trial), sift, max_imfs=cap).imfs
    modes.setflags(write=False)
    return modes


def _cache_put(key, modes) -> None:
    with _noise_lock:
        _noise_cache[key] = modes
        _noise_cache.move_to_end(key)
        total = sum(v.nbytes for v in _noise_cache.values())
        while total > NOISE_CACHE_BYTES and len(_noise_cache) > 1:
            total -= _noise_cache.popitem(last=False)[1].nbytes


def _noise_decomposition(n: int, base_seed: int, trial: int, sift: SiftConfig,
                         cap: int) -> np.ndarray:
    """EMD modes of noise realization ``trial``, memoized (read-only array)."""
    key = (n, base_seed, trial, sift, cap)
    with _noise_lock:
        modes = _noise_cache.get(key)
    if modes is None:
        modes = _noise_emd(*key)
        _cache_put(key, modes)
    return modes


def noise_mode(k: int, noise, sift: SiftConfig | None = None) -> np.ndarray:
    """k-th IMF (1-based) of ``noise``; zeros if EMD yields fewer than k modes."""
    if k < 1:
        raise ValueError("mode index k must be >= 1")
    w = as_array(noise)
    imfs = emd(w, sift or SiftConfig(), max_imfs=k).imfs
    if imfs.shape[0] < k:
        return np.zeros_like(w)
    return imfs[k - 1].copy()


def _noise_modes(n: int, config: EnsembleConfig, trial: int) -> np.ndarray:
    return _noise_decomposition(n, config.base_seed, trial, config.sift, config.imf_cap(n))


def _warm_noise_modes(n: int, config: EnsembleConfig, runner: _TrialRunner) -> None:
    # decompose the uncached noise realizations on the pool, then fill the cache
    if runner.workers <= 1:
        return
    cap = config.imf_cap(n)
    keys = [(n, config.base_seed, i, config.sift, cap) for i in range(config.trials)]
    with _noise_lock:
        missing = [k for k in keys if k not in _noise_cache]
    if len(missing) < 2:
        return
    for key, modes in zip(missing, runner.map(_noise_emd, missing)):
        _cache_put(key, modes)


class _TrialRunner:
    """Maps a function over trials, serially or on a process pool.

    One pool serves a whole decomposition.  Results always come back in
    trial order, so accumulation is deterministic for any worker count.
    """

    def __init__(self, workers: int):
        self.workers = workers
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def map(self, fn, args: list) -> list:
        if self._pool is None or len(args) < 2:
            return [fn(*a) for a in args]
        chunk = max(1, len(args) // (4 * self.workers))
        return list(self._pool.map(fn, *zip(*args), chunksize=chunk))


def _eemd_trial(x: np.ndarray, amp: float, config: EnsembleConfig, trial: int) -> np.ndarray:
    w = gaussian_noise(x.size, config.base_seed, trial)
    return emd(x + amp * w, config.sift, max_imfs=config.imf_cap(x.size)).imfs


def _average_first_imf(targets: list[np.ndarray], sift: SiftConfig,
                       runner: _TrialRunner) -> np.ndarray:
    results = runner.map(first_imf, [(t, sift) for t in targets])
    acc = np.zeros_like(targets[0])
    for r in results:
        acc += r
    return acc / len(targets)


def eemd(signal, config: EnsembleConfig | None = None) -> Decomposition:
    """Ensemble EMD: average the k-th IMFs of noise-perturbed decompositions.

    Trials that produce fewer than k modes contribute zeros to mode k, so
    every mode is divided by the full trial count.  The stored residue is
    ``signal - sum(modes)``; the raw defect of the averaging itself is kept
    in ``meta["raw_reconstruction_defect"]``, computed against the averaged
    per-trial residues.
    """
    config = config or EnsembleConfig()
    x = as_array(signal).astype(float)
    n = x.size
    amp = config.epsilon0 * float(np.std(x))
    with _TrialRunner(config.workers) as runner:
        results = runner.map(_eemd_trial, [(x, amp, config, i) for i in range(config.trials)])
    n_modes = max(r.shape[0] for r in results)
    imf_sum = np.zeros((n_modes, n))
    res_sum = np.zeros(n)
    for i, r in enumerate(results):
        imf_sum[: r.shape[0]] += r
        w = gaussian_noise(n, config.base_seed, i)
        res_sum += (x + amp * w) - r.sum(axis=0)
    imfs = imf_sum / config.trials
    raw_residue = res_sum / config.trials
    residue = x - imfs.sum(axis=0)
    rate = signal.sample_rate if isinstance(signal, Signal) else None
    defect = float(np.max(np.abs(x - imfs.sum(axis=0) - raw_residue)))
    return Decomposition(imfs, residue, rate, meta={
        "method": "eemd",
        "raw_residue": raw_residue,
        "raw_reconstruction_defect": defect,
    })


def ceemdan(signal, config: EnsembleConfig | None = None) -> Decomposition:
    """Complete ensemble EMD with adaptive noise.

    Mode 1 is the trial average of the first IMF of
    ``x + eps_0 * w_i``.  Each later mode is the trial average of the first
    IMF of ``r_k + eps_k * E_k(w_i)``, where ``E_k`` is the k-th EMD mode of
    the i-th noise realization and ``eps_k = epsilon0 * std(r_k)``.  The loop
    stops when ``r_k`` can no longer be sifted or the mode cap is reached;
    ``r_k`` is updated by subtraction, so the decomposition is complete.
    """
    config = config or EnsembleConfig()
    x = as_array(signal).astype(float)
    n = x.size
    cap = config.imf_cap(n)
    trials = range(config.trials)
    imfs = []
    residue = x.copy()
    with _TrialRunner(config.workers) as runner:
        while len(imfs) < cap:
            ext = find_local_extrema(residue)
            if ext.n_max < 2 or ext.n_min < 2:
                break
            k = len(imfs)
            eps = config.epsilon0 * float(np.std(residue))
            if k == 0:
                targets = [residue + eps * gaussian_noise(n, config.base_seed, i) for i in trials]
            else:
                if k == 1:
                    _warm_noise_modes(n, config, runner)
                targets = []
                for i in trials:
                    modes = _noise_modes(n, config, i)
                    nk = modes[k - 1] if modes.shape[0] >= k else 0.0
                    targets.append(residue + eps * nk)
            mode = _average_first_imf(targets, config.sift, runner)
            imfs.append(mode)
            residue = residue - mode
    rate = signal.sample_rate if isinstance(signal, Signal) else None
    imfs = np.array(imfs) if imfs else np.empty((0, n))
    return Decomposition(imfs, residue, rate, meta={"method": "ceemdan"})


def decompose(signal, method: str, config: EnsembleConfig | None = None) -> Decomposition:
    """Dispatch to ``emd``, ``eemd`` or ``ceemdan`` by name."""
    config = config or EnsembleConfig()
    if method == "emd":
        return emd(signal, config.sift, max_imfs=config.max_imfs)
    if method == "eemd":
        return eemd(signal, config)
    if method == "ceemdan":
        return ceemdan(signal, config)
    raise ValueError(f"unknown method {method!r}; expected emd, eemd or ceemdan")


def run_manifest(method: str, config: EnsembleConfig, decomposition: Decomposition,
                 signal, **extra) -> dict:
    """JSON-ready record of a decomposition run."""
    manifest = {
        "method": method,
        "config": config.to_dict(),
        "seed": config.base_seed,
        "n_samples": decomposition.source_length,
        "sample_rate": decomposition.sample_rate,
        "n_imfs": decomposition.n_imfs,
        "reconstruction_error": decomposition.reconstruction_error(signal),
    }
    if "raw_reconstruction_defect" in decomposition.meta:
        manifest["raw_reconstruction_defect"] = decomposition.meta["raw_reconstruction_defect"]
    manifest.update(extra)
    return manifest


def dump_manifest(manifest: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
