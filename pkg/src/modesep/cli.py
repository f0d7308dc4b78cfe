"""Command-line front end.

Subcommands: ``decompose``, ``sweep``, ``denoise`` and ``separate-speech``.
Settings come from built-in defaults, then an optional ``--config`` JSON
file, then command-line flags (later sources win).  Every run writes a
manifest whose ``run_config`` entry can be passed back through ``--config``
to repeat the run.

Exit codes: 0 success, 1 usage error, 2 I/O or format error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .emd import InsufficientExtrema, SiftConfig
from .ensemble import EnsembleConfig, decompose, dump_manifest, run_manifest
from .experiments import (AMP_GRID, DENOISE_HEADER, DENOISE_SNRS_DB, FREQ_GRID_HZ, SweepConfig,
                          amplitude_sweep, denoise_eval, denoise_pair, denoise_table,
                          dump_json, frequency_sweep, speech_speech_demo, sweep_summary,
                          write_sweep_csv)
from .metrics import MetricError
from .signal_io import (DEFAULT_SAMPLE_RATE, Signal, SignalError, WavFormatError, fmt_num,
                        load_csv_signal, load_wav, save_wav, spectrogram, write_csv,
                        write_spectrogram_csv)

logger = logging.getLogger("modesep")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

METHODS = ("emd", "eemd", "ceemdan")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything needed to repeat a run; ``None`` means "use the default"."""

    command: str = ""
    input: str | None = None
    clean: str | None = None
    noise: str | None = None
    noisy: str | None = None
    speech_a: str | None = None
    speech_b: str | None = None
    kind: str | None = None
    grid: list | None = None
    snr: list | None = None
    method: str = "ceemdan"
    trials: int | None = None
    epsilon: float | None = None
    seed: int = 0
    sd_threshold: float = 0.2
    max_sift_iterations: int = 100
    max_imfs: int | None = None
    sample_rate: int = DEFAULT_SAMPLE_RATE
    workers: int = 1
    out_dir: str = "."

    def to_dict(self) -> dict:
        return asdict(self)

    def ensemble(self, trials: int, epsilon: float) -> EnsembleConfig:
        try:
            sift = SiftConfig(sd_threshold=self.sd_threshold,
                              max_sift_iterations=self.max_sift_iterations)
            return EnsembleConfig(
                trials=self.trials if self.trials is not None else trials,
                epsilon0=self.epsilon if self.epsilon is not None else epsilon,
                base_seed=self.seed, sift=sift, max_imfs=self.max_imfs,
                workers=self.workers)
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    items = [t for t in text.replace(";", ",").split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    try:
        return [float(t) for t in items]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--method", choices=METHODS, default=S,
                   help="decomposition method (default ceemdan)")
    p.add_argument("--trials", type=int, default=S, help="ensemble size I")
    p.add_argument("--epsilon", type=float, default=S,
                   help="relative noise level epsilon0")
    p.add_argument("--seed", type=int, default=S, help="base seed of the trial noise")
    p.add_argument("--sd-threshold", dest="sd_threshold", type=float, default=S)
    p.add_argument("--max-sift-iterations", dest="max_sift_iterations", type=int, default=S)
    p.add_argument("--max-imfs", dest="max_imfs", type=int, default=S)
    p.add_argument("--sample-rate", dest="sample_rate", type=int, default=S,
                   help="sample rate for CSV input and synthetic signals (Hz)")
    p.add_argument("--workers", type=int, default=S,
                   help="worker processes for ensemble trials (results do not depend on it)")
    p.add_argument("--out-dir", dest="out_dir", default=S)
    p.add_argument("--config", default=S, help="JSON run config or a previous manifest")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="modesep", description="EMD-family decomposition and separation.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("decompose", help="decompose a WAV or one-column CSV signal")
    p.add_argument("input", nargs="?", default=S)
    _add_common(p)

    p = sub.add_parser("sweep", help="two-tone frequency or amplitude sweep")
    p.add_argument("kind", nargs="?", choices=("freq", "amp"), default=S)
    p.add_argument("--grid", type=_float_list, default=S,
                   help="comma-separated second-tone frequencies (freq) or amplitudes (amp)")
    _add_common(p)

    p = sub.add_parser("denoise", help="separate speech from noise and score it")
    p.add_argument("--clean", default=S, help="clean speech WAV")
    p.add_argument("--noise", default=S, help="noise WAV, mixed at each --snr")
    p.add_argument("--noisy", default=S, help="ready-made noisy WAV (instead of --noise)")
    p.add_argument("--snr", type=_float_list, default=S, help="input SNRs in dB")
    _add_common(p)

    p = sub.add_parser("separate-speech", help="mix two talkers 1:1 and try to separate them")
    p.add_argument("speech_a", nargs="?", default=S)
    p.add_argument("speech_b", nargs="?", default=S)
    _add_common(p)
    return parser


def _read_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise WavFormatError(f"{path}: not valid JSON ({exc})") from exc
    if isinstance(data, dict) and isinstance(data.get("run_config"), dict):
        data = data["run_config"]
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file and explicit flags, in that order."""
    values: dict = {}
    flags = vars(args).copy()
    flags.pop("verbose", None)
    cfg_path = flags.pop("config", None)
    if cfg_path:
        values.update(_read_config(cfg_path))
    values.update(flags)
    if values.get("command") != args.command:
        values["command"] = args.command
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError(f"{cfg.command}: missing {', '.join(missing)}")


def _load_signal(path: str, sample_rate: int) -> Signal:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{path}: no such file")
    suffix = p.suffix.lower()
    if suffix == ".wav":
        return load_wav(p)
    if suffix == ".csv":
        return load_csv_signal(p, sample_rate)
    raise WavFormatError(f"{path}: expected a .wav or .csv file")


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _manifest(cfg: RunConfig, **items) -> dict:
    return {"run_config": cfg.to_dict(), "version": __version__, **items}


def cmd_decompose(cfg: RunConfig) -> int:
    _require(cfg, "input")
    if cfg.method not in METHODS:
        raise UsageError(f"unknown method {cfg.method!r}")
    sig = _load_signal(cfg.input, cfg.sample_rate)
    ens = cfg.ensemble(trials=100, epsilon=0.2)
    dec = decompose(sig, cfg.method, ens)
    out = _out_dir(cfg)
    stem = f"{Path(cfg.input).stem}_{cfg.method}"
    modes_path = out / f"{stem}_modes.csv"
    dec.to_csv(modes_path)
    manifest = run_manifest(cfg.method, ens, dec, sig, input=str(cfg.input),
                            outputs=[modes_path.name])
    manifest = _manifest(cfg, **manifest)
    dump_manifest(manifest, out / f"{stem}_manifest.json")
    print(f"{dec.n_imfs} IMFs, reconstruction error {fmt_num(manifest['reconstruction_error'])}"
          f" -> {modes_path}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    _require(cfg, "kind")
    if cfg.kind not in ("freq", "amp"):
        raise UsageError(f"unknown sweep kind {cfg.kind!r}")
    if cfg.grid is not None and len(cfg.grid) == 0:
        raise UsageError("sweep grid is empty")
    ens = cfg.ensemble(trials=50, epsilon=0.6)
    try:
        if cfg.kind == "freq":
            sc = SweepConfig(variable_freqs_hz=tuple(cfg.grid or FREQ_GRID_HZ),
                             sample_rate=cfg.sample_rate, ensemble=ens)
        else:
            sc = SweepConfig(variable_amps=tuple(cfg.grid or AMP_GRID),
                             sample_rate=cfg.sample_rate, ensemble=ens)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = frequency_sweep(sc) if cfg.kind == "freq" else amplitude_sweep(sc)
    out = _out_dir(cfg)
    csv_path = out / f"sweep_{cfg.kind}.csv"
    write_sweep_csv(csv_path, rows, cfg.kind)
    dump_json(sweep_summary(rows, cfg.kind), out / f"sweep_{cfg.kind}_summary.json")
    dump_json(_manifest(cfg, sweep_config=sc.to_dict(), outputs=[csv_path.name]),
              out / f"sweep_{cfg.kind}_manifest.json")
    for r in rows:
        x = r.f2_hz if cfg.kind == "freq" else r.a2
        verdict = "separable" if r.verdict.predicted_separable else "not separable"
        print(f"{fmt_num(x)}\tratio {fmt_num(r.ratio)}\tSDR {fmt_num(r.sdr_db)} dB\t{verdict}"
              + (f"\terror: {r.error}" if r.error else ""))
    return EXIT_OK if all(r.error is None for r in rows) else EXIT_NUMERIC


def _write_spectrogram(path: Path, samples, rate: int) -> None:
    sig = Signal(samples, rate)
    frame = 256 if len(sig) >= 256 else len(sig)
    if frame < 2:
        return
    hop = frame // 2
    write_spectrogram_csv(path, spectrogram(sig, frame, hop), rate, frame, hop)


def cmd_denoise(cfg: RunConfig) -> int:
    _require(cfg, "clean")
    if (cfg.noise is None) == (cfg.noisy is None):
        raise UsageError("denoise: give exactly one of --noise and --noisy")
    clean = _load_signal(cfg.clean, cfg.sample_rate)
    ens = cfg.ensemble(trials=100, epsilon=0.2)
    if cfg.noise is not None:
        noise = _load_signal(cfg.noise, cfg.sample_rate)
        snrs = cfg.snr if cfg.snr is not None else list(DENOISE_SNRS_DB)
        if not snrs:
            raise UsageError("SNR list is empty")
        rows = denoise_eval(clean, noise, snrs, ens)
    else:
        rows = [denoise_pair(clean, _load_signal(cfg.noisy, cfg.sample_rate), ens)]
    out = _out_dir(cfg)
    csv_path = out / "denoise.csv"
    write_csv(csv_path, DENOISE_HEADER, denoise_table(rows))
    outputs = [csv_path.name]
    _write_spectrogram(out / "spectrogram_clean.csv", clean.samples, clean.sample_rate)
    for r in rows:
        if r.enhanced is None:
            continue
        tag = f"snr{fmt_num(r.snr_db)}"
        wav = out / f"enhanced_{tag}.wav"
        save_wav(Signal(r.enhanced, clean.sample_rate), wav, fmt="float32")
        _write_spectrogram(out / f"spectrogram_noisy_{tag}.csv", r.noisy, clean.sample_rate)
        _write_spectrogram(out / f"spectrogram_enhanced_{tag}.csv", r.enhanced,
                           clean.sample_rate)
        outputs.append(wav.name)
    dump_json(_manifest(cfg, ensemble=ens.to_dict(), outputs=outputs,
                        rows=[{"snr_db": fmt_num(r.snr_db), "sdr_db": fmt_num(r.sdr_db),
                               "sar_db": fmt_num(r.sar_db), "groups": r.groups,
                               "error": r.error} for r in rows]),
              out / "denoise_manifest.json")
    for r in rows:
        print(f"SNR {fmt_num(r.snr_db)} dB\tSDR {fmt_num(r.sdr_db)} dB\tSAR {fmt_num(r.sar_db)} dB"
              + (f"\terror: {r.error}" if r.error else ""))
    return EXIT_OK if all(not math.isnan(r.sdr_db) for r in rows) else EXIT_NUMERIC


def cmd_separate_speech(cfg: RunConfig) -> int:
    _require(cfg, "speech_a", "speech_b")
    a = _load_signal(cfg.speech_a, cfg.sample_rate)
    b = _load_signal(cfg.speech_b, cfg.sample_rate)
    ens = cfg.ensemble(trials=100, epsilon=0.2)
    out = _out_dir(cfg)
    csv_path = out / "separate_speech.csv"
    report = speech_speech_demo(a, b, ens, csv_path=csv_path)
    dump_json(_manifest(cfg, ensemble=ens.to_dict(), outputs=[csv_path.name],
                        report=report.to_dict()),
              out / "separate_speech_manifest.json")
    flag = " (degenerate input)" if report.degenerate else ""
    print("per-source SDR: " + ", ".join(fmt_num(v) for v in report.per_source_sdr)
          + f" dB{flag}")
    return EXIT_OK


COMMANDS = {
    "decompose": cmd_decompose,
    "sweep": cmd_sweep,
    "denoise": cmd_denoise,
    "separate-speech": cmd_separate_speech,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        with np.errstate(all="raise", under="ignore"):
            return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"modesep: usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (OSError, WavFormatError) as exc:
        print(f"modesep: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MetricError, InsufficientExtrema, SignalError, FloatingPointError,
            ValueError) as exc:
        print(f"modesep: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
