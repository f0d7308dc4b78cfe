import json
import subprocess
import sys

import numpy as np
import pytest

from modesep.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from modesep.experiments import synthetic_speech
from modesep.signal_io import Signal, save_wav, synth_sine, write_columns_csv


@pytest.fixture
def tone_wav(tmp_path):
    t = np.arange(800) / 8000
    x = 0.5 * np.sin(2 * np.pi * 440 * t + 0.2) + 0.3 * np.sin(2 * np.pi * 90 * t)
    path = tmp_path / "tone.wav"
    save_wav(Signal(x), path)
    return path


def read_manifest(path):
    return json.loads(path.read_text())


def test_decompose_outputs(tmp_path, tone_wav):
    out = tmp_path / "out"
    code = main(["decompose", str(tone_wav), "--trials", "3", "--out-dir", str(out)])
    assert code == EXIT_OK
    m = read_manifest(out / "tone_ceemdan_manifest.json")
    assert m["reconstruction_error"] <= 1e-10
    assert m["run_config"]["trials"] == 3 and m["config"]["trials"] == 3
    # default epsilon for decompose
    assert m["config"]["epsilon0"] == 0.2
    header = (out / "tone_ceemdan_modes.csv").read_text().splitlines()[0]
    assert header.endswith("residue")


def test_decompose_ramp_csv_residue_only(tmp_path):
    write_columns_csv(tmp_path / "ramp.csv", {"x": np.linspace(0, 1, 100)})
    code = main(["decompose", str(tmp_path / "ramp.csv"), "--method", "emd",
                 "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    lines = (tmp_path / "ramp_emd_modes.csv").read_text().splitlines()
    assert lines[0] == "residue" and len(lines) == 101


def test_rerun_is_byte_identical(tmp_path, tone_wav):
    for d in ("a", "b"):
        assert main(["decompose", str(tone_wav), "--trials", "4", "--seed", "7",
                     "--out-dir", str(tmp_path / d)]) == EXIT_OK
    a = (tmp_path / "a" / "tone_ceemdan_modes.csv").read_bytes()
    b = (tmp_path / "b" / "tone_ceemdan_modes.csv").read_bytes()
    assert a == b


def test_workers_rerun_is_byte_identical(tmp_path, tone_wav):
    for d, w in (("a", "1"), ("b", "2")):
        assert main(["decompose", str(tone_wav), "--trials", "4", "--workers", w,
                     "--out-dir", str(tmp_path / d)]) == EXIT_OK
    assert ((tmp_path / "a" / "tone_ceemdan_modes.csv").read_bytes()
            == (tmp_path / "b" / "tone_ceemdan_modes.csv").read_bytes())


def test_config_precedence(tmp_path, tone_wav):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"trials": 2, "epsilon": 0.5, "seed": 3}))
    out = tmp_path / "o"
    assert main(["decompose", str(tone_wav), "--config", str(cfg), "--seed", "9",
                 "--out-dir", str(out)]) == EXIT_OK
    rc = read_manifest(out / "tone_ceemdan_manifest.json")["run_config"]
    # flag beats config, config beats default
    assert rc["seed"] == 9 and rc["trials"] == 2 and rc["epsilon"] == 0.5
    assert rc["sd_threshold"] == 0.2


def test_manifest_replays_run(tmp_path, tone_wav):
    first = tmp_path / "first"
    assert main(["decompose", str(tone_wav), "--trials", "3", "--seed", "5",
                 "--out-dir", str(first)]) == EXIT_OK
    manifest = first / "tone_ceemdan_manifest.json"
    second = tmp_path / "second"
    assert main(["decompose", "--config", str(manifest), "--out-dir", str(second)]) == EXIT_OK
    assert ((first / "tone_ceemdan_modes.csv").read_bytes()
            == (second / "tone_ceemdan_modes.csv").read_bytes())


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["decompose"],
    ["decompose", "x.wav", "--method", "bogus"],
    ["decompose", "x.wav", "--trials", "many"],
    ["sweep", "freq", "--grid", ""],
    ["sweep", "freq", "--grid", "5000"],
    ["sweep"],
    ["denoise", "--clean", "c.wav"],
    ["separate-speech", "a.wav"],
])
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_bad_trials_value(tmp_path, tone_wav):
    assert main(["decompose", str(tone_wav), "--trials", "0",
                 "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_unknown_config_key(tmp_path, tone_wav):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"trails": 3}))
    assert main(["decompose", str(tone_wav), "--config", str(cfg)]) == EXIT_USAGE


def test_io_errors(tmp_path):
    assert main(["decompose", str(tmp_path / "missing.wav")]) == EXIT_IO
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFF1234WAVEjunk")
    assert main(["decompose", str(bad), "--out-dir", str(tmp_path)]) == EXIT_IO
    txt = tmp_path / "x.txt"
    txt.write_text("1\n2\n")
    assert main(["decompose", str(txt)]) == EXIT_IO
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert main(["decompose", str(txt), "--config", str(cfg)]) == EXIT_IO


def test_sweep_command(tmp_path, capsys):
    out = tmp_path / "s"
    code = main(["sweep", "freq", "--grid", "300", "--trials", "2",
                 "--out-dir", str(out)])
    assert code == EXIT_OK
    lines = (out / "sweep_freq.csv").read_text().splitlines()
    assert lines[0] == "f1_hz,f2_hz,sdr_db,ratio,predicted_separable,error"
    assert lines[1].startswith("700,300,")
    assert "separable" in capsys.readouterr().out
    m = read_manifest(out / "sweep_freq_manifest.json")
    assert m["sweep_config"]["ensemble"]["epsilon0"] == 0.6


def test_denoise_identical_is_inf(tmp_path):
    clean = tmp_path / "clean.wav"
    save_wav(synthetic_speech(0.1, seed=1), clean, fmt="float32")
    out = tmp_path / "d"
    assert main(["denoise", "--clean", str(clean), "--noisy", str(clean),
                 "--out-dir", str(out)]) == EXIT_OK
    assert (out / "denoise.csv").read_text().splitlines()[1] == "inf,inf,inf"


def test_denoise_with_noise(tmp_path):
    clean, noise = tmp_path / "c.wav", tmp_path / "n.wav"
    save_wav(synthetic_speech(0.1, seed=1), clean)
    save_wav(Signal(0.3 * np.random.default_rng(0).standard_normal(800)), noise)
    out = tmp_path / "d"
    assert main(["denoise", "--clean", str(clean), "--noise", str(noise), "--snr", "0,10",
                 "--trials", "2", "--out-dir", str(out)]) == EXIT_OK
    rows = (out / "denoise.csv").read_text().splitlines()
    assert rows[0] == "snr_db,sdr_db,sar_db" and len(rows) == 3
    assert (out / "enhanced_snr10.wav").exists()
    assert (out / "spectrogram_enhanced_snr0.csv").exists()


def test_separate_speech(tmp_path):
    a, b = tmp_path / "a.wav", tmp_path / "b.wav"
    save_wav(synthetic_speech(0.1, seed=1, f0_hz=110), a)
    save_wav(synth_sine(300, 0.3, duration_s=0.1), b)
    out = tmp_path / "s"
    assert main(["separate-speech", str(a), str(b), "--trials", "2",
                 "--out-dir", str(out)]) == EXIT_OK
    assert (out / "separate_speech.csv").exists()
    assert "report" in read_manifest(out / "separate_speech_manifest.json")


def test_console_script(tmp_path, tone_wav):
    proc = subprocess.run([sys.executable, "-m", "modesep.cli", "decompose", str(tone_wav),
                           "--method", "emd", "--out-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "IMFs" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "modesep.cli"], capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
