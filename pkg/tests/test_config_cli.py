import csv

import numpy as np
import pytest

from oral_nexf import config
from oral_nexf.cli import main
from oral_nexf.config import ConfigError
from oral_nexf.field import load_checkpoint
from oral_nexf.metrics import MetricReport
from oral_nexf.rendering import load_image
from oral_nexf.volume import load_volume

TINY = """\
[volume]
dims = 16x16x8
[geometry]
segments = 12
fan = 3
[model]
layers = 4
width = 8
freqs = 2
[train]
iterations = 6
lr_switch = 3
batch_rays = 4
chunk_rays = 4
rows_per_ray = 2
log_every = 2
checkpoint_every = 4
"""


@pytest.fixture
def tiny(tmp_path, monkeypatch):
    monkeypatch.setenv("NEXF_OUT_DIR", str(tmp_path))
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return str(path)


def test_profiles_load():
    paper = config.load("paper")
    assert paper.dims == (288, 256, 160)
    assert paper.get("geometry.segments") == 576
    assert paper.get("train.iterations") == 100_000
    desk = config.load()
    assert desk.dims == (64, 64, 32)
    assert desk.get("geometry.segments") == 144


def test_unlisted_keys_keep_defaults():
    s = config.parse("[train]\niterations = 10\nlr_switch = 5\n")
    assert s.get("model.width") == 256
    assert s.get("render.S") == 1200.0


@pytest.mark.parametrize("text,line", [
    ("[train]\niterations = 10\nbogus = 1\n", 3),
    ("[nope]\n", 1),
    ("[model]\n\nwidth = wide\n", 3),
    ("iterations = 3\n", 1),
    ("[model]\nwidth\n", 2),
])
def test_malformed_config_reports_line(text, line):
    with pytest.raises(ConfigError) as info:
        config.parse(text)
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_settings_text_round_trip():
    s = config.load("desk")
    assert config.parse(s.to_text()).values == s.values


def test_phantom_default_dims(tiny, tmp_path, capsys):
    assert main(["phantom"]) == 0
    vol = load_volume(tmp_path / "phantom.vol")
    assert vol.dims == (64, 64, 32)
    assert (tmp_path / "phantom.vol.manifest.cfg").exists()


def test_phantom_paper_dims(tmp_path):
    out = tmp_path / "big.vol"
    assert main(["phantom", "--dims", "288x256x160", "--out", str(out)]) == 0
    assert load_volume(out).dims == (288, 256, 160)


def test_bad_config_exits_2_with_line(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[train]\niterations = 5\nwhat = 1\n")
    assert main(["phantom", "--config", str(bad)]) == 2
    assert "bad.cfg:3:" in capsys.readouterr().err


def test_missing_input_exits_1(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "absent.vol")]) == 1


def test_simulate_image_shapes(tmp_path):
    vol = tmp_path / "p.vol"
    main(["phantom", "--out", str(vol)])
    main(["simulate", str(vol), "--out", str(tmp_path / "desk.img")])
    img = load_image(tmp_path / "desk.img")
    # desk profile: 144 segments x 5 fan angles, one row per slice
    assert (img.width, img.height) == (720, 32)
    assert (tmp_path / "desk.pgm").exists()

    tall = tmp_path / "tall.vol"
    main(["phantom", "--dims", "64x64x160", "--out", str(tall)])
    main(["simulate", str(tall), "--config", "paper", "--out", str(tmp_path / "paper.img")])
    img = load_image(tmp_path / "paper.img")
    assert (img.width, img.height) == (576, 160)


def test_train_reconstruct_evaluate(tiny, tmp_path, capsys):
    assert main(["phantom", "--config", tiny]) == 0
    vol = tmp_path / "phantom.vol"
    assert main(["train", str(vol), "--config", tiny]) == 0
    out = tmp_path / "train"
    model = load_checkpoint(out / "model.ckpt")
    assert model.config.heads == 8
    assert (out / "checkpoint_0000004.ckpt").exists()
    with open(out / "loss.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6 and rows[3]["lr"] == "0.0001"
    manifest = (out / "manifest.cfg").read_text()
    assert "sha256:" in manifest and "[train]" in manifest

    assert main(["reconstruct", str(out / "model.ckpt"), "--config", tiny]) == 0
    assert load_volume(tmp_path / "recon.vol").dims == (16, 16, 8)

    capsys.readouterr()
    assert main(["evaluate", str(vol), str(vol), "--out", str(tmp_path / "r.txt")]) == 0
    report = MetricReport.from_text((tmp_path / "r.txt").read_text())
    assert report.dice == 1.0 and report.ssim == 1.0
    assert "psnr: inf" in capsys.readouterr().out


def test_manifest_reproduces_run(tiny, tmp_path):
    vol = tmp_path / "phantom.vol"
    main(["phantom", "--config", tiny])
    main(["train", str(vol), "--config", tiny, "--seed", "5", "--out-dir", str(tmp_path / "a")])
    manifest = tmp_path / "a" / "manifest.cfg"
    main(["train", str(vol), "--config", str(manifest), "--out-dir", str(tmp_path / "b")])
    a = (tmp_path / "a" / "model.ckpt").read_bytes()
    b = (tmp_path / "b" / "model.ckpt").read_bytes()
    assert a == b


def _rows(tmp_path, name):
    with open(tmp_path / name / "ablation.csv") as fh:
        return list(csv.DictReader(fh))


def test_ablate_variants(tiny, tmp_path):
    assert main(["ablate", "--config", tiny, "--which", "", "--out-dir", str(tmp_path / "x")]) == 0
    assert [r["variant"] for r in _rows(tmp_path, "x")] == ["full"]
    assert main(["ablate", "--config", tiny, "--which", "M,D,S", "--out-dir", str(tmp_path / "y")]) == 0
    rows = _rows(tmp_path, "y")
    assert [r["variant"] for r in rows] == ["full", "M", "D", "S"]
    assert [r["M"] + r["D"] + r["S"] for r in rows] == ["vvv", "xvv", "vxv", "vvx"]
    assert all(np.isfinite(float(r["overall"])) for r in rows)


def test_ablate_unknown_letter_exits_2(tiny, capsys):
    assert main(["ablate", "--config", tiny, "--which", "MQ"]) == 2
    assert "Q" in capsys.readouterr().err
