import json

import numpy as np
import pytest

from _fixtures import disk_image, natural_image
from meaningful_boundaries import cli
from meaningful_boundaries.harness import TrialReport
from meaningful_boundaries.raster import save_pgm
from meaningful_boundaries.saliency import Detector


@pytest.fixture
def disk_pgm(tmp_path):
    p = tmp_path / "disk.pgm"
    save_pgm(p, disk_image())
    return p


def test_detect_writes_outputs(disk_pgm, tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["detect", "--image", str(disk_pgm), "--detector", "tma-mcb", "--eps", "1",
                     "--K", "50%", "--out", str(out)])
    assert code == 0
    records = json.loads((out / "detections.json").read_text())
    maximal = [r for r in records if r.get("maximal")]
    assert maximal and all(r["meaningful"] for r in maximal)
    svg = (out / "overlay.svg").read_text()
    assert svg.count("<path ") == len(maximal)
    assert "data:image/png;base64," in svg
    assert "meaningful:" in capsys.readouterr().out


def test_detect_is_byte_identical(disk_pgm, tmp_path):
    for d in ("a", "b"):
        assert cli.main(["detect", "--image", str(disk_pgm), "--out", str(tmp_path / d)]) == 0
    for name in ("detections.json", "overlay.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_no_maximal_draws_all_meaningful(disk_pgm, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["detect", "--image", str(disk_pgm), "--out", str(out), "--no-maximal",
                     "--detector", "dmm-mcb"]) == 0
    records = json.loads((out / "detections.json").read_text())
    n = sum(r["meaningful"] for r in records)
    assert (out / "overlay.svg").read_text().count("<path ") == n > 1


def test_detect_with_regularity(tmp_path, small_regularity_model):
    from meaningful_boundaries.stats import save_regularity_model, cache_path
    save_regularity_model(small_regularity_model, cache_path(5, 128, 50, 42, 1000, tmp_path))
    img = tmp_path / "nat.pgm"
    save_pgm(img, natural_image(48))
    code = cli.main(["detect", "--image", str(img), "--detector", "tma-mcrb", "--Kc", "50%",
                     "--Ks", "50%", "--s", "5", "--noise-size", "128", "--cache-dir",
                     str(tmp_path), "--out", str(tmp_path / "o")])
    assert code == 0
    assert json.loads((tmp_path / "o" / "detections.json").read_text())


def test_constant_image_gives_empty_outputs(tmp_path):
    img = tmp_path / "c.pgm"
    save_pgm(img, np.full((8, 8), 77))
    assert cli.main(["detect", "--image", str(img), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "detections.json").read_text()) == []
    assert "<path" not in (tmp_path / "overlay.svg").read_text()


@pytest.mark.parametrize("argv", [
    ["detect", "--image", "x.pgm", "--detector", "lsd"],
    ["detect", "--image", "x.pgm", "--eps", "-1"],
    ["detect", "--image", "x.pgm", "--K", "0"],
    ["prepare-stats", "--s", "0"],
    ["validate", "--trials", "5"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_1(argv, tmp_path, capsys):
    assert cli.main(argv) == 1


def test_pipeline_errors_exit_2(tmp_path):
    assert cli.main(["detect", "--image", str(tmp_path / "missing.pgm")]) == 2
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    assert cli.main(["detect", "--image", str(bad)]) == 2


def test_prepare_stats_cache_hit(tmp_path, capsys):
    args = ["prepare-stats", "--s", "5", "--noise-size", "64", "--sigma", "50", "--seed", "42",
            "--cache-dir", str(tmp_path)]
    assert cli.main(args) == 0
    first = capsys.readouterr().out
    assert first.startswith("wrote ")
    path = next(tmp_path.iterdir())
    content = path.read_bytes()
    assert cli.main(args) == 0
    assert capsys.readouterr().out.startswith("cache hit: ")
    assert path.read_bytes() == content


def test_prepare_stats_insufficient_samples(tmp_path, monkeypatch):
    from meaningful_boundaries import stats
    monkeypatch.setattr(stats, "MIN_REGULARITY_SAMPLES", 10**12)
    assert cli.main(["prepare-stats", "--noise-size", "64", "--cache-dir", str(tmp_path)]) == 2


def test_validate_eps_zero(tmp_path, small_regularity_model, capsys):
    from meaningful_boundaries.stats import save_regularity_model, cache_path
    save_regularity_model(small_regularity_model, cache_path(5, 128, 50, 42, 1000, tmp_path))
    report = tmp_path / "r.json"
    code = cli.main(["validate", "--eps", "0", "--trials", "10", "--size", "64",
                     "--noise-size", "128", "--cache-dir", str(tmp_path), "--json", str(report)])
    assert code == 0
    data = json.loads(report.read_text())
    assert len(data) == 6 and all(sum(r["counts"]) == 0 for r in data)


def test_validate_bound_violation_exits_3(monkeypatch, capsys):
    fake = [TrialReport(Detector.TMA_MCB, 1.0, tuple(range(10)), (5,) * 10, (1,) * 10, 128, 50.0)]
    monkeypatch.setattr(cli, "run_h0_trials", lambda *a, **k: fake)
    assert cli.main(["validate", "--detector", "tma-mcb", "--trials", "10"]) == 3
    assert "tma-mcb" in capsys.readouterr().err


def test_validate_uniform_tail(capsys):
    assert cli.main(["validate", "--detector", "tma-mcb", "--trials", "2", "--quick",
                     "--size", "64", "--uniform-tail"]) == 0
    assert "uniform tail t=0.5" in capsys.readouterr().out


def test_bucket_colors():
    assert cli.bucket_color(0.5) == "#9e9e9e"
    assert cli.bucket_color(-1) == "#2c7bb6"
    assert cli.bucket_color(-10) == "#1a9641"
    assert cli.bucket_color(-30) == "#fdae61"
    assert cli.bucket_color(-100) == "#d7191c"
    assert cli.bucket_color(float("-inf")) == "#d7191c"


def test_verbose_flag_anywhere(disk_pgm, tmp_path):
    assert cli.main(["-v", "detect", "--image", str(disk_pgm), "--out", str(tmp_path)]) == 0
    assert cli.main(["detect", "-v", "--image", str(disk_pgm), "--out", str(tmp_path)]) == 0
