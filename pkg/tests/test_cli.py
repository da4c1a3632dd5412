import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from facewarp import io
from facewarp.cli import main
from facewarp.config import defaults
from facewarp.mmfit import (CameraParams, initial_camera, make_synthetic_model,
                            ndc_to_pixels, project_landmark_vertices)

DATA = Path(__file__).parent / "data"


def run(*argv):
    return main([str(a) for a in argv])


def same_bytes(a, b):
    return Path(a).read_bytes() == Path(b).read_bytes()


# warp

def test_warp_identity_reproduces_input(tmp_path):
    out = tmp_path / "out.png"
    assert run("warp", DATA / "face_a.png", DATA / "mean.json", DATA / "mean.json", "-o", out) == 0
    np.testing.assert_array_equal(io.read_png(out), io.read_png(DATA / "face_a.png"))


@pytest.mark.parametrize("direction", ["to-mean", "from-mean"])
def test_warp_golden(tmp_path, direction):
    out = tmp_path / "out.png"
    code = run("warp", DATA / "face_a.png", DATA / "face_a.json", DATA / "mean.json",
               "--direction", direction, "-o", out)
    assert code == 0
    assert same_bytes(out, DATA / f"golden_warp_{direction.replace('-', '_')}.png")


def test_warp_missing_file(tmp_path, capsys):
    code = run("warp", tmp_path / "nope.png", DATA / "face_a.json", DATA / "mean.json",
               "-o", tmp_path / "o.png")
    assert code == 1
    assert "nope.png" in capsys.readouterr().err


def test_warp_dimension_mismatch(tmp_path):
    lm = tmp_path / "lm.json"
    io.write_landmarks(lm, io.read_landmarks(DATA / "face_a.json")[0], 40, 32)
    assert run("warp", DATA / "face_a.png", lm, DATA / "mean.json", "-o", tmp_path / "o.png") == 2


def test_bad_usage_is_exit_1(capsys):
    assert run("warp") == 1
    assert run("frobnicate") == 1


# flow

def test_flow_golden(tmp_path):
    out = tmp_path / "f.flw"
    assert run("flow", DATA / "face_a.json", DATA / "mean.json", "-o", out) == 0
    np.testing.assert_allclose(io.read_flow(out), io.read_flow(DATA / "golden_flow.flw"),
                               atol=1e-6)


def test_flow_identity_is_zero(tmp_path):
    out = tmp_path / "f.flw"
    assert run("flow", DATA / "mean.json", DATA / "mean.json", "-o", out) == 0
    assert np.all(io.read_flow(out) == 0)


def test_flow_point_count_mismatch(tmp_path):
    lm = tmp_path / "lm.json"
    io.write_landmarks(lm, [[1, 2], [3, 4], [5, 1]], 32, 32)
    assert run("flow", lm, DATA / "mean.json", "-o", tmp_path / "f.flw") == 2


# average

def test_average_golden(tmp_path):
    out, lm_out = tmp_path / "avg.png", tmp_path / "avg.json"
    code = run("average", "--images", DATA / "face_a.png", DATA / "face_b.png",
               "--landmarks", DATA / "face_a.json", DATA / "face_b.json",
               "--landmarks-out", lm_out, "-o", out)
    assert code == 0
    assert same_bytes(out, DATA / "golden_average.png")
    np.testing.assert_allclose(io.read_landmarks(lm_out)[0],
                               io.read_landmarks(DATA / "mean.json")[0], atol=1e-12)


def test_average_single_identity(tmp_path):
    out = tmp_path / "avg.png"
    code = run("average", "--images", DATA / "face_a.png", "--landmarks", DATA / "face_a.json",
               "-o", out)
    assert code == 0
    np.testing.assert_array_equal(io.read_png(out), io.read_png(DATA / "face_a.png"))


def test_average_count_mismatch(tmp_path):
    code = run("average", "--images", DATA / "face_a.png", DATA / "face_b.png",
               "--landmarks", DATA / "face_a.json", "-o", tmp_path / "x.png")
    assert code == 2


# composite

def test_composite_golden(tmp_path):
    out = tmp_path / "c.png"
    code = run("composite", DATA / "comp_fg.png", DATA / "comp_bg.png",
               "--mask", DATA / "comp_mask.png", "-o", out)
    assert code == 0
    assert same_bytes(out, DATA / "golden_composite.png")


def test_composite_full_mask_returns_foreground(tmp_path):
    mask = tmp_path / "ones.png"
    io.write_png(mask, np.ones((12, 12)))
    out = tmp_path / "c.png"
    assert run("composite", DATA / "comp_fg.png", DATA / "comp_bg.png", "--mask", mask,
               "-o", out) == 0
    np.testing.assert_array_equal(io.read_png(out), io.read_png(DATA / "comp_fg.png"))


def test_composite_size_mismatch(tmp_path):
    code = run("composite", DATA / "comp_fg.png", DATA / "face_a.png",
               "--mask", DATA / "comp_mask.png", "-o", tmp_path / "c.png")
    assert code == 2


def test_composite_needs_one_mask_source(tmp_path):
    assert run("composite", DATA / "comp_fg.png", DATA / "comp_bg.png",
               "-o", tmp_path / "c.png") == 1


# adjust

def test_adjust_golden(tmp_path):
    out = tmp_path / "a.png"
    assert run("adjust", DATA / "adjust_photo.png", DATA / "adjust_normalized.png",
               "-o", out) == 0
    assert same_bytes(out, DATA / "golden_adjust.png")


def test_adjust_self_is_identity(tmp_path):
    out = tmp_path / "a.png"
    assert run("adjust", DATA / "adjust_photo.png", DATA / "adjust_photo.png", "-o", out) == 0
    diff = np.abs(io.read_png(out) - io.read_png(DATA / "adjust_photo.png"))
    assert diff.max() <= 1 / 255 + 1e-12


def test_adjust_grayscale_is_exit_2(tmp_path):
    gray = tmp_path / "g.png"
    io.write_png(gray, np.full((16, 16), 0.4))
    assert run("adjust", gray, DATA / "adjust_normalized.png", "-o", tmp_path / "a.png") == 2


def test_adjust_degenerate_channel_warns(tmp_path, capsys):
    black = tmp_path / "k.png"
    io.write_png(black, np.zeros((32, 32, 3)))
    assert run("adjust", black, DATA / "adjust_normalized.png", "-o", tmp_path / "a.png") == 0
    assert "degenerate" in capsys.readouterr().err


# augment

@pytest.fixture
def dataset(tmp_path):
    d = tmp_path / "faces"
    d.mkdir()
    for stem in ("face_a", "face_b"):
        shutil.copy(DATA / f"{stem}.png", d)
        shutil.copy(DATA / f"{stem}.json", d)
    return d


def test_augment_deterministic(tmp_path, dataset):
    for name in ("one", "two"):
        assert run("augment", dataset, "--count", 3, "--seed", 42, "-o", tmp_path / name) == 0
    a = (tmp_path / "one" / "manifest.jsonl").read_bytes()
    assert a == (tmp_path / "two" / "manifest.jsonl").read_bytes()
    assert same_bytes(tmp_path / "one" / "morph00002.png", tmp_path / "two" / "morph00002.png")
    lines = [json.loads(x) for x in a.decode().splitlines()]
    assert len(lines) == 3
    for rec in lines:
        assert {rec["seed"], rec["neighbor"]} == {"face_a", "face_b"}
        assert 0 <= rec["landmark_weight"] < 1 and 0 <= rec["texture_weight"] < 1


def test_augment_count_zero(tmp_path, dataset):
    assert run("augment", dataset, "--count", 0, "--seed", 1, "-o", tmp_path / "o") == 0
    assert (tmp_path / "o" / "manifest.jsonl").read_text() == ""


def test_augment_requires_seed(tmp_path, dataset):
    assert run("augment", dataset, "--count", 1, "-o", tmp_path / "o") == 1


def test_augment_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    assert run("augment", tmp_path / "empty", "--count", 1, "--seed", 1,
               "-o", tmp_path / "o") == 1


# fit3d

@pytest.fixture(scope="module")
def fit_fixture(tmp_path_factory):
    d = tmp_path_factory.mktemp("fit")
    io.write_mmb(d / "model.mmb", make_synthetic_model())
    model = io.read_mmb(d / "model.mmb")
    zero = project_landmark_vertices(model, np.zeros(model.n_coefficients),
                                     CameraParams(translation=(0, 0, -14)))
    cam = initial_camera(model, zero)
    s_true = np.random.default_rng(3).normal(size=model.n_coefficients)
    px = ndc_to_pixels(project_landmark_vertices(model, s_true, cam), 224, 224)
    io.write_landmarks(d / "lm.json", px, 224, 224)
    return d, s_true


def test_fit3d_recovers_coefficients(tmp_path, fit_fixture):
    d, s_true = fit_fixture
    out = tmp_path / "fit.json"
    assert run("fit3d", d / "lm.json", d / "model.mmb", "--lambda", 1e-8, "-o", out) == 0
    res = json.loads(out.read_text())
    assert set(res) == {"s", "t", "sigma", "loss", "iterations", "converged"}
    # pixel landmarks pass through decimal JSON, so allow a little slack
    assert np.max(np.abs(np.array(res["s"]) - s_true)) < 1e-3


def test_fit3d_huge_lambda_pins_zero(tmp_path, fit_fixture):
    d, _ = fit_fixture
    out = tmp_path / "fit.json"
    assert run("fit3d", d / "lm.json", d / "model.mmb", "--lambda", 1e6, "-o", out) == 0
    assert np.linalg.norm(json.loads(out.read_text())["s"]) < 1e-3


def test_fit3d_bad_magic(tmp_path, fit_fixture):
    d, _ = fit_fixture
    bad = tmp_path / "bad.mmb"
    bad.write_bytes(b"XXXX" + (d / "model.mmb").read_bytes()[4:])
    assert run("fit3d", d / "lm.json", bad, "-o", tmp_path / "fit.json") == 1


def test_fit3d_landmark_count_mismatch(tmp_path, fit_fixture):
    d, _ = fit_fixture
    lm = tmp_path / "lm.json"
    io.write_landmarks(lm, [[1, 2], [3, 4], [5, 1]], 224, 224)
    assert run("fit3d", lm, d / "model.mmb", "-o", tmp_path / "fit.json") == 2


def test_fit3d_divergence_is_exit_3(tmp_path, fit_fixture, capsys):
    d, _ = fit_fixture
    # residuals this large overflow the loss to infinity
    lm = tmp_path / "lm.json"
    io.write_landmarks(lm, np.random.default_rng(0).uniform(-1e200, 1e200, size=(65, 2)),
                       224, 224)
    assert run("fit3d", lm, d / "model.mmb", "-o", tmp_path / "fit.json") == 3
    assert "non-finite" in capsys.readouterr().err


# defaults and config

def test_defaults_table_constants(tmp_path):
    out = tmp_path / "d.json"
    assert run("defaults", "-o", out) == 0
    table = json.loads(out.read_text())
    assert table == defaults()
    assert table["morph_lambda"] == 10.0 and table["morph_neighbors"] == 200
    assert table["shape_lambda"] == 0.001 and table["fov_degrees"] == 10.0


def test_config_supplies_defaults_and_flags_win(tmp_path, dataset):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[augment]\nseed = 42\ncount = 2\nno-composite = true\n")
    assert run("--config", cfg, "augment", dataset, "-o", tmp_path / "a") == 0
    assert len((tmp_path / "a" / "manifest.jsonl").read_text().splitlines()) == 2
    assert run("--config", cfg, "augment", dataset, "--count", 1, "-o", tmp_path / "b") == 0
    assert len((tmp_path / "b" / "manifest.jsonl").read_text().splitlines()) == 1
    first = (tmp_path / "a" / "manifest.jsonl").read_text().splitlines()[0]
    assert first == (tmp_path / "b" / "manifest.jsonl").read_text().splitlines()[0]


def test_config_unknown_key(tmp_path, dataset):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[augment]\nbogus = 1\n")
    assert run("--config", cfg, "augment", dataset, "--count", 1, "--seed", 1,
               "-o", tmp_path / "a") == 1
