import csv
import struct

import numpy as np
import pytest

from cwpnet.checkpoint import MAGIC, VERSION, CheckpointError, decode_checkpoint, encode_checkpoint
from cwpnet.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, stretch
from cwpnet.clustering import kmeans_fit
from cwpnet.config import parse_config
from cwpnet.degrade import synthetic_scene
from cwpnet.imageio import PpmError, decode_ppm, encode_ppm, read_ppm, write_ppm
from cwpnet.model import CwpNet, ModelConfig, degradation_rep
from cwpnet.nn import ConfigError

TINY_KEYS = "scales=2\nbase_channels=4\nnum_prompts=2\nnum_clusters=2\n"


def rng(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# PPM


def test_ppm_round_trip_bitwise(tmp_path):
    img = rng(1).integers(0, 256, size=(3, 7, 9)) / 255.0
    write_ppm(img, tmp_path / "a.ppm")
    back = read_ppm(tmp_path / "a.ppm")
    assert back.shape == (3, 7, 9)
    np.testing.assert_array_equal(np.rint(back * 255), np.rint(img * 255))
    assert encode_ppm(back) == (tmp_path / "a.ppm").read_bytes()


def test_pgm_round_trip():
    img = rng(2).integers(0, 256, size=(4, 5)).astype(np.uint8)
    assert encode_ppm(decode_ppm(encode_ppm(img / 255.0))) == encode_ppm(img / 255.0)
    assert encode_ppm(img / 255.0).startswith(b"P5\n5 4\n255\n")


def test_quantization_rounds():
    buf = encode_ppm(np.array([[0.0, 0.5 / 255, 1.6 / 255, 2.0]]))
    assert buf[-4:] == bytes([0, 0, 2, 255])


def test_hand_built_fixture_with_comments():
    buf = b"P6\n# made by hand\n2 # width\n1\n# maxval next\n255\n" + bytes([255, 0, 0, 0, 128, 255])
    img = decode_ppm(buf)
    assert img.shape == (3, 1, 2)
    np.testing.assert_array_equal(np.rint(img[:, 0, 0] * 255), [255, 0, 0])
    np.testing.assert_array_equal(np.rint(img[:, 0, 1] * 255), [0, 128, 255])


def test_whitespace_variants_fixture():
    img = decode_ppm(b"P5\t3\r\n1  255 " + bytes([1, 2, 3]))
    np.testing.assert_array_equal(np.rint(img * 255), [[1, 2, 3]])


@pytest.mark.parametrize("buf,msg", [
    (b"P3\n1 1\n255\n\x00\x00\x00", "magic"),
    (b"P6\n1 1\n65535\n" + bytes(6), "maxval"),
    (b"P6\n2 2\n255\n" + bytes(5), "truncated payload: expected 12 bytes from byte 11, got 5"),
    (b"P6\n2 2", "truncated header"),
    (b"P6\nx 2\n255\n", "non-numeric"),
])
def test_ppm_errors(buf, msg):
    with pytest.raises(PpmError, match=msg):
        decode_ppm(buf)


# ---------------------------------------------------------------------------
# Config


def test_config_parses_and_converts():
    cfg = parse_config("manifest=m.txt  # data\nepochs=3\nwarmup_epochs=2\nlr0=1e-3\naugment=yes\n"
                       + TINY_KEYS + "seed=4\ncrop=32\n", "/data")
    assert str(cfg.manifest) == "/data/m.txt"
    assert cfg.train.lr0 == 1e-3 and cfg.train.augment is True and cfg.model.scales == 2
    assert cfg.seed == cfg.model.seed == cfg.train.seed == 4
    assert "crop=32\n" in cfg.to_text()


@pytest.mark.parametrize("text,key", [
    ("epochs=3\nwarmup_epochs=2\n", "manifest"),
    ("manifest=m\nepochs=3\nwarmup_epochs=2\ncolour=red\n", "colour"),
    ("manifest=m\nepochs=3\nwarmup_epochs=2\nepochs=4\n", "epochs"),
    ("manifest=m\nepochs=three\nwarmup_epochs=2\n", "epochs"),
    ("manifest=m\nepochs=3\nwarmup_epochs=5\n", "warmup_epochs"),
    ("manifest=m\nepochs=3\nwarmup_epochs=2\ncrop=20\n", "crop"),
])
def test_config_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


# ---------------------------------------------------------------------------
# Checkpoint


def fitted_tiny_net():
    net = CwpNet(ModelConfig(scales=2, base_channels=4, num_prompts=2, num_clusters=2, seed=3))
    net.cluster = kmeans_fit(degradation_rep(rng(3).uniform(size=(4, 3, 32, 32)), net), 2, seed=0)
    for w in net.weight_matrices():
        w.w.data[...] = rng(4).uniform(size=w.w.dims)
    return net


def test_checkpoint_round_trip_bitwise():
    net = fitted_tiny_net()
    blob = encode_checkpoint(net, "seed=3\n")
    back, echo = decode_checkpoint(blob)
    assert "seed=3" in echo
    for (n1, p1), (n2, p2) in zip(net.named_parameters(), back.named_parameters()):
        assert n1 == n2 and p1.data.tobytes() == p2.data.tobytes()
    assert net.cluster.centroids.tobytes() == back.cluster.centroids.tobytes()
    assert blob[:4] == MAGIC and struct.unpack("<I", blob[4:8])[0] == VERSION


def test_checkpoint_reencode_is_identical():
    blob = encode_checkpoint(fitted_tiny_net(), "x=1\n")
    net, _ = decode_checkpoint(blob)
    assert encode_checkpoint(net, "x=1\n") == blob


def test_checkpoint_unfitted_clusters_round_trip():
    net, _ = decode_checkpoint(encode_checkpoint(CwpNet(ModelConfig(scales=2, base_channels=4))))
    assert not net.cluster.fitted


def test_checkpoint_rejects_corruption():
    blob = encode_checkpoint(fitted_tiny_net())
    with pytest.raises(CheckpointError, match="version"):
        decode_checkpoint(blob[:4] + struct.pack("<I", VERSION + 1) + blob[8:])
    with pytest.raises(CheckpointError, match="magic"):
        decode_checkpoint(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError, match="byte"):
        decode_checkpoint(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError, match="trailing"):
        decode_checkpoint(blob + b"\x00")


# ---------------------------------------------------------------------------
# CLI


def write_manifest(path, lines, regime="imbalanced"):
    path.write_text(f"# regime: {regime}\n" + "".join(line + "\n" for line in lines))
    return path


def write_tiny_config(tmp_path, manifest):
    p = tmp_path / "run.cfg"
    p.write_text(f"manifest={manifest.name}\nepochs=2\nwarmup_epochs=1\nbatch_size=2\ncrop=32\n" + TINY_KEYS)
    return p


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    manifest = write_manifest(root / "m.txt", [f"synthetic:{i}:32 {k} {i}" for i, k in
                                               enumerate(["haze", "lowlight", "haze", "lowlight"])])
    cfg = write_tiny_config(root, manifest)
    assert main(["train", "--config", str(cfg), "--out", str(root / "a")]) == EXIT_OK
    return root, manifest, cfg


def test_train_outputs(trained):
    root, _, _ = trained
    out = root / "a"
    assert (out / "checkpoint.cwpn").read_bytes()[:4] == MAGIC
    hist = list(csv.DictReader(open(out / "history.csv")))
    assert len(hist) == 2
    for level in range(2):
        rows = list(csv.reader(open(out / f"prompt_distribution_level{level}.csv")))
        assert len(rows) > 1


def test_train_same_seed_identical_bytes(trained):
    root, _, cfg = trained
    assert main(["train", "--config", str(cfg), "--out", str(root / "b")]) == EXIT_OK
    assert (root / "a" / "checkpoint.cwpn").read_bytes() == (root / "b" / "checkpoint.cwpn").read_bytes()
    assert main(["train", "--config", str(cfg), "--out", str(root / "c"), "--seed", "9"]) == EXIT_OK
    assert (root / "a" / "checkpoint.cwpn").read_bytes() != (root / "c" / "checkpoint.cwpn").read_bytes()


def test_train_missing_key(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("manifest=m.txt\nepochs=3\n")
    assert main(["train", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert "warmup_epochs" in capsys.readouterr().err


def test_eval_report(trained, tmp_path, capsys):
    root, manifest, _ = trained
    report = tmp_path / "r.csv"
    assert main(["eval", "--ckpt", str(root / "a" / "checkpoint.cwpn"), "--manifest", str(manifest),
                 "--report", str(report)]) == EXIT_OK
    rows = list(csv.reader(open(report)))
    assert rows[0] == ["index", "source", "kind", "psnr_degraded", "ssim_degraded", "psnr_restored",
                       "ssim_restored"]
    assert len(rows) == 6 and rows[-1][0] == "mean"
    assert "restored: PSNR" in capsys.readouterr().out


def test_eval_identity_manifest_reports_inf(trained, tmp_path):
    root, _, _ = trained
    manifest = write_manifest(tmp_path / "id.txt", ["synthetic:1:32 haze t=1 0", "synthetic:2:32 haze t=1 0"],
                              regime="balanced")
    report = tmp_path / "r.csv"
    assert main(["eval", "--ckpt", str(root / "a" / "checkpoint.cwpn"), "--manifest", str(manifest),
                 "--report", str(report)]) == EXIT_OK
    assert [row["psnr_degraded"] for row in csv.DictReader(open(report))] == ["inf"] * 3


def test_eval_errors(trained, tmp_path):
    root, manifest, _ = trained
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    ckpt = root / "a" / "checkpoint.cwpn"
    args = ["--report", str(tmp_path / "r.csv")]
    assert main(["eval", "--ckpt", str(ckpt), "--manifest", str(empty)] + args) == EXIT_DATA
    broken = tmp_path / "broken.cwpn"
    broken.write_bytes(ckpt.read_bytes()[:100])
    assert main(["eval", "--ckpt", str(broken), "--manifest", str(manifest)] + args) == EXIT_DATA


def test_degrade_is_deterministic(tmp_path):
    manifest = write_manifest(tmp_path / "m.txt", ["synthetic:1:16 noise 5", "synthetic:1:16 rain 6"],
                              regime="balanced")
    for d in ("x", "y"):
        assert main(["degrade", "--manifest", str(manifest), "--out", str(tmp_path / d)]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "x").iterdir())
    assert names == ["0000_clean.ppm", "0000_noise.ppm", "0001_clean.ppm", "0001_rain.ppm", "pairs.csv"]
    for n in names:
        assert (tmp_path / "x" / n).read_bytes() == (tmp_path / "y" / n).read_bytes()


def test_analyze_identical_images(tmp_path, capsys):
    write_ppm(synthetic_scene(16, 1), tmp_path / "c.ppm")
    assert main(["analyze", "--clean", str(tmp_path / "c.ppm"), "--degraded", str(tmp_path / "c.ppm")]) == EXIT_OK
    assert capsys.readouterr().out.splitlines() == [f"{b}: mild, inf dB" for b in ("LL", "LH", "HL", "HH")]


def test_analyze_preset_and_errors(tmp_path, capsys):
    write_ppm(synthetic_scene(32, 1), tmp_path / "c.ppm")
    write_ppm(synthetic_scene(16, 1), tmp_path / "s.ppm")
    assert main(["analyze", "--clean", str(tmp_path / "c.ppm"), "--preset", "haze"]) == EXIT_OK
    assert "LL: severe" in capsys.readouterr().out
    assert main(["analyze", "--clean", str(tmp_path / "c.ppm"), "--degraded", str(tmp_path / "s.ppm")]) == EXIT_DATA
    (tmp_path / "junk.ppm").write_bytes(b"P6\n4 4\n255\n")
    assert main(["analyze", "--clean", str(tmp_path / "junk.ppm"), "--preset", "haze"]) == EXIT_DATA


def test_backdoor_bundled_table(capsys):
    assert main(["backdoor"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "adjusted effect: 0.0502" in out
    assert "naive effect: -" in out


def test_backdoor_bad_label(capsys):
    assert main(["backdoor", "--treated", "placebo"]) == EXIT_DATA
    assert "placebo" in capsys.readouterr().err


def test_dump_attn(trained, tmp_path):
    root, _, _ = trained
    write_ppm(synthetic_scene(40, 2), tmp_path / "img.ppm")
    assert main(["dump-attn", "--ckpt", str(root / "a" / "checkpoint.cwpn"), "--image", str(tmp_path / "img.ppm"),
                 "--out", str(tmp_path / "o")]) == EXIT_OK
    buf = (tmp_path / "o" / "ll_gate.ppm").read_bytes()
    assert buf.startswith(b"P5\n10 10\n255\n")
    raster = np.frombuffer(buf[-100:], dtype=np.uint8)
    assert raster.min() == 0 and raster.max() == 255


def test_stretch():
    np.testing.assert_array_equal(stretch(np.array([2.0, 3.0, 4.0])), [0.0, 0.5, 1.0])
    assert np.all(stretch(np.full(3, 0.4)) == 0)
