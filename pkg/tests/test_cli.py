import subprocess
import sys

import numpy as np
from PIL import Image
import pytest

from conftest import synthetic_image
from saat.checkpoint import decode, save
from saat.cli import main, parse_config
from saat.errors import InvalidConfigError
from saat.imaging import ImageBuffer, save_image
from saat.model import build
from saat.verify import toy_config

TOY_CFG = """\
# toy model
model.scale = 2
model.channels = 16
model.heads = 2
model.window_size = 8
model.n_swsag = 1
model.n_cwsag = 1
model.blocks_per_group = 2
model.shifts = 0, 4   # second block shifted
train.steps = 4
train.patch_size = 16
"""


@pytest.fixture
def data(tmp_path):
    root = tmp_path / "data"
    (root / "HR").mkdir(parents=True)
    save_image(ImageBuffer(synthetic_image(48, 0)), root / "HR" / "one.png")
    save_image(ImageBuffer(synthetic_image(40, 1)), root / "HR" / "two.png")
    return root


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(TOY_CFG)
    return p


def test_parse_config():
    rc = parse_config(TOY_CFG + "data.train_dir = /x\nio.out_dir = out\n")
    assert rc.model.shifts == (0, 4) and rc.model.channels == 16
    assert rc.train.steps == 4 and rc.data.train_dir == "/x" and rc.io.out_dir == "out"
    for bad, key in [("model.alpah = 0.1", "model.alpah"), ("train.stpes = 3", "train.stpes"),
                     ("optim.lr = 1", "optim")]:
        with pytest.raises(InvalidConfigError, match=key):
            parse_config(bad)
    with pytest.raises(InvalidConfigError, match="duplicate"):
        parse_config("train.steps = 1\ntrain.steps = 2")
    with pytest.raises(InvalidConfigError):
        parse_config("steps = 1")
    with pytest.raises(InvalidConfigError):
        parse_config("train.steps = many")


def test_check_filter(capsys):
    assert main(["check", "--filter", "windowing"]) == 0
    out = capsys.readouterr().out
    assert "suite windowing" in out and "tensor-engine" not in out


def test_check_fault_names_op(capsys):
    assert main(["check", "--filter", "tensor-engine", "--inject-fault", "softmax"]) == 1
    assert "softmax" in capsys.readouterr().err
    # the hook is cleared afterwards
    assert main(["check", "--filter", "tensor-engine"]) == 0


def test_hidden_flag_not_in_help(capsys):
    with pytest.raises(SystemExit):
        main(["check", "--help"])
    assert "inject" not in capsys.readouterr().out


def test_unknown_key_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("model.betta = 0.5\n")
    assert main(["shapes", "--config", str(p)]) == 2
    assert "model.betta" in capsys.readouterr().err


def test_shapes_total(cfg, capsys):
    assert main(["shapes", "--config", str(cfg)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    rows = [l.split("\t") for l in lines[1:-1]]
    model = build(parse_config(TOY_CFG).model)
    assert [r[0] for r in rows] == [n for n, _ in model.named_parameters()]
    assert int(lines[-1].split("\t")[-1]) == sum(int(r[2]) for r in rows) == model.params().numel()


def test_train_writes_artifacts_deterministically(cfg, data, tmp_path):
    for out in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / out)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    trace = (a / "trace.tsv").read_text().splitlines()
    assert len(trace) == 4 and trace[0].startswith("0\t")
    assert trace == (b / "trace.tsv").read_text().splitlines()
    assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()
    config, _, _ = decode((a / "model.ckpt").read_bytes())
    assert config.channels == 16


def test_train_resume_matches(cfg, data, tmp_path):
    full, part = tmp_path / "full", tmp_path / "part"
    main(["train", "--config", str(cfg), "--data", str(data), "--out", str(full)])
    main(["train", "--config", str(cfg), "--data", str(data), "--out", str(part), "--until", "2"])
    main(["train", "--config", str(cfg), "--data", str(data), "--out", str(part), "--resume"])
    assert (full / "trace.tsv").read_text() == (part / "trace.tsv").read_text()
    assert (full / "model.ckpt").read_bytes() == (part / "model.ckpt").read_bytes()


def test_train_seed_flag(cfg, data, tmp_path):
    main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "trace.tsv").read_text() != (tmp_path / "b" / "trace.tsv").read_text()


def test_train_missing_hr(cfg, tmp_path, capsys):
    assert main(["train", "--config", str(cfg), "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 3
    assert "HR" in capsys.readouterr().err


def _eval_rows(text):
    return [l.split("\t") for l in text.splitlines() if l and not l.startswith("#") and not l.startswith("image")]


def test_eval_identity(data, capsys):
    assert main(["eval", "--baseline", "identity", "--data", str(data), "--scale", "2"]) == 0
    rows = _eval_rows(capsys.readouterr().out)
    assert len(rows) == 2
    assert all(r[1] == "inf" and r[2] == "1.000000" for r in rows)


def test_eval_bicubic_and_checkpoint(data, tmp_path, capsys):
    assert main(["eval", "--baseline", "bicubic", "--data", str(data), "--scale", "2",
                 "--out", str(tmp_path / "ev")]) == 0
    rows = _eval_rows(capsys.readouterr().out)
    assert len(rows) == 2 and all(20 < float(r[1]) < 60 for r in rows)
    assert (tmp_path / "ev" / "eval.tsv").exists()
    ck = tmp_path / "m.ckpt"
    save(build(toy_config(channels=16)), ck)
    assert main(["eval", "--checkpoint", str(ck), "--data", str(data)]) == 0
    assert len(_eval_rows(capsys.readouterr().out)) == 2
    assert main(["eval", "--checkpoint", str(ck), "--data", str(data), "--scale", "4"]) == 2
    assert "x2" in capsys.readouterr().err


def test_infer_shape_and_determinism(tmp_path):
    ck = tmp_path / "x4.ckpt"
    save(build(toy_config(scale=4, channels=16)), ck)
    src = tmp_path / "in.png"
    save_image(ImageBuffer(synthetic_image(24)), src)
    for name in ("o1.png", "o2.png"):
        assert main(["infer", "--checkpoint", str(ck), str(src), str(tmp_path / name)]) == 0
    out = np.asarray(Image.open(tmp_path / "o1.png"))
    assert out.shape == (96, 96, 3)
    assert (tmp_path / "o1.png").read_bytes() == (tmp_path / "o2.png").read_bytes()


def test_infer_corrupt_checkpoint(tmp_path, capsys):
    ck = tmp_path / "bad.ckpt"
    ck.write_bytes(b"SAATCKPT\x01\x00")
    src = tmp_path / "in.png"
    save_image(ImageBuffer(synthetic_image(16)), src)
    assert main(["infer", "--checkpoint", str(ck), str(src), str(tmp_path / "o.png")]) != 0
    assert "corrupt" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "saat", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("check", "train", "eval", "infer", "shapes"):
        assert cmd in r.stdout
