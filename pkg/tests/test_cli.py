import pytest

from partseg.cli import EXIT_ERROR, EXIT_OK, EXIT_UNKNOWN, main
from partseg.config import load_config


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "exp.ini"
    assert main(["config", "--synthetic", "--out", str(cfg)]) == EXIT_OK
    cfg.write_text(cfg.read_text().replace("stall_iterations = 100", "stall_iterations = 5"))
    assert main(["synth", "--config", str(cfg), "--per-category", "4", "--points", "256",
                 "--out", str(root / "data")]) == EXIT_OK
    assert main(["train", str(root / "data"), "--config", str(cfg), "--out", str(root / "model")]) == EXIT_OK
    return root, cfg


def test_config_command_round_trips(tmp_path):
    out = tmp_path / "c.ini"
    assert main(["config", "--synthetic", "--seed", "9", "--out", str(out)]) == EXIT_OK
    assert load_config(out).run.seed == 9


def test_occlusion_preset(tmp_path):
    out = tmp_path / "o.ini"
    assert main(["config", "--occlusion", "--out", str(out)]) == EXIT_OK
    cfg = load_config(out)
    assert cfg.run.spin_only and cfg.run.min_fraction == 0.3
    assert cfg.descriptor_config().spin_only and cfg.descriptor.spin_radius == 0.5
    with pytest.raises(SystemExit) as info:
        main(["config", "--occlusion", "--synthetic"])
    assert info.value.code == EXIT_ERROR


def test_train_outputs(workspace):
    root, _ = workspace
    model = root / "model"
    assert {p.name for p in model.iterdir()} == {"model.ckpt", "train_log.csv", "arguments.txt"}
    assert (model / "train_log.csv").read_text().startswith("epoch,mean_elbo\n1,")


def test_segment_and_recognize(workspace, tmp_path):
    root, cfg = workspace
    cloud = next((root / "data" / "mug").glob("mug_*.txt"))
    seg = tmp_path / "seg.txt"
    assert main(["segment", str(cloud), "--config", str(cfg), "--checkpoint", str(root / "model" / "model.ckpt"),
                 "--out", str(seg)]) == EXIT_OK
    lines = seg.read_text().splitlines()
    assert lines and all(len(line.split()) == 4 for line in lines)
    rec = tmp_path / "rec.txt"
    code = main(["recognize", str(cloud), "--config", str(cfg), "--checkpoint", str(root / "model" / "model.ckpt"),
                 "--arguments", str(root / "model" / "arguments.txt"), "--out", str(rec)])
    assert code == EXIT_OK
    category, *chain = rec.read_text().splitlines()
    assert category == "mug" and chain[-1].endswith("→ mug")


def test_unknown_object_exit_code(workspace, tmp_path):
    root, cfg = workspace
    store = tmp_path / "args.txt"
    store.write_text("nothing -> Ghost : 1\n")
    cloud = next((root / "data" / "table").glob("table_*.txt"))
    out = tmp_path / "rec.txt"
    code = main(["recognize", str(cloud), "--config", str(cfg), "--checkpoint", str(root / "model" / "model.ckpt"),
                 "--arguments", str(store), "--out", str(out)])
    assert code == EXIT_UNKNOWN
    assert out.read_text() == "unknown object\n"


def test_user_errors_exit_2(tmp_path, capsys):
    assert main(["occlude", str(tmp_path / "missing.xyz")]) == EXIT_ERROR
    bad = tmp_path / "bad.ini"
    bad.write_text("[hdp]\nnope = 1\n")
    assert main(["config", "--config", str(bad)]) == EXIT_ERROR
    assert main(["train", "--out", str(tmp_path)]) == EXIT_ERROR
    assert main(["segment", str(tmp_path / "missing.xyz")]) == EXIT_ERROR
    assert "partseg:" in capsys.readouterr().err


def test_occlude_keeps_format(tmp_path):
    src = tmp_path / "c.xyz"
    src.write_text("".join(f"{i} {i % 3} {i % 5}\n" for i in range(40)))
    out = tmp_path / "o.xyz"
    assert main(["occlude", str(src), "--seed", "3", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert 0 < len(lines) < 40 and all(len(line.split()) == 3 for line in lines)


def test_openended_writes_report(workspace, tmp_path):
    root, cfg = workspace
    assert main(["openended", str(root / "data"), "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    report = (tmp_path / "report.txt").read_text()
    assert report.startswith("learned_parts = ")
    assert (tmp_path / "trajectory.csv").read_text().startswith("iteration,n_parts,window_miou\n")
