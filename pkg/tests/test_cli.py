import json
import subprocess
import sys

import pytest

from dpp.cli import main

TINY = """\
model.width = 16
model.levels = 6
train.epochs = 2
train.lr = 0.01
synth.num_videos = 8
synth.frames = 320
synth.dim = 8
synth.holdout = 3
eval.an_list = 1,10
seed = 3
"""


def setup_run(root, name="run"):
    out = root / name
    out.mkdir()
    (out / "tiny.cfg").write_text(TINY)
    assert main(["synth", "--config", str(out / "tiny.cfg"), "--out", str(out)]) == 0
    cfg = out / "run.cfg"
    cfg.write_text(TINY + (out / "dataset.cfg").read_text())
    return out, cfg


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out, cfg = setup_run(tmp_path_factory.mktemp("cli"))
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    return out, cfg


def test_train_outputs(trained):
    out, _ = trained
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,lr,L_act,L_loc,L" and len(log) == 3
    assert (out / "weights.dppw").read_bytes()[:4] == b"DPPW"
    manifest = (out / "manifest.txt").read_text()
    assert "[synth]" in manifest and "[train]" in manifest and "seed = 3" in manifest


def test_infer_and_eval(trained, capsys):
    out, cfg = trained
    assert main(["infer", "--config", str(cfg), "--out", str(out)]) == 0
    rows = (out / "proposals.csv").read_text().splitlines()
    assert rows[0] == "video_id,t_start,t_end,score" and len(rows) > 1
    assert {r.split(",")[0] for r in rows[1:]} <= {f"video_{i:04d}" for i in range(5, 8)}
    capsys.readouterr()
    assert main(["eval", "--config", str(cfg), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert printed.startswith("AN,AR\n1,") and (out / "ar_report.csv").read_text() == printed
    assert (out / "ar_matrix.csv").exists()


def test_infer_without_videos_writes_header(trained, tmp_path):
    _, cfg = trained
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"videos": []}))
    cfg2 = tmp_path / "c.cfg"
    cfg2.write_text(cfg.read_text() + f"paths.test_annotations = {empty}\n")
    assert main(["infer", "--config", str(cfg2), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "proposals.csv").read_text() == "video_id,t_start,t_end,score\n"


def test_eval_without_ground_truth_exits_2(tmp_path):
    (tmp_path / "gt.json").write_text(json.dumps({"videos": [
        {"id": "a", "num_frames": 80, "actions": []}]}))
    (tmp_path / "p.csv").write_text("video_id,t_start,t_end,score\na,0,1,0.5\n")
    code = main(["eval", "--annotations", str(tmp_path / "gt.json"),
                 "--proposals", str(tmp_path / "p.csv"), "--out", str(tmp_path)])
    assert code == 2


def test_eval_worked_example(tmp_path, capsys):
    (tmp_path / "gt.json").write_text(json.dumps({"videos": [
        {"id": "v1", "num_frames": 160, "actions": [{"start_sec": 0, "end_sec": 10}]},
        {"id": "v2", "num_frames": 160, "actions": [{"start_sec": 0, "end_sec": 10}]}]}))
    (tmp_path / "p.csv").write_text("video_id,t_start,t_end,score\nv1,0,10,0.9\nv2,0,5,0.9\n")
    (tmp_path / "e.cfg").write_text("eval.an_list = 1\n")
    assert main(["eval", "--config", str(tmp_path / "e.cfg"), "--annotations",
                 str(tmp_path / "gt.json"), "--proposals", str(tmp_path / "p.csv"),
                 "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out == "AN,AR\n1,0.5455\n"


def test_bad_config_exits_2(tmp_path):
    (tmp_path / "bad.cfg").write_text("model.depth = 3\n")
    assert main(["train", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path)]) == 2


def test_checkpoint_mismatch_exits_2(trained, tmp_path):
    out, cfg = trained
    cfg2 = tmp_path / "wide.cfg"
    cfg2.write_text(cfg.read_text() + "model.width = 32\n")
    code = main(["infer", "--config", str(cfg2), "--checkpoint", str(out / "weights.dppw"),
                 "--out", str(tmp_path)])
    assert code == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_training_exits_3(trained, tmp_path):
    _, cfg = trained
    cfg2 = tmp_path / "hot.cfg"
    cfg2.write_text(cfg.read_text() + "train.lr = 1e30\n")
    assert main(["train", "--config", str(cfg2), "--out", str(tmp_path)]) == 3


def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == 0
    assert "gradient checks passed" in capsys.readouterr().out


def test_gradcheck_corruption_is_named(capsys):
    assert main(["gradcheck", "--corrupt", "model.tru.1.weight"]) == 4
    assert "model.tru.1.weight" in capsys.readouterr().err


def test_ablate_rows(trained):
    out, cfg = trained
    assert main(["ablate", "--config", str(cfg), "--out", str(out)]) == 0
    rows = (out / "ablation.csv").read_text().splitlines()
    assert rows[0] == "method,ratios,npc,AR@50,AR@100,AR@200"
    assert [r.split(",")[2] for r in rows[1:]] == ["126", "252", "378", "630", "126"]
    assert [r.split(",")[1] for r in rows[1:]] == ["1", "2", "3", "5", "n/a"]


def test_identical_runs_are_byte_identical(tmp_path):
    outputs = []
    for name in ("x", "y"):
        out, cfg = setup_run(tmp_path, name)
        for cmd in ("train", "infer", "eval"):
            assert main([cmd, "--config", str(cfg), "--out", str(out)]) == 0
        outputs.append({f: (out / f).read_bytes() for f in
                        ("weights.dppw", "train_log.csv", "proposals.csv", "ar_report.csv",
                         "ar_matrix.csv")})
    assert outputs[0] == outputs[1]


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "dpp", "--help"], capture_output=True, text=True)
    assert done.returncode == 0
    for cmd in ("synth", "train", "infer", "eval", "gradcheck", "ablate"):
        assert cmd in done.stdout
