import numpy as np
import pytest

import hqcnf.qsim
from conftest import small_config
from hqcnf import cli
from hqcnf.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from hqcnf.checks import check_realified_det, perturbed, random_samples
from hqcnf.config import ConfigError, RunConfig, load_config, parse_config
from hqcnf.flow import flow_forward
from hqcnf.pgm import contact_sheet, encode_pgm, write_pgm
from hqcnf.qsim import hardware_efficient_ansatz


def quiet(*_):
    pass


# -- config ----------------------------------------------------------------------

def test_defaults_are_valid():
    cfg = RunConfig().validate()
    assert (cfg.d1, cfg.d2, cfg.D, cfg.n_qubits, cfg.n_circuit_params) == (16, 32, 64, 5, 40)


def test_parse_config_values(tmp_path):
    cfg = parse_config("# comment\nepochs = 3  # trailing\nlr = 0.01\ndigits = 2, 7\n", tmp_path)
    assert cfg.epochs == 3 and cfg.lr == 0.01 and cfg.digits == (2, 7)
    again = parse_config(cfg.to_text(), tmp_path)
    assert again.to_text() == cfg.to_text()


@pytest.mark.parametrize("text, msg", [
    ("learning_rate = 0.1", "unknown key"),
    ("epochs 3", "expected"),
    ("epochs = many", "bad value"),
    ("n_qubits = 4", "2\\*\\*n_qubits"),
    ("n_circuit_params = 39", "n_circuit_params"),
    ("D = 49", "image_size"),
    ("d1 = 40", "d1"),
    ("grad_method = magic", "grad_method"),
])
def test_parse_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_ansatz_file_is_relative_to_config(tmp_path):
    (tmp_path / "circ.txt").write_text(hardware_efficient_ansatz(5, 2).to_text())
    (tmp_path / "run.cfg").write_text("ansatz_file = circ.txt\nn_circuit_params = 20\n")
    cfg = load_config(tmp_path / "run.cfg")
    assert cfg.ansatz().n_params == 20


def test_output_dir_env_override(tmp_path, monkeypatch):
    cfg = RunConfig(out_dir="somewhere")
    monkeypatch.setenv("HQCNF_OUT", str(tmp_path / "elsewhere"))
    assert cfg.output_dir == tmp_path / "elsewhere"
    monkeypatch.delenv("HQCNF_OUT")
    assert cfg.output_dir.name == "somewhere"


# -- PGM ---------------------------------------------------------------------------

def test_pgm_bytes(tmp_path):
    img = np.array([[0.0, 1.0, 0.5], [-1.0, 2.0, 0.2]])
    raw = encode_pgm(img)
    assert raw == b"P5\n3 2\n255\n" + bytes([0, 255, 128, 0, 255, 51])
    write_pgm(tmp_path / "a.pgm", img)
    assert (tmp_path / "a.pgm").read_bytes() == raw
    with pytest.raises(ValueError):
        encode_pgm(np.zeros(3))


def test_contact_sheet_layout():
    imgs = np.ones((3, 2, 2))
    sheet = contact_sheet(imgs, cols=2, pad=1)
    assert sheet.shape == (7, 7)
    assert sheet.sum() == 12
    assert sheet[0].sum() == 0 and sheet[4:6, 4:6].sum() == 0


# -- checkpoint ---------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    cfg = small_config(tmp_path)
    model = perturbed(cfg.build_model(), rng, 0.3)
    save_checkpoint(tmp_path / "m.hqcf", model, epoch=7)
    back, meta = load_checkpoint(tmp_path / "m.hqcf")
    assert meta["epoch"] == "7"
    assert back.get_flat().tobytes() == model.get_flat().tobytes()
    z = random_samples(rng, 5, cfg.d2, cfg.D - cfg.d2)
    assert flow_forward(z, back)[0].realify().tobytes() == flow_forward(z, model)[0].realify().tobytes()
    assert not (tmp_path / "m.hqcf.tmp").exists()


def test_checkpoint_rejects_wrong_parameter_count(tmp_path):
    blob = encode_checkpoint(small_config(tmp_path).build_model())
    with pytest.raises(ValueError, match="parameters"):
        decode_checkpoint(blob.replace(b"hidden = 8", b"hidden = 9"))


# -- commands ---------------------------------------------------------------------

def test_train_with_zero_epochs(tmp_path):
    cfg = small_config(tmp_path, epochs=0)
    hist = cli.cmd_train(cfg, log=quiet)
    out = cfg.output_dir
    assert (out / "loss.csv").read_text() == cli.LOSS_HEADER
    assert len((out / "metrics.csv").read_text().splitlines()) == 2
    assert hist["epoch_nll"] == [] and len(hist["fid_proxy"]) == 1
    assert (out / "samples" / "epoch_0000.pgm").exists()


def test_training_is_reproducible_and_generates(tmp_path):
    a = small_config(tmp_path / "a")
    b = small_config(tmp_path / "b")
    ha = cli.cmd_train(a, log=quiet)
    cli.cmd_train(b, log=quiet)
    la = (a.output_dir / "loss.csv").read_bytes()
    assert la == (b.output_dir / "loss.csv").read_bytes()
    rows = la.decode().splitlines()
    assert len(rows) == 1 + 2 * 4  # 64 samples in batches of 16 for two epochs
    assert (a.output_dir / "samples" / "epoch_0002.pgm").exists()

    paths, sheet = cli.cmd_generate(a, ha["checkpoint"], 5)
    assert len(paths) == 5 and sheet.exists()
    assert paths[0].read_bytes().startswith(b"P5\n4 4\n255\n")
    assert len(paths[0].read_bytes()) == len(b"P5\n4 4\n255\n") + 16

    res = cli.cmd_evaluate(a, ha["checkpoint"], log=quiet)
    assert res["epoch"] == "2" and np.isfinite(res["heldout_nll"])
    assert res["fid_proxy"] > 0 and res["noise_floor"] > 0
    assert (a.output_dir / "metrics.csv").read_text().splitlines()[-1].startswith("2,")


def test_generate_rejects_mismatched_checkpoint(tmp_path):
    cfg = small_config(tmp_path)
    save_checkpoint(tmp_path / "m.hqcf", cfg.build_model())
    other = small_config(tmp_path, n_layers=3)
    with pytest.raises(ConfigError, match="shape"):
        cli.cmd_generate(other, tmp_path / "m.hqcf", 2)


def test_main_exit_codes(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("nonsense = 1\n")
    assert cli.main(["check", "--config", str(tmp_path / "bad.cfg")]) == 2
    assert "unknown key" in capsys.readouterr().err
    cfg = small_config(tmp_path)
    (tmp_path / "ok.cfg").write_text(cfg.to_text())
    assert cli.main(["train", "--config", str(tmp_path / "ok.cfg")]) == 0
    ckpt = str(cfg.output_dir / "checkpoint.hqcf")
    assert cli.main(["generate", "--config", str(tmp_path / "ok.cfg"), "--checkpoint", ckpt,
                     "--count", "3"]) == 0
    assert cli.main(["evaluate", "--config", str(tmp_path / "ok.cfg"), "--checkpoint", ckpt]) == 0
    with pytest.raises(SystemExit):
        cli.main([])


def test_check_passes_at_default_shape():
    lines = []
    assert cli.cmd_check(RunConfig().validate(), log=lines.append) == 0
    assert lines[-1] == "8/8 checks passed"
    assert all(line.startswith("PASS") for line in lines[:-1])


def test_check_catches_a_broken_inverse(tmp_path, monkeypatch):
    real = hqcnf.qsim.apply_ansatz_adjoint

    def sloppy(state, spec, phi):
        return real(state, spec, np.asarray(phi) * 1.001)

    monkeypatch.setattr(hqcnf.qsim, "apply_ansatz_adjoint", sloppy)
    lines = []
    assert cli.cmd_check(small_config(tmp_path), log=lines.append) == 1
    assert any(line.startswith("FAIL") and "roundtrip" in line for line in lines)


def test_realified_det_at_three_qubits(rng):
    res = check_realified_det(hardware_efficient_ansatz(3, 3), rng)
    assert res.passed and res.residual < 1e-8
