import time

import numpy as np
import pytest

from hqcnf.cli import cmd_train
from hqcnf.config import RunConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_config(tmp_path, **over):
    """4x4 images, 3 qubits, two layers: trains in about a second."""
    kw = dict(image_size=4, d1=4, d2=8, D=16, n_qubits=3, ansatz_blocks=2, n_circuit_params=12,
              n_layers=2, hidden=8, n_train=64, n_holdout=32, batch_size=16, epochs=2,
              n_eval=32, sheet_count=8, out_dir=str(tmp_path / "run"))
    kw.update(over)
    return RunConfig(**kw).validate()


@pytest.fixture(scope="session")
def default_runs(tmp_path_factory):
    """Two same-seed trainings at the default configuration."""
    runs = []
    for name in ("a", "b"):
        cfg = RunConfig(out_dir=str(tmp_path_factory.mktemp(f"default_{name}"))).validate()
        t0 = time.perf_counter()
        hist = cmd_train(cfg, log=lambda *_: None)
        hist["seconds"] = time.perf_counter() - t0
        runs.append((cfg, hist))
    return runs
