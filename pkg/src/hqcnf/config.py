"""Run configuration: plain ``key = value`` lines, ``#`` comments."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import qsim
from .flow import build_model
from .objective import BaseDensitySpec

__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config", "DATA_DIR"]

DATA_DIR = Path(__file__).resolve().parents[2] / "data"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mnist_images: str = str(DATA_DIR / "mnist5k-images-idx3-ubyte.gz")
    mnist_labels: str = str(DATA_DIR / "mnist5k-labels-idx1-ubyte.gz")
    digits: tuple = (0, 1)
    image_size: int = 8
    n_train: int = 512
    n_holdout: int = 256
    # splits over the flattened image: [0, d1) conditions, [d1, d2) affine, [d2, D) quantum
    d1: int = 16
    d2: int = 32
    D: int = 64
    n_qubits: int = 5
    ansatz_blocks: int = 4
    ansatz_file: str = ""
    n_circuit_params: int = 40
    n_layers: int = 6
    hidden: int = 64
    s_max: float = 5.0
    sigma_classical: float = 1.0
    # U(phi) preserves the amplitude norm, so the base alone sets E|x_q|^2 = 1 + 2 Q sigma^2;
    # 0.2 matches the ~3.6 of the 0/1 digit data
    sigma_quantum: float = 0.2
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 20
    grad_method: str = "parameter-shift"
    seed_init: int = 0
    seed_shuffle: int = 1
    seed_sample: int = 2
    seed_data: int = 3
    temperature: float = 1.0
    n_eval: int = 256
    sheet_count: int = 16
    out_dir: str = "runs/default"
    _base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def validate(self):
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}")

        for name in ("image_size", "n_train", "n_holdout", "n_layers", "hidden",
                     "batch_size", "n_eval", "sheet_count"):
            if getattr(self, name) <= 0:
                bad(name, "must be positive")
        if self.epochs < 0:
            bad("epochs", "must be non-negative")
        if not 1 <= self.d1 < self.d2 <= self.D:
            bad("d1/d2/D", f"need 1 <= d1 < d2 <= D, got {self.d1}, {self.d2}, {self.D}")
        if self.D != self.image_size ** 2:
            bad("D", f"must equal image_size**2 = {self.image_size ** 2}")
        Q = self.D - self.d2
        if Q == 0:
            if self.n_qubits != 0:
                bad("n_qubits", "must be 0 when D == d2")
        elif (1 << self.n_qubits) != Q:
            bad("n_qubits", f"2**n_qubits = {1 << self.n_qubits} but D - d2 = {Q}")
        if Q:
            ansatz = self.ansatz()
            if ansatz.n_params != self.n_circuit_params:
                bad("n_circuit_params",
                    f"{self.n_circuit_params} but the ansatz has {ansatz.n_params} parameter slots")
        for name in ("sigma_classical", "sigma_quantum", "lr", "s_max"):
            if getattr(self, name) <= 0:
                bad(name, "must be positive")
        if self.temperature < 0:
            bad("temperature", "must be non-negative")
        if self.grad_method not in ("parameter-shift", "adjoint"):
            bad("grad_method", "must be parameter-shift or adjoint")
        return self

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else self._base_dir / p

    @property
    def output_dir(self):
        return self.resolve(os.environ.get("HQCNF_OUT") or self.out_dir)

    def ansatz(self):
        if self.D == self.d2:
            return None
        if self.ansatz_file:
            spec = qsim.AnsatzSpec.from_text(self.resolve(self.ansatz_file).read_text())
            if spec.n_qubits != self.n_qubits:
                raise ConfigError(f"ansatz_file: {spec.n_qubits} qubits, config says {self.n_qubits}")
            return spec
        return qsim.hardware_efficient_ansatz(self.n_qubits, self.ansatz_blocks)

    def base_density(self):
        return BaseDensitySpec.for_shape(self.d2, self.D - self.d2,
                                         self.sigma_classical, self.sigma_quantum)

    def build_model(self, zero_init=True):
        rng = np.random.default_rng(self.seed_init)
        return build_model(self.d1, self.d2, self.D, self.n_layers, self.ansatz(),
                           self.base_density(), rng, hidden=self.hidden, s_max=self.s_max,
                           zero_init=zero_init)

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(d) for d in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _convert(f, raw):
    default = f.default
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(tok) for tok in raw.replace(",", " ").split())
    return raw


def parse_config(text, base_dir="."):
    fields = {f.name: f for f in dataclasses.fields(RunConfig) if not f.name.startswith("_")}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(fields[key], val)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {val!r} for {key}") from None
    cfg = RunConfig(**values)
    cfg._base_dir = Path(base_dir)
    return cfg.validate()


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)
