"""Model checkpoints: flat float64 parameters followed by a text manifest.

The binary part is :func:`hqcnf.neural.write_params`. Everything after it is
UTF-8 ``key = value`` lines describing the architecture, then an
``[ansatz]`` line and the circuit in :meth:`AnsatzSpec.to_text` form.
"""
from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np

from . import qsim
from .flow import build_model
from .neural import read_params, write_params
from .objective import BaseDensitySpec

__all__ = ["save_checkpoint", "load_checkpoint", "encode_checkpoint", "decode_checkpoint"]


def _hidden_of(model):
    return model.layers[0].s_net.sizes[1:-1]


def encode_checkpoint(model, **extra):
    buf = io.BytesIO()
    write_params(buf, model.get_flat())
    lay = model.layers[0]
    base = model.base
    meta = {
        "d1": lay.d1, "d2": lay.d2, "D": lay.D,
        "layers": len(model.layers),
        "hidden": ",".join(str(h) for h in _hidden_of(model)),
        "s_max": repr(lay.s_max),
        "shift": model.shift,
        "sigma_classical": repr(base.sigma_classical),
        "sigma_quantum": repr(base.sigma_quantum),
    }
    meta.update(extra)
    text = "".join(f"{k} = {v}\n" for k, v in meta.items())
    if lay.ansatz is not None:
        text += "[ansatz]\n" + lay.ansatz.to_text()
    buf.write(text.encode("utf-8"))
    return buf.getvalue()


def decode_checkpoint(blob):
    fh = io.BytesIO(blob)
    flat = read_params(fh)
    text = fh.read().decode("utf-8")
    head, _, ansatz_text = text.partition("[ansatz]\n")
    meta = {}
    for line in head.splitlines():
        if line.strip():
            k, v = (s.strip() for s in line.split("=", 1))
            meta[k] = v
    ansatz = qsim.AnsatzSpec.from_text(ansatz_text) if ansatz_text.strip() else None
    d1, d2, D = int(meta["d1"]), int(meta["d2"]), int(meta["D"])
    hidden = [int(h) for h in meta["hidden"].split(",") if h]
    base = BaseDensitySpec.for_shape(d2, D - d2, float(meta["sigma_classical"]),
                                     float(meta["sigma_quantum"]))
    model = build_model(d1, d2, D, int(meta["layers"]), ansatz, base,
                        np.random.default_rng(0), hidden=hidden, s_max=float(meta["s_max"]))
    model.shift = int(meta["shift"])
    if model.n_params != len(flat):
        raise ValueError(f"manifest describes {model.n_params} parameters, file holds {len(flat)}")
    model.set_flat(flat)
    return model, meta


def save_checkpoint(path, model, **extra):
    """Write atomically so an interrupted run keeps the previous checkpoint."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(model, **extra))
    os.replace(tmp, path)


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
