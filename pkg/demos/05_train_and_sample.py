"""A short training run through the same entry points the CLI uses.

Three epochs instead of twenty; run ``hqcnf train`` for the full schedule.
"""
import numpy as np

from hqcnf.checkpoint import load_checkpoint
from hqcnf.cli import cmd_evaluate, cmd_generate, cmd_train, generate_images, load_data
from hqcnf.config import RunConfig
from hqcnf.metrics import fid_proxy

cfg = RunConfig(epochs=3, out_dir="runs/demo_train").validate()
hist = cmd_train(cfg)
print("per-epoch nll", np.round(hist["epoch_nll"], 2))
print("FID-proxy by epoch", np.round(hist["fid_proxy"], 3))

# %% samples from the checkpoint, and the noise reference
paths, sheet = cmd_generate(cfg, hist["checkpoint"], 16)
print("wrote", len(paths), "samples and", sheet)
res = cmd_evaluate(cfg, hist["checkpoint"])

_, hold = load_data(cfg)
noise = np.random.default_rng(0).random((256, 8, 8))
print("noise FID-proxy", fid_proxy(noise, hold.images), "vs trained", res["fid_proxy"])

model, meta = load_checkpoint(hist["checkpoint"])
imgs = generate_images(cfg, model, 256)
print("mean pixel generated", imgs.mean(), "real", hold.images.mean())
