"""From the bundled MNIST subset to flow samples and back to PGM images."""
from pathlib import Path

import numpy as np

from hqcnf.config import DATA_DIR
from hqcnf.data import downscale, filter_digits, from_sample, holdout_split, load_idx_files, to_sample
from hqcnf.pgm import contact_sheet, write_pgm

ds = load_idx_files(DATA_DIR / "mnist5k-images-idx3-ubyte.gz", DATA_DIR / "mnist5k-labels-idx1-ubyte.gz")
print(len(ds), "images of", ds.images.shape[1:], "labels", np.bincount(ds.labels))

# %% keep zeros and ones, crop 28 -> 24 and average 3x3 blocks down to 8x8
ds = filter_digits(ds, [0, 1])
ds.images = downscale(ds.images, 8)
train, hold = holdout_split(ds, 256, np.random.default_rng(3), n_train=512)
print("train", len(train), "holdout", len(hold), "mean pixel", train.images.mean())

# %% first 32 pixels are classical, last 32 fill the amplitudes of 5 qubits
x = to_sample(train.images, 32, rng=np.random.default_rng(4))
print("classical", x.classical.shape, "quantum", x.quantum.shape, x.quantum.dtype)

# %% and back to pictures
imgs = from_sample(x, (8, 8))
out = Path("runs/demo")
out.mkdir(parents=True, exist_ok=True)
write_pgm(out / "train_sheet.pgm", contact_sheet(imgs[:32]))
print("wrote", out / "train_sheet.pgm")
