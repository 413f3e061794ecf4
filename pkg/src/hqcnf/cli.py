"""``hqcnf`` command line: train, generate, evaluate, check."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checks
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import filter_digits, from_sample, holdout_split, load_idx_files, downscale, to_sample
from .flow import ModelDivergence
from .metrics import fid_proxy
from .neural import AdamWState
from .objective import epoch_summary, nll_loss, sample, train_epoch
from .pgm import contact_sheet, write_pgm

LOSS_HEADER = "epoch,batch,nll,logdet_mean,base_logp_mean\n"
METRICS_HEADER = "epoch,fid_proxy,n_generated,n_real\n"


def load_data(cfg):
    """Downscaled ``(train, holdout)`` image datasets for a config."""
    ds = load_idx_files(cfg.resolve(cfg.mnist_images), cfg.resolve(cfg.mnist_labels))
    ds = filter_digits(ds, cfg.digits)
    ds.images = downscale(ds.images, cfg.image_size)
    return holdout_split(ds, cfg.n_holdout, np.random.default_rng(cfg.seed_data), cfg.n_train)


def generate_images(cfg, model, count):
    x = sample(model, np.random.default_rng(cfg.seed_sample), count, cfg.temperature)
    return from_sample(x, (cfg.image_size, cfg.image_size))


def _append(path, header, line):
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        if new:
            fh.write(header)
        fh.write(line)


def _check_shape(cfg, model):
    lay = model.layers[0]
    want = (cfg.d1, cfg.d2, cfg.D, cfg.n_layers)
    got = (lay.d1, lay.d2, lay.D, len(model.layers))
    if want != got:
        raise ConfigError(f"checkpoint shape (d1, d2, D, layers) = {got}, config says {want}")
    a = cfg.ansatz()
    if (a.to_text() if a else "") != (lay.ansatz.to_text() if lay.ansatz else ""):
        raise ConfigError("checkpoint ansatz differs from the configured one")


def cmd_train(cfg, log=print):
    out = cfg.output_dir
    (out / "samples").mkdir(parents=True, exist_ok=True)
    train, holdout = load_data(cfg)
    model = cfg.build_model()
    hyper = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                 weight_decay=cfg.weight_decay)
    optimizers = [AdamWState.zeros(lay.n_params, **hyper) for lay in model.layers]
    shuffle_rng = np.random.default_rng(cfg.seed_shuffle)
    ckpt = out / "checkpoint.hqcf"
    loss_csv, metrics_csv = out / "loss.csv", out / "metrics.csv"
    loss_csv.write_text(LOSS_HEADER)
    metrics_csv.write_text(METRICS_HEADER)
    (out / "config.txt").write_text(cfg.to_text())

    def snapshot(epoch):
        save_checkpoint(ckpt, model, epoch=epoch)
        imgs = generate_images(cfg, model, max(cfg.n_eval, cfg.sheet_count))
        write_pgm(out / "samples" / f"epoch_{epoch:04d}.pgm", contact_sheet(imgs[:cfg.sheet_count]))
        fid = fid_proxy(imgs[:cfg.n_eval], holdout.images)
        _append(metrics_csv, METRICS_HEADER, f"{epoch},{fid!r},{cfg.n_eval},{len(holdout)}\n")
        return fid

    history = {"epoch_nll": [], "fid_proxy": [snapshot(0)]}
    for epoch in range(1, cfg.epochs + 1):
        data = to_sample(train.images, cfg.d2, rng=shuffle_rng)
        try:
            reports = train_epoch(data, model, optimizers, cfg.batch_size, shuffle_rng,
                                  method=cfg.grad_method)
        except ModelDivergence as exc:
            log(f"epoch {epoch}: training diverged ({exc}); keeping checkpoint of epoch {epoch - 1}")
            raise
        with open(loss_csv, "a", newline="") as fh:
            for b, r in enumerate(reports):
                fh.write(f"{epoch},{b},{r.nll!r},{r.logdet_mean!r},{r.base_logp_mean!r}\n")
        summary = epoch_summary(reports)
        history["epoch_nll"].append(summary.nll)
        history["fid_proxy"].append(snapshot(epoch))
        log(f"epoch {epoch:3d}  nll {summary.nll:12.4f}  fid_proxy {history['fid_proxy'][-1]:.4f}")
    history["checkpoint"] = ckpt
    return history


def cmd_generate(cfg, checkpoint, count):
    model, _ = load_checkpoint(checkpoint)
    _check_shape(cfg, model)
    gen = cfg.output_dir / "generated"
    gen.mkdir(parents=True, exist_ok=True)
    imgs = generate_images(cfg, model, count)
    paths = []
    for i, img in enumerate(imgs):
        p = gen / f"sample_{i:04d}.pgm"
        write_pgm(p, img)
        paths.append(p)
    sheet = gen / "sheet.pgm"
    write_pgm(sheet, contact_sheet(imgs))
    return paths, sheet


def cmd_evaluate(cfg, checkpoint, log=print):
    model, meta = load_checkpoint(checkpoint)
    _check_shape(cfg, model)
    train, holdout = load_data(cfg)
    imgs = generate_images(cfg, model, cfg.n_eval)
    fid = fid_proxy(imgs, holdout.images)
    floor = fid_proxy(train.images[:len(holdout)], holdout.images)
    held = to_sample(holdout.images, cfg.d2, rng=np.random.default_rng(cfg.seed_data))
    nll = nll_loss(held, model).nll
    epoch = meta.get("epoch", "")
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    _append(out / "metrics.csv", METRICS_HEADER, f"{epoch},{fid!r},{cfg.n_eval},{len(holdout)}\n")
    log(f"fid_proxy {fid:.6f}  (real-vs-real floor {floor:.6f})  held-out nll {nll:.6f}")
    return {"fid_proxy": fid, "noise_floor": floor, "heldout_nll": nll, "epoch": epoch}


def cmd_check(cfg, log=print):
    results = checks.run_checks(cfg)
    for r in results:
        log(r.line())
    failed = [r for r in results if not r.passed]
    log(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _config(path):
    return load_config(path) if path else RunConfig().validate()


def main(argv=None):
    ap = argparse.ArgumentParser(prog="hqcnf", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("train", "generate", "evaluate", "check"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file (defaults if omitted)")
        if name in ("generate", "evaluate"):
            p.add_argument("--checkpoint", required=True)
        if name == "generate":
            p.add_argument("--count", type=int, default=16)
    args = ap.parse_args(argv)
    try:
        cfg = _config(args.config)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "generate":
            paths, sheet = cmd_generate(cfg, Path(args.checkpoint), args.count)
            print(f"wrote {len(paths)} images and {sheet}")
        elif args.command == "evaluate":
            cmd_evaluate(cfg, Path(args.checkpoint))
        else:
            return cmd_check(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"hqcnf: error: {exc}", file=sys.stderr)
        return 2
    except ModelDivergence:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
