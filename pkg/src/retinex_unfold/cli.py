"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 I/O, 3 config, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats
from .config import ConfigError, RunConfig, parse_config
from .enhance import enhance_pipeline
from .hog import compute_hog
from .imgcore import ImageFormatError, extract_illumination, load_image, save_image
from .metrics import psnr, ssim
from .priors import train_prior
from .unfold import decompose

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3, 4

log = logging.getLogger("retinex_unfold")


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def _load_config(args, extra: dict | None = None) -> RunConfig:
    overrides = dict(args.set or [])
    overrides.update({k: str(v) for k, v in (extra or {}).items() if v is not None})
    return parse_config(args.config, overrides)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite values in result")


def _crop(img: np.ndarray, multiple: int) -> np.ndarray:
    h = img.shape[0] - img.shape[0] % multiple
    w = img.shape[1] - img.shape[1] % multiple
    if h == 0 or w == 0:
        raise ValueError(f"image {img.shape[:2]} is smaller than {multiple}x{multiple}")
    return img[:h, :w]


def _prior_and_crop(args, img):
    prior = formats.load_model(args.prior) if getattr(args, "prior", None) else None
    if prior is not None:
        img = _crop(img, prior.patch_size)
    return prior, img


def cmd_decompose(args) -> int:
    cfg = _load_config(args, {"unfold.stages": args.stages})
    img = load_image(args.input)
    prior, img = _prior_and_crop(args, img)
    dec = decompose(img, cfg.unfold_config(prior))
    _check_finite(dec.L, dec.R, dec.N)
    p = args.out_prefix
    save_image(dec.L, f"{p}_L.png")
    save_image(dec.R, f"{p}_R.png")
    # preview only: N in [-1, 1] mapped to [0, 1]; the .cuet file holds the signed data
    save_image(np.clip((dec.N + 1.0) / 2.0, 0.0, 1.0), f"{p}_N.png")
    formats.write_tensor(f"{p}_L.cuet", dec.L)
    formats.write_tensor(f"{p}_R.cuet", dec.R)
    formats.write_tensor(f"{p}_N.cuet", dec.N)
    for k, rec in enumerate(dec.stage_history, start=1):
        for name in ("L", "R", "N"):
            formats.write_tensor(f"{p}_stage{k}_{name}.cuet", getattr(rec, name))
        print(f"stage {k} residual {rec.residual_norm:.10g}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    cfg = _load_config(args)
    img = load_image(args.input)
    prior, img = _prior_and_crop(args, img)
    ref = None
    ecfg = cfg.enhance_config()
    if args.ref is not None:
        ref = load_image(args.ref)[: img.shape[0], : img.shape[1]]
        ecfg = replace(ecfg, ratio=None)
    elif not args.ratio > 0:
        raise UsageError("--ratio must be positive")
    out, _ = enhance_pipeline(img, ratio=args.ratio, reference=ref, unfold_cfg=cfg.unfold_config(prior), cfg=ecfg)
    _check_finite(out)
    save_image(out, args.out)
    if ref is not None:
        print(f"psnr_db={_fmt_psnr(psnr(out, ref))}")
        print(f"ssim={ssim(out, ref):.6f}")
    return EXIT_OK


def _png_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() == ".png")


def cmd_train_prior(args) -> int:
    cfg = _load_config(args, {"train.epochs": args.epochs, "train.seed": args.seed})
    files = _png_files(args.data)
    if not files:
        raise FileNotFoundError(f"no PNG files in {args.data}")
    pcfg = cfg.prior_config()
    images = [_crop(load_image(f), pcfg.patch_size) for f in files]

    def report(epoch, loss):
        if not math.isfinite(loss):
            raise NumericError(f"loss became {loss} at epoch {epoch}")
        print(f"{epoch},{loss:.10g}", flush=True)

    model = train_prior(args.kind, images, cfg.train_config(), pcfg, cfg.hog_config(), cfg.bilateral_params(),
                        on_epoch=report)
    for arr in model.params().values():
        _check_finite(arr)
    formats.save_model(args.out, model)
    return EXIT_OK


def _fmt_psnr(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.6f}"


def cmd_eval(args) -> int:
    pred = {p.name: p for p in _png_files(args.pred)}
    gt = {p.name: p for p in _png_files(args.gt)}
    for name in sorted(set(pred) ^ set(gt)):
        print(f"warning: {name} has no counterpart; skipped", file=sys.stderr)
    names = sorted(set(pred) & set(gt))
    if not names:
        raise FileNotFoundError("no matching filenames between prediction and ground-truth dirs")
    rows = []
    for name in names:
        a, b = load_image(pred[name]), load_image(gt[name])
        rows.append((name, psnr(a, b), ssim(a, b)))
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["filename", "psnr_db", "ssim"])
        for name, p, s in rows:
            w.writerow([name, _fmt_psnr(p), f"{s:.6f}"])
        mean_p = float(np.mean([r[1] for r in rows]))
        mean_s = float(np.mean([r[2] for r in rows]))
        w.writerow(["mean", _fmt_psnr(mean_p), f"{mean_s:.6f}"])
    return EXIT_OK


def cmd_hog(args) -> int:
    cfg = _load_config(args)
    hcfg = cfg.hog_config()
    lum = _crop(extract_illumination(load_image(args.input)), hcfg.cell_size)
    feat = compute_hog(lum, hcfg)
    bx, by, bs, bins = feat.layout
    formats.write_tensor(args.out, feat.values.reshape(by, bx, bs, bs, bins))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="retinex-unfold", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", type=_kv, metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("decompose", help="unfolded Retinex decomposition")
    p.add_argument("--input", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--stages", type=int)
    p.add_argument("--prior", help="illumination prior model file (enables the learned prox)")
    common(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("enhance", help="low-light enhancement")
    p.add_argument("--input", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--ratio", type=float)
    g.add_argument("--ref", help="normal-light reference; sets the ratio and reports PSNR/SSIM")
    p.add_argument("--out", required=True)
    p.add_argument("--prior")
    common(p)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("train-prior", help="masked-modeling training of a prior")
    p.add_argument("--kind", required=True, choices=["illumination", "noise"])
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_train_prior)

    p = sub.add_parser("eval", help="PSNR/SSIM over matching PNG files")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("hog", help="HOG descriptor of an image as a tensor file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_hog)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ImageFormatError, formats.FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
