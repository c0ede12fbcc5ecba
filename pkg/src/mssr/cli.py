"""Command-line entry point: data preparation, training, inference, evaluation,
and the gradient-verification harness.

Exit codes: 0 success, 1 verification/quality failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import math
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset, gradcheck, imaging, model as model_mod, training
from .model import MssrModel, init_he, load_model, save_model
from .tensor_ops import ConvLayer, conv2d_backward, conv2d_forward, relu_backward, relu_forward

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _fmt(value: float) -> str:
    """Full-precision float formatting (round-trips exactly through float())."""
    return f"{value:.17g}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mssr",
        description="Multi-scale super-resolution: one model for x2/x3/x4 on the luminance channel.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("prepare-data", formatter_class=fmt, help="build the training sample store")
    p.add_argument("hr_dirs", nargs="+", help="directories of high-resolution source images")
    p.add_argument("--out", required=True, help="output store directory")
    p.add_argument("--scales", default="2,3,4", help="comma-separated up-scale factors")
    p.add_argument("--patch-size", type=int, default=41, help="side of the square training patches")
    p.add_argument("--no-augment", action="store_true", help="disable rotations and downscale variants")
    p.add_argument("--seed", type=int, default=0, help="recorded in the manifest header")

    p = sub.add_parser("train", formatter_class=fmt, help="train on a prepared sample store")
    p.add_argument("store", help="sample store directory from prepare-data")
    p.add_argument("--out", required=True, help="run directory for checkpoints and the CSV log")
    p.add_argument("--epochs", type=int, default=100, help="total training epochs")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4, help="initial learning rate")
    p.add_argument("--lr-drop-epoch", type=int, default=80, help="epoch at which lr is divided by 10")
    p.add_argument("--beta1", type=float, default=0.9, help="first-moment decay (the momentum setting)")
    p.add_argument("--beta2", type=float, default=0.999, help="second-moment decay")
    p.add_argument("--epsilon", type=float, default=1e-8, help="denominator stabilizer")
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0, help="seeds initialization and shuffling")
    p.add_argument("--width", type=int, default=64, help="channel width of every hidden layer")
    p.add_argument("--long-depth", type=int, default=9, help="layers per block on the long path")
    p.add_argument("--short-depth", type=int, default=2, help="shared layers forming the short path")
    p.add_argument("--recon-depth", type=int, default=2, help="reconstruction layers")
    p.add_argument("--no-timing", action="store_true", help="write 0.0 wall-times for reproducible logs")

    p = sub.add_parser("infer", formatter_class=fmt, help="super-resolve one image")
    p.add_argument("model", help="model file")
    p.add_argument("input", help="input image (PNG/PGM/PPM)")
    p.add_argument("output", help="output image path")
    p.add_argument("--scale", type=int, choices=(2, 3, 4), required=True)

    p = sub.add_parser("evaluate", formatter_class=fmt, help="PSNR/SSIM over a benchmark folder")
    p.add_argument("model", help="model file")
    p.add_argument("benchmark", help="directory of high-resolution benchmark images")
    p.add_argument("--scale", type=int, choices=(2, 3, 4), required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--no-timing", action="store_true", help="write 0.0 wall-times for reproducible CSVs")

    p = sub.add_parser("grad-check", formatter_class=fmt, help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-bug", choices=("none", "bias", "weight"), default="none",
                   help="perturb one analytic gradient to prove the harness catches it")
    return parser


# ---- subcommands ----


def cmd_prepare_data(args) -> int:
    for d in args.hr_dirs:
        if not Path(d).is_dir():
            print(f"error: image directory does not exist: {d}", file=sys.stderr)
            return EXIT_USAGE
    scales = tuple(int(s) for s in args.scales.split(","))
    aug = dataset.AugmentSpec(rotate=not args.no_augment, downscale=not args.no_augment,
                              min_size=args.patch_size)
    pairs = dataset.PairSpec(scales=scales, patch_size=args.patch_size)
    report = dataset.build_training_set(args.hr_dirs, args.out, aug, pairs, seed=args.seed)
    for w in report.warnings:
        print(f"warning: skipped {w}", file=sys.stderr)
    print(f"prepared {report.total_samples} samples from {report.images_used} images -> {report.store_dir}")
    for scale in sorted(report.samples_per_scale):
        print(f"  scale x{scale}: {report.samples_per_scale[scale]} samples")
    if report.warnings:
        print(f"  ({len(report.warnings)} files skipped)")
    return EXIT_OK


def cmd_train(args) -> int:
    samples = dataset.load_store(args.store)
    config = training.TrainConfig(
        batch_size=args.batch_size,
        initial_lr=args.lr,
        # for runs shorter than the drop epoch the drop simply never happens
        lr_drop_epoch=min(args.lr_drop_epoch, args.epochs),
        total_epochs=args.epochs,
        beta1=args.beta1,
        beta2=args.beta2,
        epsilon=args.epsilon,
        weight_decay=args.weight_decay,
        seed=args.seed,
        timing=not args.no_timing,
    )
    net = MssrModel(args.long_depth, args.short_depth, args.recon_depth, args.width)
    init_he(net, args.seed)
    print(
        f"mssr train: depths long={net.long_depth} short={net.short_depth} recon={net.recon_depth} "
        f"width={net.width} | lr={config.initial_lr:g} batch={config.batch_size} "
        f"epochs={config.total_epochs} lr-drop={config.lr_drop_epoch} "
        f"beta1={config.beta1:g} beta2={config.beta2:g} weight-decay={config.weight_decay:g} "
        f"seed={config.seed} | {len(samples)} samples"
    )
    report = training.train(net, samples, config, args.out)
    for scale, loss in sorted(report.final_scale_losses.items()):
        print(f"final loss scale x{scale}: {loss:.6g}")
    print(f"log: {report.log_path}")
    return EXIT_OK


def _predict_residual(net: MssrModel, plane: np.ndarray) -> np.ndarray:
    tensor = np.ascontiguousarray(plane, dtype=np.float32)[None, None, :, :]
    return net.forward(tensor)[0, 0].astype(np.float64)


def cmd_infer(args) -> int:
    net = load_model(args.model)
    img = imaging.read_image(args.input)
    if img.ndim == 2:
        h, w = img.shape
        x = imaging.bicubic_resize(img, h * args.scale, w * args.scale)
        restored = np.clip(x + _predict_residual(net, x), 0.0, 1.0)
        imaging.write_image(args.output, restored)
    else:
        h, w = img.shape[:2]
        y, cb, cr = imaging.rgb_to_ycbcr(img)
        out_h, out_w = h * args.scale, w * args.scale
        y_up = imaging.bicubic_resize(y, out_h, out_w)
        restored_y = y_up + _predict_residual(net, y_up)
        # chroma carries little detail; plain bicubic matches the luminance-only protocol
        cb_up = imaging.bicubic_resize(cb, out_h, out_w)
        cr_up = imaging.bicubic_resize(cr, out_h, out_w)
        rgb = np.clip(imaging.ycbcr_to_rgb(restored_y, cb_up, cr_up), 0.0, 1.0)
        imaging.write_image(args.output, rgb)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    net = load_model(args.model)
    pairs = dataset.load_benchmark(args.benchmark, args.scale,
                                   on_warning=lambda m: print(f"warning: skipped {m}", file=sys.stderr))
    border = args.scale  # SRCNN-convention crop
    rows = []
    for name, x, y in pairs:
        if not args.no_timing:
            times = []
            for _ in range(3):
                started = time.perf_counter()
                residual = _predict_residual(net, x)
                times.append(time.perf_counter() - started)
            seconds = statistics.median(times)
        else:
            residual = _predict_residual(net, x)
            seconds = 0.0
        restored = x + residual
        y_c = imaging.crop_border(y, border)
        model_c = imaging.crop_border(restored, border)
        bicubic_c = imaging.crop_border(x, border)
        rows.append(
            {
                "image": name,
                "psnr_model": imaging.psnr(model_c, y_c),
                "ssim_model": imaging.ssim(model_c, y_c),
                "psnr_bicubic": imaging.psnr(bicubic_c, y_c),
                "ssim_bicubic": imaging.ssim(bicubic_c, y_c),
                "seconds": seconds,
            }
        )

    columns = ["psnr_model", "ssim_model", "psnr_bicubic", "ssim_bicubic", "seconds"]
    average = {"image": "average"}
    for col in columns:
        average[col] = sum(r[col] for r in rows) / len(rows)

    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image", "scale"] + columns)
        for r in rows + [average]:
            writer.writerow([r["image"], args.scale] + [_fmt(r[c]) for c in columns])

    print(f"evaluated {len(rows)} images at x{args.scale} (border crop {border}px)")
    print(f"  model:   PSNR {average['psnr_model']:.4f} dB  SSIM {average['ssim_model']:.6f}")
    print(f"  bicubic: PSNR {average['psnr_bicubic']:.4f} dB  SSIM {average['ssim_bicubic']:.6f}")
    print(f"wrote {out_path}")
    return EXIT_OK


def _conv_primitive_error(rng) -> float:
    layer = ConvLayer(2, 3, dtype=np.float64)
    layer.weights[...] = rng.normal(0.0, 0.5, layer.weights.shape)
    layer.bias[...] = rng.normal(0.0, 0.5, layer.bias.shape)
    x = rng.normal(0.0, 1.0, (1, 2, 5, 5))

    out = conv2d_forward(x, layer)
    layer.reset_gradients()
    grad_in = conv2d_backward(x, layer, out)
    analytic = np.concatenate([layer.grad_weights.ravel(), layer.grad_bias, grad_in.ravel()])

    nw, nb = layer.weights.size, layer.bias.size
    shapes = (layer.weights.shape, x.shape)

    def loss(vec):
        probe = ConvLayer(2, 3, dtype=np.float64)
        probe.weights[...] = vec[:nw].reshape(shapes[0])
        probe.bias[...] = vec[nw : nw + nb]
        probe_x = vec[nw + nb :].reshape(shapes[1])
        o = conv2d_forward(probe_x, probe)
        return 0.5 * float(np.sum(o * o))

    theta = np.concatenate([layer.weights.ravel(), layer.bias, x.ravel()])
    return gradcheck.check_function_gradients(loss, theta, analytic)


def _relu_primitive_error(rng) -> float:
    x = rng.normal(0.0, 1.0, (1, 3, 4, 4))
    x += np.sign(x) * 2e-3  # keep every coordinate clear of the kink
    out = relu_forward(x)
    analytic = relu_backward(x, out).ravel()

    def loss(vec):
        o = relu_forward(vec.reshape(x.shape))
        return 0.5 * float(np.sum(o * o))

    return gradcheck.check_function_gradients(loss, x.ravel(), analytic)


def _trainer_loss_error(rng) -> float:
    net = MssrModel(long_depth=3, short_depth=1, recon_depth=2, width=4, dtype=np.float64)
    init_he(net, int(rng.integers(1 << 30)))
    batch = [
        training.TrainSample(
            rng.uniform(0.0, 1.0, (8, 8)).astype(np.float64),
            rng.uniform(-0.05, 0.05, (8, 8)).astype(np.float64),
            scale,
        )
        for scale in (2, 3)
    ]
    return gradcheck.check_loss_gradients(net, batch).max_rel_error


def cmd_grad_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    tolerance = gradcheck.DEFAULT_TOLERANCE
    print(f"grad-check: seed={args.seed} step={gradcheck.DEFAULT_STEP:g} tolerance={tolerance:g} (float64)")

    results: list[tuple[str, float]] = []
    results.append(("tensor/conv2d", _conv_primitive_error(rng)))
    results.append(("tensor/relu", _relu_primitive_error(rng)))

    toy = MssrModel(long_depth=3, short_depth=1, recon_depth=2, width=4, dtype=np.float64)
    init_he(toy, args.seed)
    x = rng.normal(0.0, 1.0, (1, 1, 6, 6))

    perturbation = None
    if args.inject_bug != "none":
        offset = toy.block1.layers[0].weights.size if args.inject_bug == "bias" else 0

        def perturbation(flat, _offset=offset):
            flat = flat.copy()
            flat[_offset] += 1.0
            return flat

    model_result = gradcheck.check_model_gradients(toy, x, grad_perturbation=perturbation)
    for name, err in model_result.per_layer.items():
        results.append((f"model/{name}", err))
    if model_result.n_excluded:
        print(f"  note: {model_result.n_excluded}/{model_result.n_excluded + model_result.n_checked} "
              f"coordinates skipped (finite difference straddles a ReLU kink)")

    results.append(("trainer/loss", _trainer_loss_error(rng)))

    worst = 0.0
    for name, err in results:
        print(f"  {name:<22s} max rel err {err:.3e}")
        worst = max(worst, err)
    if worst < tolerance:
        print(f"grad-check: PASS (overall max {worst:.3e} < {tolerance:g})")
        return EXIT_OK
    print(f"grad-check: FAIL (overall max {worst:.3e} >= {tolerance:g})")
    return EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    handlers = {
        "prepare-data": cmd_prepare_data,
        "train": cmd_train,
        "infer": cmd_infer,
        "evaluate": cmd_evaluate,
        "grad-check": cmd_grad_check,
    }
    try:
        return handlers[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
