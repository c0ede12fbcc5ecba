"""Training-set construction and benchmark loading.

High-resolution source images are augmented (right-angle rotations, mild
bicubic downscales), then each variant is turned into training pairs per
up-scale factor: modulo-crop so the dimensions divide the factor, bicubic
round trip down and back up, residual against the crop, and non-overlapping
41x41 tiling of both planes.  All scales land in one combined store so a
single model trains on the mixture.

Store layout (one directory):

    manifest.txt   '#'-prefixed header, then one tab-separated record per
                   sample: source filename, variant label, scale, patch index
                   (patch indices count row-major within one source/variant/
                   scale group)
    samples.bin    fixed-size records in manifest order: x then r as raw
                   little-endian float32 (patch*patch values each, row-major),
                   then one byte for the scale

Everything is deterministic: files are processed in sorted order and variants
in a fixed rotation-major order, so identical inputs produce byte-identical
stores.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .imaging import bicubic_resize, luminance, read_image
from .training import TrainSample

IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".pnm", ".bmp", ".jpg", ".jpeg"}

MANIFEST_NAME = "manifest.txt"
SAMPLES_NAME = "samples.bin"


@dataclass
class AugmentSpec:
    rotations: tuple[int, ...] = (90, 180, 270)
    downscale_factors: tuple[float, ...] = (0.9, 0.8, 0.7, 0.6)
    rotate: bool = True
    downscale: bool = True
    # downscaled variants smaller than this on either side are dropped
    min_size: int = 41

    def __post_init__(self):
        for deg in self.rotations:
            if deg % 90 != 0:
                raise ValueError(f"rotations must be multiples of 90 degrees, got {deg}")
        for f in self.downscale_factors:
            if not 0.0 < f <= 1.0:
                raise ValueError(f"downscale factors must be in (0, 1], got {f}")


@dataclass
class PairSpec:
    scales: tuple[int, ...] = (2, 3, 4)
    patch_size: int = 41

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        for s in self.scales:
            if s < 2:
                raise ValueError(f"up-scale factors must be >= 2, got {s}")


class Variant(NamedTuple):
    label: str
    image: np.ndarray


def augment(img: np.ndarray, spec: AugmentSpec) -> list[Variant]:
    """All augmentation variants of one image, rotation-major.

    Rotations are exact pixel permutations.  Each rotation is emitted at
    factor 1.0 first and then at every configured downscale factor; a
    downscale whose floor-rounded size falls under ``spec.min_size`` on
    either side is skipped.
    """
    img = np.asarray(img, dtype=np.float64)
    rotations = (0,) + tuple(spec.rotations) if spec.rotate else (0,)
    factors = (1.0,) + tuple(spec.downscale_factors) if spec.downscale else (1.0,)
    variants = []
    for deg in rotations:
        rotated = np.rot90(img, (deg // 90) % 4)
        for f in factors:
            if f == 1.0:
                variants.append(Variant(f"rot{deg:03d}_ds100", rotated))
                continue
            out_h = int(rotated.shape[0] * f)
            out_w = int(rotated.shape[1] * f)
            if out_h < spec.min_size or out_w < spec.min_size:
                continue
            variants.append(Variant(f"rot{deg:03d}_ds{int(round(f * 100)):03d}", bicubic_resize(rotated, out_h, out_w)))
    return variants


def make_pairs(hr: np.ndarray, spec: PairSpec) -> list[TrainSample]:
    """Training samples from one high-resolution plane, all scales combined.

    Per scale: modulo-crop, bicubic down/up round trip, residual, then aligned
    non-overlapping tiling.  x + r reconstructs the crop up to float32
    rounding.
    """
    hr = np.asarray(hr, dtype=np.float64)
    p = spec.patch_size
    samples = []
    for scale in spec.scales:
        ch = hr.shape[0] - hr.shape[0] % scale
        cw = hr.shape[1] - hr.shape[1] % scale
        if ch < p or cw < p:
            continue
        crop = hr[:ch, :cw]
        lowres = bicubic_resize(crop, ch // scale, cw // scale)
        x = bicubic_resize(lowres, ch, cw)
        r = crop - x
        for py in range(ch // p):
            for px in range(cw // p):
                sl = np.s_[py * p : (py + 1) * p, px * p : (px + 1) * p]
                samples.append(TrainSample(x[sl].astype(np.float32), r[sl].astype(np.float32), scale))
    return samples


def list_image_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"image directory does not exist: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass
class BuildReport:
    store_dir: Path
    total_samples: int = 0
    samples_per_scale: dict[int, int] = field(default_factory=dict)
    images_used: int = 0
    warnings: list[str] = field(default_factory=list)


def build_training_set(dirs, out_dir, aug_spec: AugmentSpec, pair_spec: PairSpec, seed: int = 0) -> BuildReport:
    """Build the combined multi-scale sample store from raw image directories.

    Unreadable files are skipped with a warning; zero usable images is fatal.
    ``seed`` is recorded in the manifest header (generation itself is
    deterministic).
    """
    files = []
    for d in dirs:
        files.extend(list_image_files(d))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = BuildReport(store_dir=out_dir)

    manifest_lines = [
        f"# mssr-sample-store v1\tpatch_size={pair_spec.patch_size}\t"
        f"scales={','.join(str(s) for s in pair_spec.scales)}\tseed={seed}"
    ]
    with open(out_dir / SAMPLES_NAME, "wb") as store:
        for path in files:
            try:
                plane = luminance(read_image(path))
            except Exception as exc:  # decode failures are per-file, not fatal
                report.warnings.append(f"{path}: {exc}")
                continue
            report.images_used += 1
            for label, variant in augment(plane, aug_spec):
                counters: dict[int, int] = {}
                for sample in make_pairs(variant, pair_spec):
                    idx = counters.get(sample.scale, 0)
                    counters[sample.scale] = idx + 1
                    manifest_lines.append(f"{path.name}\t{label}\t{sample.scale}\t{idx}")
                    store.write(sample.x.astype("<f4").tobytes())
                    store.write(sample.r.astype("<f4").tobytes())
                    store.write(struct.pack("B", sample.scale))
                    report.total_samples += 1
                    report.samples_per_scale[sample.scale] = report.samples_per_scale.get(sample.scale, 0) + 1

    if report.images_used == 0:
        raise RuntimeError(f"no usable images found in {[str(d) for d in dirs]}")
    (out_dir / MANIFEST_NAME).write_text("\n".join(manifest_lines) + "\n")
    return report


def load_store(store_dir) -> list[TrainSample]:
    """Read every sample of a store back in manifest order."""
    store_dir = Path(store_dir)
    manifest = (store_dir / MANIFEST_NAME).read_text().splitlines()
    patch = None
    records = []
    for line in manifest:
        if line.startswith("#"):
            for token in line.split("\t"):
                if token.startswith("patch_size="):
                    patch = int(token.split("=", 1)[1])
            continue
        records.append(line.split("\t"))
    if patch is None:
        raise ValueError(f"{store_dir / MANIFEST_NAME}: missing patch_size header")

    plane_bytes = patch * patch * 4
    record_bytes = 2 * plane_bytes + 1
    blob = (store_dir / SAMPLES_NAME).read_bytes()
    if len(blob) != record_bytes * len(records):
        raise ValueError(
            f"{store_dir / SAMPLES_NAME}: {len(blob)} bytes does not match "
            f"{len(records)} manifest records of {record_bytes} bytes"
        )
    samples = []
    for i, rec in enumerate(records):
        base = i * record_bytes
        x = np.frombuffer(blob, "<f4", patch * patch, base).reshape(patch, patch)
        r = np.frombuffer(blob, "<f4", patch * patch, base + plane_bytes).reshape(patch, patch)
        scale = blob[base + 2 * plane_bytes]
        if int(rec[2]) != scale:
            raise ValueError(f"record {i}: manifest scale {rec[2]} != stored scale {scale}")
        samples.append(TrainSample(x.copy(), r.copy(), int(scale)))
    return samples


class BenchmarkPair(NamedTuple):
    name: str
    x: np.ndarray  # bicubic-interpolated LR luminance, full image
    y: np.ndarray  # ground-truth luminance, modulo-cropped


def load_benchmark(directory, scale: int, on_warning: Callable[[str], None] | None = None) -> list[BenchmarkPair]:
    """Full-image (x, y) luminance pairs for every image of a benchmark folder."""
    if scale not in (2, 3, 4):
        raise ValueError(f"scale must be one of 2, 3, 4, got {scale}")
    pairs = []
    for path in list_image_files(directory):
        try:
            y = luminance(read_image(path))
        except Exception as exc:
            if on_warning:
                on_warning(f"{path}: {exc}")
            continue
        ch = y.shape[0] - y.shape[0] % scale
        cw = y.shape[1] - y.shape[1] % scale
        y = y[:ch, :cw]
        x = bicubic_resize(bicubic_resize(y, ch // scale, cw // scale), ch, cw)
        pairs.append(BenchmarkPair(path.name, x, y))
    if not pairs:
        raise RuntimeError(f"no usable images in benchmark directory {directory}")
    return pairs
