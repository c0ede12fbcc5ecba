import numpy as np
import pytest

from mssr import imaging


def synthetic_plane(rng, h, w):
    """Smooth synthetic luminance content in [0.05, 0.95] (band-limited noise)."""
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w), dtype=np.float64)
    for _ in range(4):
        fy, fx = rng.uniform(0.02, 0.25, 2)
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
    img -= img.min()
    img /= img.max()
    return 0.05 + 0.9 * img


def synthetic_rgb(rng, h, w):
    return np.stack([synthetic_plane(rng, h, w) for _ in range(3)], axis=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fixture_corpus(tmp_path):
    """Five smooth PNG images of varied sizes, as a mini training corpus."""
    rng = np.random.default_rng(99)
    root = tmp_path / "corpus"
    root.mkdir()
    sizes = [(60, 60), (70, 55), (82, 82), (96, 64), (50, 88)]
    for i, (h, w) in enumerate(sizes):
        imaging.write_image(root / f"img{i:02d}.png", synthetic_plane(rng, h, w))
    return root, sizes


@pytest.fixture
def benchmark_dir(tmp_path):
    """Three-image benchmark fixture (divisible-friendly sizes, >= 32px)."""
    rng = np.random.default_rng(4321)
    root = tmp_path / "bench"
    root.mkdir()
    sizes = [(48, 48), (60, 36), (72, 60)]
    for i, (h, w) in enumerate(sizes):
        imaging.write_image(root / f"bench{i}.png", synthetic_plane(rng, h, w))
    return root, sizes
