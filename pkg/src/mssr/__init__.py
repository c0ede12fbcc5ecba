"""Multi-scale super-resolution toolkit.

A from-scratch numpy implementation of a residual multi-scale convolutional
network for single-image super-resolution: tensor primitives with manual
backpropagation, the fusion-block architecture, Adam training over mixed
x2/x3/x4 data, the bicubic/YCbCr/PSNR/SSIM imaging stack, and dataset
construction.  One trained model serves all three up-scale factors.
"""

from .dataset import AugmentSpec, PairSpec, augment, build_training_set, load_benchmark, load_store, make_pairs
from .imaging import (
    bicubic_resize,
    crop_border,
    luminance,
    psnr,
    read_image,
    rgb_to_ycbcr,
    ssim,
    write_image,
    ycbcr_to_rgb,
)
from .model import (
    FusionBlock,
    ModelFormatError,
    MssrModel,
    init_he,
    load_model,
    parameter_count,
    receptive_fields,
    save_model,
)
from .tensor_ops import (
    ContractViolation,
    ConvLayer,
    ShapeError,
    add,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
)
from .training import AdamState, TrainConfig, TrainSample, adam_step, evaluate_loss, loss_and_grad, lr_schedule, train

__version__ = "0.1.0"
