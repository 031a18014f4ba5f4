"""Small convolutional networks for x1/4 downscaling, decolorization and HDR
tone mapping, trained by matching the activations of a fixed loss network on
their input and output.
"""

from .autodiff import AdamState, Graph, Padding, adam_step, conv2d, nn_upsample, normalized_sq_distance, replicate3
from .baselines import decolorize_baseline, downscale_baseline, ssim
from .config import TaskConfig, load_config
from .imageio import load_hdr, load_image, luminance, save_hdr, save_image
from .lossnet import LossNetwork, extract_features, load_weights, perceptual_loss, random_lossnet, save_weights
from .pipelines import (
    TrainReport,
    apply,
    log_compress,
    render_display,
    tonemap_online,
    train_decolorizer,
    train_downscaler,
)
from .synthetic import isoluminant_probe, synthetic_corpus, synthetic_hdr
from .transformnets import TransformNet, build_net, forward, load_net, save_net

__version__ = "0.1.0"
