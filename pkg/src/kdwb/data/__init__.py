"""Dataset ingestion, synthetic stimulus and preprocessing."""

from .dataset import Dataset, FormatError, one_hot
from .formats import (load_cifar10_bin, load_image_dir, load_mnist_dir, load_mnist_idx,
                      read_netpbm, save_image_dir, write_cifar10_bin, write_idx_images,
                      write_idx_labels, write_netpbm)
from .synth import (StimulusSpec, gen_gaussian_noise, gen_shapes, gen_uniform_noise,
                    render_shape)
from .transforms import (adapt_channels, adapt_to, mix_augment, preprocess,
                         resize_bilinear, to_grayscale)

__all__ = [
    "Dataset", "FormatError", "one_hot",
    "load_cifar10_bin", "load_image_dir", "load_mnist_dir", "load_mnist_idx", "read_netpbm",
    "save_image_dir", "write_cifar10_bin", "write_idx_images", "write_idx_labels", "write_netpbm",
    "StimulusSpec", "gen_gaussian_noise", "gen_shapes", "gen_uniform_noise", "render_shape",
    "adapt_channels", "adapt_to", "mix_augment", "preprocess", "resize_bilinear", "to_grayscale",
]
