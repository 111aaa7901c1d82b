from .tensor_io import write_tensor, read_tensor
from .batching import as_batch, restore_rank
from .convolution import conv2d, conv2d_backward, conv2d_output_size
from .pooling import avg_pool2d, max_pool2d, avg_pool2d_backward, max_pool2d_backward, pooled_size
from .softmax import softmax, softmax_flat, sigmoid
from .resize import resize_bilinear, resize_bilinear_backward
from .linear import fully_connected
from .batch_norm import RunningStats, batch_norm_vec, batch_norm_backward
from .attention import attention_vector, fuse, equal_scale_weights
from .metrics import confusion_matrix, intersection_over_union, pixel_accuracy, segmentation_scores
from .netpbm import read_netpbm, write_ppm, write_pgm

__all__ = [
    "write_tensor",
    "read_tensor",
    "as_batch",
    "restore_rank",
    "conv2d",
    "conv2d_backward",
    "conv2d_output_size",
    "avg_pool2d",
    "max_pool2d",
    "avg_pool2d_backward",
    "max_pool2d_backward",
    "pooled_size",
    "softmax",
    "softmax_flat",
    "sigmoid",
    "resize_bilinear",
    "resize_bilinear_backward",
    "fully_connected",
    "RunningStats",
    "batch_norm_vec",
    "batch_norm_backward",
    "attention_vector",
    "fuse",
    "equal_scale_weights",
    "confusion_matrix",
    "intersection_over_union",
    "pixel_accuracy",
    "segmentation_scores",
    "read_netpbm",
    "write_ppm",
    "write_pgm"
]
