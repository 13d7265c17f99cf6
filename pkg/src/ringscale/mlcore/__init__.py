"""Dense fp64 math for the toy 3D-convolution model."""

from .conv import Conv3dSpec, FlopCount, conv3d_backward, conv3d_forward
from .data import synthetic_shower
from .model import (CONV_B, CONV_W, DENSE_B, DENSE_W, ModelParams, init_params, loss_and_grad, model_backward, model_forward_loss, predict,
                    zeros_like)
from .tensor import as_tensor, load_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes

__all__ = [
    "CONV_B", "CONV_W", "DENSE_B", "DENSE_W", "Conv3dSpec", "FlopCount", "ModelParams", "as_tensor", "conv3d_backward", "conv3d_forward",
    "init_params", "load_tensor", "loss_and_grad", "model_backward", "model_forward_loss", "predict",
    "save_tensor", "synthetic_shower", "tensor_from_bytes", "tensor_to_bytes", "zeros_like",
]
