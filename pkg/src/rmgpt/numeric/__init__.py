"""Differentiable numeric substrate: tape autodiff, FFT, FLOP accounting."""
from . import counting
from .counting import OpCounter
from .fft import fft, is_power_of_two, rfft
from .flops import FlopReport, count_flops, factored_score_macs, joint_score_macs
from .gradcheck import grad_check
from .tensor import (NonFiniteError, Tape, Tensor, add, amin, as_tensor, backward, broadcast_to,
                     clip, concat, div, exp, gelu, getitem, layer_norm, log, log_softmax, matmul,
                     mean, mul, norm, reshape, softmax, softmax_attention, square, stack, sub,
                     swap_last, transpose, tsum)

__all__ = [
    "counting", "OpCounter", "fft", "rfft", "is_power_of_two", "FlopReport", "count_flops",
    "factored_score_macs", "joint_score_macs", "grad_check", "NonFiniteError", "Tape", "Tensor",
    "add", "amin", "as_tensor", "backward", "broadcast_to", "clip", "concat", "div", "exp", "gelu",
    "getitem", "layer_norm", "log", "log_softmax", "matmul", "mean", "mul", "norm", "reshape",
    "softmax", "softmax_attention", "square", "stack", "sub", "swap_last", "transpose", "tsum",
]
