from acmv.nn.checkpoint import assign_params, load_checkpoint, save_checkpoint
from acmv.nn.gradcheck import grad_check
from acmv.nn.layers import Dense, Module, dense, embedding_lookup, glorot_uniform, softmax
from acmv.nn.optim import AdamState, adam_step, clip_grad_norm
from acmv.nn.tensor import Param, Tape, Tensor, no_tape

__all__ = [
    "AdamState",
    "Dense",
    "Module",
    "Param",
    "Tape",
    "Tensor",
    "adam_step",
    "assign_params",
    "clip_grad_norm",
    "dense",
    "embedding_lookup",
    "glorot_uniform",
    "grad_check",
    "load_checkpoint",
    "no_tape",
    "save_checkpoint",
    "softmax",
]
