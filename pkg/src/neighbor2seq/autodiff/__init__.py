"""Minimal dense forward/backward engine for the two sequence heads."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import (GradientCheckError, grad_check, model_grad_check, numeric_grad,
                        relative_error)
from .ops import *  # noqa: F401,F403
from .optim import Adam
from .tensor import Parameter, glorot_uniform
