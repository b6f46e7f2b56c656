"""Learned low-rank mappings from a parameter to matrix operation results."""

from .errors import (ArgumentError, ConvergenceError, DimensionError, DomainError, FormatError, NeuMatCError,
                     NotPositiveDefiniteError, SingularMatrixError, SolverFailure, UnsupportedVersionError)
from .mlp import Activation, Adam, Mlp, init_mlp, lipschitz_certificate, mlp_forward, mlp_forward_batch
from .model import (NetConfig, NeuMatCModel, Op, OperationKind, ParamDomain, init_model, load_model, predict,
                    predict_batch, save_model)
from .tensor import mode3_apply, mode3_fold, mode3_unfold
from .training import SamplingMode, TrainConfig, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "Activation", "Adam", "Mlp", "init_mlp", "lipschitz_certificate", "mlp_forward", "mlp_forward_batch",
    "NetConfig", "NeuMatCModel", "Op", "OperationKind", "ParamDomain", "init_model", "load_model", "predict",
    "predict_batch", "save_model", "mode3_apply", "mode3_fold", "mode3_unfold",
    "SamplingMode", "TrainConfig", "TrainReport", "train",
    "NeuMatCError", "ArgumentError", "ConvergenceError", "DimensionError", "DomainError", "FormatError",
    "NotPositiveDefiniteError", "SingularMatrixError", "SolverFailure", "UnsupportedVersionError",
]
