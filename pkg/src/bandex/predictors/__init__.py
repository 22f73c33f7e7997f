from .bundle import FORMAT_VERSION, ModelBundle, load_model, save_model
from .codebook import (
                       AssociativeCodebook,
                       codebook_associate,
                       codebook_predict,
                       lbg_train,
                       residual_vq_decode,
                       residual_vq_encode,
                       residual_vq_train,
)
from .mlp import MlpModel, TrainSchedule, TrainState, init_mlp, mlp_forward, mlp_gradient, mlp_train
from .predictor import (
                       Predictor,
                       fit_codebook,
                       fit_mlp,
                       fit_mlp_checked,
                       fit_regression,
                       prediction_error,
                       zero_predictor,
)
from .regression import RegressionModel, regression_fit, regression_predict

__all__ = [
                       "FORMAT_VERSION",
                       "AssociativeCodebook",
                       "MlpModel",
                       "ModelBundle",
                       "Predictor",
                       "RegressionModel",
                       "TrainSchedule",
                       "TrainState",
                       "codebook_associate",
                       "codebook_predict",
                       "fit_codebook",
                       "fit_mlp",
                       "fit_mlp_checked",
                       "fit_regression",
                       "init_mlp",
                       "lbg_train",
                       "load_model",
                       "mlp_forward",
                       "mlp_gradient",
                       "mlp_train",
                       "prediction_error",
                       "regression_fit",
                       "regression_predict",
                       "residual_vq_decode",
                       "residual_vq_encode",
                       "residual_vq_train",
                       "save_model",
                       "zero_predictor",
]
