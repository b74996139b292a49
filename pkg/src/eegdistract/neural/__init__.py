from .estimators import FCNClassifier, FCNLSTMClassifier, NeuralClassifier, ResNetClassifier
from .gradcheck import grad_check
from .layers import softmax_xent
from .models import KINDS, ModelSpec, NeuralModel, build_model
from .training import TrainConfig, TrainingDivergence, train_model

__all__ = [
    "FCNClassifier", "FCNLSTMClassifier", "KINDS", "ModelSpec", "NeuralClassifier", "NeuralModel",
    "ResNetClassifier", "TrainConfig", "TrainingDivergence", "build_model", "grad_check",
    "softmax_xent", "train_model",
]
