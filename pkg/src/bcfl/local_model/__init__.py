from .capsule import CapsuleLayerSpec, capsule_forward, routing_softmax, squash
from .data import SyntheticDataset, SyntheticSpec, gen_synthetic
from .linear import (
    dataset_loss,
    evaluate_accuracy,
    init_weights,
    loss_and_grad,
    n_params,
    per_sample_loss,
    predict,
    train_local,
)

__all__ = [name for name in dir() if not name.startswith("_")]
