"""ReLU regression networks: model, training, random search and model files."""

from .hpo import (DELTA_RANGE, DEPTHS, L2_RANGE, LR_RANGE, WIDTHS, SearchFailedError,
                  SearchResult, Trial, hpo_search, hpo_search_arrays, sample_trial, split_three)
from .io import ModelFileError, load_model, model_from_dict, model_to_dict, save_model
from .model import DimensionError, MlpModel, forward, init_params, pre_activations
from .train import (Adam, DivergenceError, PlateauScheduler, TrainConfig, TrainResult,
                    data_loss, huber_grad, huber_loss, loss_and_grad, r2_score, stratified_split,
                    train, train_arrays, write_history)

__all__ = [
    "Adam", "DELTA_RANGE", "DEPTHS", "DimensionError", "DivergenceError", "L2_RANGE",
    "LR_RANGE", "MlpModel", "ModelFileError", "PlateauScheduler", "SearchFailedError",
    "SearchResult", "TrainConfig", "TrainResult", "Trial", "WIDTHS", "data_loss", "forward",
    "hpo_search", "hpo_search_arrays", "huber_grad", "huber_loss", "init_params", "load_model",
    "loss_and_grad", "model_from_dict", "model_to_dict", "pre_activations", "r2_score",
    "sample_trial", "save_model", "split_three", "stratified_split", "train", "train_arrays",
    "write_history",
]
