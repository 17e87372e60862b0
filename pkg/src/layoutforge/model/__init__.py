"""Toy task-conditioned query segmenter with hand-derived backpropagation."""

from .checkpoint import CheckpointError, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .config import ModelConfig, OptimizerConfig
from .infer import infer, infer_batch
from .network import (
    DecodeOutput,
    FeaturePyramid,
    MaskPrediction,
    QuerySet,
    TaskToken,
    assign_labels,
    decode,
    embed_task,
    encode,
    init_queries,
    predict_masks,
)
from .objective import ObjectiveConfig, batch_objective
from .params import init_params
from .train import TrainingDiverged, train
