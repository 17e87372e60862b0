from __future__ import annotations

from dataclasses import dataclass

from ..core import NUM_CLASSES


@dataclass
class ModelConfig:
    channels: int = 32
    dim: int = 16
    num_queries: int = 6
    num_layers: int = 2
    vocab: int = 64
    num_classes: int = NUM_CLASSES
    patch1: int = 4  # stem: stride-4 patch convolution -> 1/4 grid
    patch2: int = 2  # stage 2: stride-2 patch convolution -> 1/8 grid
    pos_freqs: int = 2  # fixed sin/cos positional channels per axis
    class_sharpness: float = 10.0  # softmax temperature^-1 over class maps
    absent_level: float = 0.0  # class-map value for classes no query claims
    query_cls_weight: float = 1.0
    task_text: str = "the task is semantic"
    init_tau: float = 0.07
    init_seed: int = 0

    @property
    def stride(self) -> int:
        return self.patch1 * self.patch2

    @property
    def pos_dim(self) -> int:
        return 4 * self.pos_freqs

    def validate(self):
        if self.num_queries < 2:
            raise ValueError("num_queries must be >= 2")
        if min(self.channels, self.dim, self.num_layers, self.vocab) < 1:
            raise ValueError("model sizes must be positive")
        if self.init_tau <= 0:
            raise ValueError("init_tau must be > 0")
        if not self.task_text.split():
            raise ValueError("task_text is empty")


@dataclass
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 20
    batch_size: int = 4
    min_tau: float = 1e-2
    seed: int = 0

    def validate(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must be in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
