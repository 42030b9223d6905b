"""Dual-branch training with bilateral mixup and class-wise temperature
scaling for long-tailed classification, with synthetic datasets and a CLI."""

from .augment import (MixCoefficients, MixedBatch, MixupConfig, bilateral_mix,
                      draw_coefficients, mixup_classic, sbn_mix)
from .datasets import (Dataset, Group, LongTailSpec, load_dataset,
                       make_gaussian_longtail, make_half_moons, save_dataset,
                       truncate_to_longtail)
from .evaluate import (BoundaryGrid, GroupedAccuracy, evaluate, export_boundary)
from .model import (DualBranchModel, NetworkSpec, SingleBranchModel,
                    TemperatureSchedule, dbn_loss, load_checkpoint,
                    save_checkpoint, sbn_forward_train, scaled_softmax,
                    temperatures)
from .numerics import ParamStore, SgdConfig, Tensor, backward, sgd_step
from .sampling import (Batch, BatchSpec, RebalancedSampler,
                       RebalancedSamplerConfig, UniformSampler,
                       sampler_distribution)
from .train import RunRecord, TrainConfig, sweep, train_run

__version__ = "0.1.0"
