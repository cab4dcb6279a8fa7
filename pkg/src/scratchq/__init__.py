"""Scratch intensity quantification and scratch detection pipeline.

Library + CLI for turning pressure-tablet traces into per-second scratch
power labels (0-600 mW), extracting DFT features from ring-sensor windows,
training MLP regressors/classifiers, and evaluating them with
leave-one-subject-out cross-validation and rank statistics.
"""

from .errors import ScratchqError
from .features import FeatureVector, MinMaxScaler, Task, dft, extract_features, single_sided_amplitude
from .labeling import ContactTrace, CriticalPoints, PowerLabel, label_block
from .mlp import MlpConfig, MlpModel, detection_config, intensity_config, train_model
from .evaluation import (FeatureDataset, LosoReport, StatTestResult, mae, mape,
                         run_loso, spearman, to_vas_linear, to_vas_sqrt,
                         wilcoxon_signed_rank)
from .signal_core import SensorWindow, TimeSeries, linear_interpolate, window_stream
from .synth import SyntheticScratchSpec, brute_force_power, gen_contact_trace, gen_sensor_window

__version__ = "0.1.0"
