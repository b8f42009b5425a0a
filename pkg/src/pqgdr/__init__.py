"""Wavelet power-quality indices and one-vs-one SVM classification of
synthetic single-phase voltage disturbances."""

from .freqsync import FrequencyEstimate, SyncedWaveform, estimate_frequency, synchronize
from .indices import Analysis, EventWindow, FeatureVector, ItdSeries, analyze, feature_vector
from .siggen import (
    ClassLabel,
    DisturbanceSpec,
    GeneratorConfig,
    LabeledDataset,
    SnrPolicy,
    add_noise,
    make_dataset,
    synthesize,
)
from .svm import SvmModel, SvmParams
from .waveform import DegenerateSignalError, ParameterError, Waveform
from .wmra import WmraDecomposition, band_rms, decompose

__version__ = "0.1.0"
