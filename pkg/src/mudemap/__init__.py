"""MU-MIMO OFDM link simulator with a convolutional-attention neural demapper.

The package covers the whole chain: resource grid and pilot layout, a
correlated synthetic channel, QAM mapping and LDPC coding, the classical
nearest-pilot LMMSE receiver with a Gaussian demapper, a from-scratch
autodiff engine, the CvT/ResNet neural demappers, training, and a BER sweep
harness.
"""

from .channel import ChannelModelCfg, ChannelRealization, NoiseCfg
from .errors import ConfigurationError, TrainingDiverged
from .grid import GridDims, PilotPattern, REIndex, make_pilot_pattern, nearest_pilot
from .link import LinkConfig, make_link
from .modem import Constellation, qam_constellation
from .neuraldemap import CvTConfig, CvTDemapper, ResNetDemapper, build_model
from .rxchain import ChannelEstimate, EqualizedOutput
from .tensor import ParamStore, Tensor
from .training import DemapInput, TrainCfg, rate_estimate, train

__all__ = [
    "ChannelEstimate",
    "ChannelModelCfg",
    "ChannelRealization",
    "ConfigurationError",
    "Constellation",
    "CvTConfig",
    "CvTDemapper",
    "DemapInput",
    "EqualizedOutput",
    "GridDims",
    "LinkConfig",
    "NoiseCfg",
    "ParamStore",
    "PilotPattern",
    "REIndex",
    "ResNetDemapper",
    "Tensor",
    "TrainCfg",
    "TrainingDiverged",
    "build_model",
    "make_link",
    "make_pilot_pattern",
    "nearest_pilot",
    "qam_constellation",
    "rate_estimate",
    "train",
]

__version__ = "0.1.0"
