"""Cross-modal weighting network for RGB-D salient object detection.

numpy/numba implementation of the two-stream encoder, the three
depth-to-RGB / RGB-to-RGB weighting modules, the deeply supervised decoder,
the composite loss, the training protocol, and the saliency metric suite.
"""

from .core import (AblationSpec, FeatureMap, NetworkConfig, ResponseMap,
                   RGBDTriplet, ablation_from_name, expected_shapes)
from .backend import active_backend, set_backend
from .params import ParameterStore, init_parameters, layer_layout
from .network import forward, predict

__version__ = "0.1.0"

__all__ = [
    "AblationSpec",
    "FeatureMap",
    "NetworkConfig",
    "ParameterStore",
    "ResponseMap",
    "RGBDTriplet",
    "ablation_from_name",
    "active_backend",
    "expected_shapes",
    "forward",
    "init_parameters",
    "layer_layout",
    "predict",
    "set_backend",
    "__version__",
]
