"""Multimodal attribution (KAAP) and a desk-scale hybrid fusion classifier."""

from .errors import ConfigError, NumericError, RejectedConfigurationError, ShapeError, VistaKaapError
from .kaap import (
    DEFAULT_K,
    AttributionMap,
    AttributionReport,
    KPWeights,
    ModalityImportance,
    explain,
    kaap_map,
    kp_value,
    marginal_contribution,
    modality_importance,
    select_target,
)
from .predictor import (
    CLASSES,
    InputSpec,
    ModalityMask,
    MultimodalSample,
    Predictor,
    ValueFunction,
    load_model,
    make_toy_model,
    predict,
    predict_masked,
    save_model,
)

__version__ = "0.1.0"
