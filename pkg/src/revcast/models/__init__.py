from .base import (
    Batch,
    ForecastOutput,
    Forecaster,
    ModelConfig,
    MODEL_KINDS,
    build_model,
    collate,
    ensure_schema_match,
    load_checkpoint,
    save_checkpoint,
)
from .deepar import DeepArForecaster
from .interpret import (
    VariableImportance,
    extract_attention_profile,
    extract_variable_importance,
)
from .lstm import LstmForecaster
from .nbeats import NBeatsForecaster
from .seq2seq import Seq2SeqForecaster
from .tft import TemporalFusionTransformer

__all__ = [
    "Batch",
    "DeepArForecaster",
    "ForecastOutput",
    "Forecaster",
    "LstmForecaster",
    "MODEL_KINDS",
    "ModelConfig",
    "NBeatsForecaster",
    "Seq2SeqForecaster",
    "TemporalFusionTransformer",
    "VariableImportance",
    "build_model",
    "collate",
    "ensure_schema_match",
    "extract_attention_profile",
    "extract_variable_importance",
    "load_checkpoint",
    "save_checkpoint",
]
