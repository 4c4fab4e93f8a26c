"""Interpretable multi-horizon forecasting of publisher ad revenue.

Everything runs on a small float64 autodiff core (``revcast.tensor``); the
models are built from the layers in ``revcast.layers`` and verified against
finite differences and hand-composed oracles.
"""

__version__ = "0.1.0"


def __getattr__(name):
    # lazy re-exports so `import revcast` stays cheap
    if name in ("Tensor", "backward", "finite_diff_grad"):
        from . import tensor
        return getattr(tensor, name)
    if name in ("GeneratorSpec", "generate_panel", "seasonal_naive_forecast"):
        from . import synthgen
        return getattr(synthgen, name)
    if name in ("ModelConfig", "build_model", "load_checkpoint", "save_checkpoint"):
        from . import models
        return getattr(models, name)
    if name in ("TrainConfig", "train", "evaluate", "hparam_search"):
        from . import training
        return getattr(training, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
