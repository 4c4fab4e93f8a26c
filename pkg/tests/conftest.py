import sys
from datetime import timedelta
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from revcast import data as D
from revcast import synthgen as S
from revcast.models import ModelConfig, collate


def small_pipeline(seed=0, n_publishers=4, n_days=150, lookback=6, horizon=3,
                   category_mean=True, **spec_overrides):
    """Tiny end-to-end pipeline for model tests: synthetic panel -> windows."""
    spec = S.GeneratorSpec(
        n_publishers=n_publishers, n_categories=2, n_days=n_days, seed=seed,
        **spec_overrides,
    )
    panel = S.generate_panel(spec)
    train_end = spec.start_date + timedelta(days=int(n_days * 0.7))
    normalized, scalers = D.fit_transform(panel, train_end)
    if category_mean:
        normalized = D.add_category_mean(normalized)
    windows = D.make_windows(normalized, lookback=lookback, horizon=horizon)
    return windows, scalers, train_end


@pytest.fixture(scope="session")
def tiny_windows():
    windows, _, _ = small_pipeline()
    return windows


@pytest.fixture(scope="session")
def tiny_batch(tiny_windows):
    return collate(tiny_windows.samples[:8], tiny_windows.schema)


def tiny_config(kind, **overrides):
    defaults = dict(
        kind=kind, lookback=6, horizon=3, hidden_size=4, heads=2,
        dropout=0.0, layers=1, cat_embed_dim=2, static_embed_dim=2,
        nbeats_blocks=2, nbeats_width=8, n_samples=5,
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)
