"""Synthetic ad-revenue panel generator.

Revenue follows the identity revenue = clicks * CPC with clicks =
impressions * CTR. Impressions carry the short-term structure (weekly and
annual cycles, a shared per-category factor, AR(1) noise), while CTR and CPC
are slow mean-reverting processes, so week-scale revenue variability is
traffic-driven. One covariate (bounces by default) can be replaced with pure
noise to act as a known-uninformative distractor for importance checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .data import PublisherSeries, SeriesPanel
from .errors import ConfigError, ContractError

# Monday..Sunday log-traffic profile, zero mean so amplitude scales cleanly
WEEKLY_PROFILE = np.array([0.30, 0.35, 0.30, 0.20, 0.00, -0.55, -0.60])

MIN_DAYS = 89 + 7 + 1  # default lookback + horizon + 1

COUNTRY_POOL = ("US", "DE", "GB", "JP", "FR", "NL", "SE", "CH")


@dataclass(frozen=True)
class GeneratorSpec:
    n_publishers: int = 10
    n_categories: int = 3
    n_days: int = 730
    start_date: date = date(2018, 1, 1)
    base_log_traffic: float = 9.0
    base_spread: float = 0.8
    weekly_amplitude: float = 1.0
    annual_amplitude: float = 0.12
    category_strength: float = 0.8
    ar_coeff: float = 0.5
    weekly_ar_coeff: float = 0.3
    noise_std: float = 0.22
    ctr_base: float = 0.05
    ctr_std: float = 0.08
    cpc_base: float = 0.40
    cpc_std: float = 0.10
    zero_prob: float = 0.0
    distractor_column: str | None = "bounces"
    seed: int = 0

    def __post_init__(self):
        if self.n_publishers < 1 or self.n_categories < 1:
            raise ConfigError("need at least one publisher and one category")
        if self.n_days < MIN_DAYS:
            raise ConfigError(f"n_days must be at least {MIN_DAYS}, got {self.n_days}")
        if not 0.0 <= self.zero_prob <= 1.0:
            raise ConfigError(f"zero_prob must be in [0,1], got {self.zero_prob}")
        if not 0.0 <= self.category_strength <= 1.0:
            raise ConfigError(f"category_strength must be in [0,1], got {self.category_strength}")
        if not -1.0 < self.ar_coeff < 1.0:
            raise ConfigError(f"ar_coeff must be in (-1,1), got {self.ar_coeff}")
        if self.weekly_ar_coeff < 0 or abs(self.ar_coeff) + self.weekly_ar_coeff >= 1.0:
            raise ConfigError(
                f"need |ar_coeff| + weekly_ar_coeff < 1 for stationarity, got "
                f"{self.ar_coeff} and {self.weekly_ar_coeff}"
            )
        if not 0.0 < self.ctr_base < 1.0:
            raise ConfigError(f"ctr_base must be in (0,1), got {self.ctr_base}")
        if self.distractor_column not in (None, "bounces", "sessions", "page_views"):
            raise ConfigError(f"unsupported distractor column {self.distractor_column!r}")


def _ar1_path(rng: np.random.Generator, n: int, phi: float, stationary_std: float) -> np.ndarray:
    """Stationary AR(1) path with the requested marginal standard deviation."""
    path = np.empty(n)
    path[0] = rng.normal(0.0, stationary_std)
    innovation_std = stationary_std * np.sqrt(max(1.0 - phi * phi, 0.0))
    shocks = rng.normal(0.0, 1.0, size=n - 1) * innovation_std
    for t in range(1, n):
        path[t] = phi * path[t - 1] + shocks[t - 1]
    return path


def _seasonal_ar_path(rng: np.random.Generator, n: int, phi: float, phi_weekly: float,
                      std: float, burn_in: int = 56) -> np.ndarray:
    """AR path with lag-1 and lag-7 terms; deviations recur week over week.

    The innovation scale is an approximation of the stationary normalization,
    and a burn-in discards the zero-state transient.
    """
    if phi_weekly == 0.0:
        return _ar1_path(rng, n, phi, std)
    total = n + burn_in
    scale = std * np.sqrt(max(1.0 - phi * phi - phi_weekly * phi_weekly, 0.05))
    shocks = rng.normal(0.0, 1.0, size=total) * scale
    path = np.zeros(total)
    for t in range(total):
        lag1 = path[t - 1] if t >= 1 else 0.0
        lag7 = path[t - 7] if t >= 7 else 0.0
        path[t] = phi * lag1 + phi_weekly * lag7 + shocks[t]
    return path[burn_in:]


def _logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


def generate_panel(spec: GeneratorSpec, return_processes: bool = False):
    """Draw a full panel; identical specs produce bit-identical panels."""
    rng = np.random.default_rng(spec.seed)
    n, days = spec.n_publishers, spec.n_days
    dates = [spec.start_date + timedelta(days=t) for t in range(days)]
    dow = np.array([d.weekday() for d in dates])
    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=np.float64)
    weekly = spec.weekly_amplitude * WEEKLY_PROFILE[dow]
    annual = spec.annual_amplitude * np.sin(2.0 * np.pi * (doy - 1.0) / 365.0)

    bases = spec.base_log_traffic + spec.base_spread * rng.uniform(-1.0, 1.0, size=n)
    category_factors = np.stack([
        _ar1_path(rng, days, 0.85, 0.25) for _ in range(spec.n_categories)
    ])

    publishers = {}
    processes = {}
    for i in range(n):
        pid = f"P{i + 1:03d}"
        category = f"C{i % spec.n_categories + 1}"
        country = COUNTRY_POOL[i % len(COUNTRY_POOL)]
        noise = _seasonal_ar_path(rng, days, spec.ar_coeff, spec.weekly_ar_coeff, spec.noise_std)
        ctr = 1.0 / (1.0 + np.exp(-(_logit(spec.ctr_base) + _ar1_path(rng, days, 0.98, spec.ctr_std))))
        cpc = spec.cpc_base * np.exp(_ar1_path(rng, days, 0.98, spec.cpc_std))
        pv_ratio = 1.6 * np.exp(_ar1_path(rng, days, 0.95, 0.05))
        sess_ratio = 0.45 * np.exp(_ar1_path(rng, days, 0.95, 0.05))
        bounce_ratio = np.minimum(0.4 * np.exp(_ar1_path(rng, days, 0.95, 0.08)), 0.95)
        distractor_noise = np.round(rng.lognormal(mean=5.0, sigma=0.5, size=days))
        zero_mask = rng.random(days) < spec.zero_prob

        log_impressions = (bases[i] + weekly + annual
                           + spec.category_strength * category_factors[i % spec.n_categories]
                           + noise)
        impressions = np.round(np.exp(log_impressions))
        clicks = np.minimum(np.round(impressions * ctr), impressions)
        page_views = np.round(impressions * pv_ratio)
        sessions = np.round(impressions * sess_ratio)
        bounces = np.round(sessions * bounce_ratio)
        impressions[zero_mask] = 0.0
        clicks[zero_mask] = 0.0
        revenue = clicks * cpc

        metrics = {
            "revenue": revenue,
            "impressions": impressions,
            "clicks": clicks,
            "page_views": page_views,
            "sessions": sessions,
            "bounces": bounces,
        }
        if spec.distractor_column is not None:
            metrics[spec.distractor_column] = distractor_noise
        publishers[pid] = PublisherSeries(pid, country, category, spec.start_date, metrics)
        processes[pid] = {"ctr": ctr, "cpc": cpc}
    panel = SeriesPanel(publishers)
    if return_processes:
        return panel, processes
    return panel


def seasonal_naive_forecast(history, tau: int, period: int = 7) -> np.ndarray:
    """Repeat the value observed one period earlier: forecast[t] = history[-period + t mod period]."""
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 1 or len(history) < period:
        raise ContractError(
            f"seasonal naive needs at least {period} observations, got shape {history.shape}"
        )
    idx = len(history) - period + (np.arange(tau) % period)
    return history[idx].copy()
