"""Data pipeline: CSV ingestion, filtering, scaling, features, windows, splits.

A panel holds per-publisher daily series over a contiguous date range. The
pipeline is: ingest -> filter_publishers -> fit_transform (log1p then
per-publisher standardization, statistics from the training range only) ->
add_category_mean -> make_windows -> chrono_split. Windows whose target range
straddles a split boundary are dropped so target dates never leak across
splits.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from datetime import date, timedelta

import numpy as np

from .errors import ContractError, DataError

METRIC_COLUMNS = ("revenue", "impressions", "clicks", "page_views", "sessions", "bounces")
CSV_COLUMNS = ("date", "publisher_id", "country", "category") + METRIC_COLUMNS
CATEGORY_MEAN_COLUMN = "category_mean_revenue"


@dataclass
class PublisherSeries:
    publisher_id: str
    country: str
    category: str
    start_date: date
    metrics: dict

    @property
    def n_days(self) -> int:
        return len(self.metrics["revenue"])

    def dates(self):
        return [self.start_date + timedelta(days=i) for i in range(self.n_days)]

    def date_index(self, day: date) -> int:
        return (day - self.start_date).days


@dataclass
class SeriesPanel:
    publishers: dict
    normalized: bool = False

    def __iter__(self):
        return iter(self.publishers.values())

    def __len__(self):
        return len(self.publishers)

    def date_bounds(self):
        starts = [p.start_date for p in self]
        ends = [p.start_date + timedelta(days=p.n_days - 1) for p in self]
        return min(starts), max(ends)


def ingest_csv(path) -> SeriesPanel:
    """Parse the canonical CSV schema into a panel, validating as it goes."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise DataError(f"missing column(s) {missing} in {path}")
        unknown = [c for c in header if c not in CSV_COLUMNS]
        if unknown:
            raise DataError(f"unknown column(s) {unknown} in {path}")
        rows = {}
        statics = {}
        for line_no, row in enumerate(reader, start=2):
            try:
                day = date.fromisoformat(row["date"])
            except ValueError:
                raise DataError(f"row {line_no}: unparseable date {row['date']!r}") from None
            pid = row["publisher_id"]
            values = {}
            for col in METRIC_COLUMNS:
                try:
                    v = float(row[col])
                except (TypeError, ValueError):
                    raise DataError(f"row {line_no}: unparseable value {row[col]!r} in {col}") from None
                if not np.isfinite(v) or v < 0:
                    raise DataError(f"row {line_no}: negative or non-finite {col} ({row[col]})")
                values[col] = v
            static = (row["country"], row["category"])
            if pid in statics and statics[pid] != static:
                raise DataError(f"row {line_no}: inconsistent country/category for publisher {pid}")
            statics[pid] = static
            per_pub = rows.setdefault(pid, {})
            if day in per_pub:
                raise DataError(f"row {line_no}: duplicate row for publisher {pid} on {day}")
            per_pub[day] = values
    publishers = {}
    for pid, per_pub in rows.items():
        days = sorted(per_pub)
        for prev, nxt in zip(days, days[1:]):
            if (nxt - prev).days != 1:
                raise DataError(
                    f"non-contiguous dates for publisher {pid}: gap between {prev} and {nxt}"
                )
        country, category = statics[pid]
        metrics = {
            col: np.array([per_pub[d][col] for d in days], dtype=np.float64)
            for col in METRIC_COLUMNS
        }
        publishers[pid] = PublisherSeries(pid, country, category, days[0], metrics)
    return SeriesPanel(publishers)


def _format_value(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def export_csv(panel: SeriesPanel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for pub in panel:
            for i, day in enumerate(pub.dates()):
                writer.writerow(
                    [day.isoformat(), pub.publisher_id, pub.country, pub.category]
                    + [_format_value(pub.metrics[col][i]) for col in METRIC_COLUMNS]
                )


def longest_zero_run(values: np.ndarray) -> int:
    longest = current = 0
    for v in values:
        current = current + 1 if v == 0.0 else 0
        longest = max(longest, current)
    return longest


def filter_publishers(panel: SeriesPanel, max_zero_run: int = 10,
                      min_avg_revenue: float = 5.0) -> SeriesPanel:
    """Keep publishers whose longest zero-revenue run is <= max_zero_run and
    whose mean daily revenue is strictly greater than min_avg_revenue."""
    kept = {}
    for pub in panel:
        revenue = pub.metrics["revenue"]
        if longest_zero_run(revenue) <= max_zero_run and revenue.mean() > min_avg_revenue:
            kept[pub.publisher_id] = pub
    if not kept:
        warnings.warn("filter_publishers removed every publisher")
    return SeriesPanel(kept, normalized=panel.normalized)


@dataclass
class ScalerMap:
    """Per-publisher, per-metric (mean, std) of log1p values on the training range."""

    stats: dict

    def pair(self, publisher_id: str, metric: str = "revenue"):
        if publisher_id not in self.stats:
            raise KeyError(f"no scaler fitted for publisher {publisher_id!r}")
        return self.stats[publisher_id][metric]

    def inverse_revenue(self, publisher_id: str, z):
        mean, std = self.pair(publisher_id, "revenue")
        return inverse_transform(z, (mean, std))


def fit_transform(panel: SeriesPanel, train_end_date: date):
    """Normalize each metric per publisher: z = (log1p(v) - mean) / std.

    Statistics come from dates strictly before ``train_end_date``. Publishers
    with a zero-variance metric on the training range are dropped with a
    warning.
    """
    if panel.normalized:
        raise ContractError("panel is already normalized")
    publishers = {}
    stats = {}
    for pub in panel:
        n_train = (train_end_date - pub.start_date).days
        n_train = min(max(n_train, 0), pub.n_days)
        if n_train < 2:
            raise DataError(
                f"publisher {pub.publisher_id} has {n_train} training days, needs at least 2"
            )
        pub_stats = {}
        transformed = {}
        degenerate = None
        for col, values in pub.metrics.items():
            logged = np.log1p(values)
            mean = float(logged[:n_train].mean())
            std = float(logged[:n_train].std())
            if std == 0.0:
                degenerate = col
                break
            pub_stats[col] = (mean, std)
            transformed[col] = (logged - mean) / std
        if degenerate is not None:
            warnings.warn(
                f"dropping publisher {pub.publisher_id}: zero variance in {degenerate} "
                "on the training range"
            )
            continue
        publishers[pub.publisher_id] = replace(pub, metrics=transformed)
        stats[pub.publisher_id] = pub_stats
    return SeriesPanel(publishers, normalized=True), ScalerMap(stats)


def inverse_transform(z, scaler) -> np.ndarray:
    """Map normalized values back to the original scale, floored at zero."""
    mean, std = scaler
    return np.maximum(np.expm1(np.asarray(z, dtype=np.float64) * std + mean), 0.0)


def add_category_mean(panel: SeriesPanel, include_self: bool = True) -> SeriesPanel:
    """Attach the per-(category, date) mean of normalized revenue as a covariate."""
    if not panel.normalized:
        raise ContractError("category mean is defined on the normalized panel")
    sums = {}
    counts = {}
    for pub in panel:
        for i, day in enumerate(pub.dates()):
            key = (pub.category, day)
            sums[key] = sums.get(key, 0.0) + float(pub.metrics["revenue"][i])
            counts[key] = counts.get(key, 0) + 1
    publishers = {}
    for pub in panel:
        values = np.zeros(pub.n_days)
        for i, day in enumerate(pub.dates()):
            key = (pub.category, day)
            if include_self:
                values[i] = sums[key] / counts[key]
            elif counts[key] > 1:
                own = float(pub.metrics["revenue"][i])
                values[i] = (sums[key] - own) / (counts[key] - 1)
        metrics = dict(pub.metrics)
        metrics[CATEGORY_MEAN_COLUMN] = values
        publishers[pub.publisher_id] = replace(pub, metrics=metrics)
    return SeriesPanel(publishers, normalized=True)


def calendar_features(dates):
    """day_of_week (Monday=0) and day_of_year scaled to [0,1], clamped on day 366."""
    dow = np.array([d.weekday() for d in dates], dtype=np.int64)
    doy = np.array([min((d.timetuple().tm_yday - 1) / 365.0, 1.0) for d in dates])
    return dow, doy


@dataclass
class FeatureSchema:
    """Assigns every model input to exactly one role."""

    target: str = "revenue"
    unknown_reals: tuple = ("impressions", "clicks", "page_views", "sessions", "bounces")
    known_reals: tuple = ("day_of_year",)
    known_cats: tuple = (("day_of_week", 7),)
    static_cats: tuple = ()
    vocabs: dict = field(default_factory=dict)

    @property
    def encoder_columns(self):
        return ((self.target,) + self.unknown_reals + self.known_reals
                + tuple(name for name, _ in self.known_cats))

    @property
    def decoder_columns(self):
        return self.known_reals + tuple(name for name, _ in self.known_cats)

    @property
    def n_encoder_reals(self):
        return 1 + len(self.unknown_reals) + len(self.known_reals)

    def describe(self) -> dict:
        return {
            "target": self.target,
            "unknown_reals": list(self.unknown_reals),
            "known_reals": list(self.known_reals),
            "known_cats": [[n, v] for n, v in self.known_cats],
            "static_cats": [[n, v] for n, v in self.static_cats],
            "vocabs": {k: list(v) for k, v in self.vocabs.items()},
        }


def build_schema(panel: SeriesPanel) -> FeatureSchema:
    publisher_ids = [p.publisher_id for p in panel]
    countries = sorted({p.country for p in panel})
    categories = sorted({p.category for p in panel})
    has_category_mean = all(CATEGORY_MEAN_COLUMN in p.metrics for p in panel)
    unknown = METRIC_COLUMNS[1:] + ((CATEGORY_MEAN_COLUMN,) if has_category_mean else ())
    return FeatureSchema(
        unknown_reals=unknown,
        static_cats=(
            ("publisher_id", len(publisher_ids)),
            ("country", len(countries)),
            ("category", len(categories)),
        ),
        vocabs={
            "publisher_id": publisher_ids,
            "country": countries,
            "category": categories,
        },
    )


@dataclass
class WindowSample:
    publisher_id: str
    statics: np.ndarray
    encoder: np.ndarray
    decoder: np.ndarray
    target: np.ndarray
    anchor: date


@dataclass
class WindowSet:
    samples: list
    schema: FeatureSchema
    lookback: int
    horizon: int

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def make_windows(panel: SeriesPanel, lookback: int = 89, horizon: int = 7,
                 schema: FeatureSchema | None = None) -> WindowSet:
    """Slide a (lookback, horizon) window one day at a time over each publisher.

    A publisher with T days yields max(0, T - (lookback + horizon) + 1)
    windows; the anchor is the first forecast day.
    """
    if lookback < 1 or horizon < 1:
        raise ContractError(f"lookback and horizon must be positive, got {lookback}, {horizon}")
    if schema is None:
        schema = build_schema(panel)
    vocab_index = {
        name: {value: i for i, value in enumerate(schema.vocabs[name])}
        for name in schema.vocabs
    }
    samples = []
    for pub in panel:
        days = pub.dates()
        dow, doy = calendar_features(days)
        columns = [pub.metrics[schema.target]]
        for name in schema.unknown_reals:
            if name not in pub.metrics:
                raise DataError(f"publisher {pub.publisher_id} lacks covariate {name!r}")
            columns.append(pub.metrics[name])
        columns.append(doy)
        columns.append(dow.astype(np.float64))
        features = np.stack(columns, axis=1)
        decoder_features = np.stack([doy, dow.astype(np.float64)], axis=1)
        try:
            statics = np.array([
                vocab_index["publisher_id"][pub.publisher_id],
                vocab_index["country"][pub.country],
                vocab_index["category"][pub.category],
            ], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"value {exc} not present in the schema vocabulary") from None
        total = pub.n_days
        for anchor_idx in range(lookback, total - horizon + 1):
            samples.append(WindowSample(
                publisher_id=pub.publisher_id,
                statics=statics,
                encoder=features[anchor_idx - lookback:anchor_idx].copy(),
                decoder=decoder_features[anchor_idx:anchor_idx + horizon].copy(),
                target=pub.metrics[schema.target][anchor_idx:anchor_idx + horizon].copy(),
                anchor=days[anchor_idx],
            ))
    return WindowSet(samples, schema, lookback, horizon)


def chrono_split(windows: WindowSet, val_start: date, test_start: date):
    """Chronological train/val/test split by anchor date.

    A window trains only if its entire target range precedes ``val_start``;
    windows straddling a boundary are dropped.
    """
    if val_start >= test_start:
        raise ContractError(f"val_start {val_start} must precede test_start {test_start}")
    horizon = windows.horizon
    train, val, test = [], [], []
    for sample in windows:
        last_target_day = sample.anchor + timedelta(days=horizon - 1)
        if last_target_day < val_start:
            train.append(sample)
        elif sample.anchor >= test_start:
            test.append(sample)
        elif sample.anchor >= val_start and last_target_day < test_start:
            val.append(sample)
    for name, part in (("train", train), ("val", val), ("test", test)):
        if not part:
            warnings.warn(f"chronological split produced an empty {name} set")
    make = lambda part: WindowSet(part, windows.schema, windows.lookback, horizon)
    return make(train), make(val), make(test)
