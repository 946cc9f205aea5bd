"""Daily data ingestion, the feature table and its preparation for the learners."""

from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from sklearn.model_selection import train_test_split as sk_train_test_split
from sklearn.preprocessing import StandardScaler

from ..core.errors import ConstantColumnError, DataError, DuplicateKeyError, InsufficientDataError
from ..core.io import read_table
from ..core.logging import StructuredLogger
from ..schemas.features import FEATURE_COLUMNS, TABLE_COLUMNS, TARGET_COLUMN, ConsolidatedTable, FeatureRow
from ..schemas.heston import CalibrationRecord
from ..schemas.market import MarketDay
from .calibrator import front_month, select_slice

OPTIONS_FILE = "options.csv"
INDEX_FILE = "index.csv"
FUTURES_FILE = "futures.csv"
FLOWS_FILE = "flows.csv"

OPTIONS_SCHEMA = {"date": "date", "expiry_date": "date", "strike": "float", "implied_vol": "float", "forward": "float"}
INDEX_SCHEMA = {"date": "date", "vstoxx": "float"}
FUTURES_SCHEMA = {"date": "date", "expiry_date": "date", "settlement_price": "float"}
FLOW_COLUMNS = [
    "pos_a", "pos_p", "pos_m",
    "pos_change_a", "pos_change_p", "pos_change_m",
    "trad_vol_a", "trad_vol_p", "trad_vol_m", "trad_vol_tot",
    "avg_fut_spd", "avg_fut_bid_sz", "avg_fut_ask_sz",
    "option_pos_a", "option_pos_p", "option_pos_m",
]
FLOWS_SCHEMA = {"date": "date", **{name: "float" for name in FLOW_COLUMNS}}

MIN_SPLIT_ROWS = 10
MIN_CORRELATION_ROWS = 3

logger = StructuredLogger("features")


@dataclass
class DailyData:
    days: List[MarketDay]
    flows: pd.DataFrame  # indexed by date
    dropped: Dict[date, str] = field(default_factory=dict)


def _check_unique(frame: pd.DataFrame, keys: List[str], file: str) -> None:
    duplicated = frame.duplicated(subset=keys, keep="first")
    if duplicated.any():
        row = frame[duplicated].iloc[0]
        key = ", ".join(f"{k}={row[k]}" for k in keys)
        raise DuplicateKeyError(f"{file}: duplicate key ({key})")


def load_daily_data(data_dir: Union[str, Path]) -> DailyData:
    """Read the four daily CSVs and join them by date.

    Days missing from any source, or whose option chain has no usable slice,
    are dropped with a warning.
    """
    data_dir = Path(data_dir)
    options = read_table(data_dir / OPTIONS_FILE, OPTIONS_SCHEMA)
    index = read_table(data_dir / INDEX_FILE, INDEX_SCHEMA)
    futures = read_table(data_dir / FUTURES_FILE, FUTURES_SCHEMA)
    flows = read_table(data_dir / FLOWS_FILE, FLOWS_SCHEMA)

    _check_unique(options, ["date", "expiry_date", "strike"], OPTIONS_FILE)
    _check_unique(index, ["date"], INDEX_FILE)
    _check_unique(futures, ["date", "expiry_date"], FUTURES_FILE)
    _check_unique(flows, ["date"], FLOWS_FILE)

    sources = {
        OPTIONS_FILE: set(options["date"]),
        INDEX_FILE: set(index["date"]),
        FUTURES_FILE: set(futures["date"]),
        FLOWS_FILE: set(flows["date"]),
    }
    all_dates = sorted(set().union(*sources.values()))
    dropped: Dict[date, str] = {}
    for d in all_dates:
        missing = [name for name, dates in sources.items() if d not in dates]
        if missing:
            dropped[d] = f"missing in {', '.join(missing)}"

    chains = {d: chain for d, chain in options.groupby("date", sort=True)}
    contracts = {d: rows for d, rows in futures.groupby("date", sort=True)}
    levels = dict(zip(index["date"], index["vstoxx"]))

    days: List[MarketDay] = []
    for d in all_dates:
        if d in dropped:
            continue
        try:
            smile = select_slice(chains[d], d)
            rows = contracts[d]
            expiry = front_month(rows["expiry_date"], d)
            price = float(rows.loc[rows["expiry_date"] == expiry, "settlement_price"].iloc[0])
            days.append(MarketDay(
                date=d,
                slice=smile,
                vstoxx_observed=float(levels[d]),
                future_expiry_date=expiry,
                future_market_price=price,
            ))
        except (DataError, ValidationError) as e:
            dropped[d] = str(e)

    for d, reason in dropped.items():
        logger.warning("Dropping day", date=str(d), reason=reason)

    flow_frame = flows.set_index("date").sort_index()
    flow_frame = flow_frame.loc[[day.date for day in days]] if days else flow_frame.iloc[0:0]
    logger.info("Daily data loaded", days=len(days), dropped=len(dropped))
    return DailyData(days=days, flows=flow_frame, dropped=dropped)


def build_feature_table(
    days: Sequence[MarketDay],
    calibration_records: Sequence[CalibrationRecord],
    flows: pd.DataFrame,
) -> Tuple[List[FeatureRow], List[Dict[str, str]]]:
    """One FeatureRow per calibrated day; problems become per-row error entries."""
    by_date = {r.date: r for r in calibration_records}
    rows: List[FeatureRow] = []
    errors: List[Dict[str, str]] = []
    for day in days:
        record = by_date.get(day.date)
        if record is None:
            errors.append({"date": day.date.isoformat(), "error": "no calibration record"})
            continue
        if not record.success:
            errors.append({"date": day.date.isoformat(), "error": record.error or "calibration failed"})
            continue
        if day.date not in flows.index:
            errors.append({"date": day.date.isoformat(), "error": "no flow record"})
            continue
        flow = flows.loc[day.date]
        try:
            rows.append(FeatureRow(
                date=day.date,
                diff_price=record.diff_price,
                market_price=day.future_market_price,
                vstoxx=day.vstoxx_observed,
                fit_residual=record.objective,
                days_to_expiry=day.days_to_expiry,
                **{name: float(flow[name]) for name in FLOW_COLUMNS},
            ))
        except ValidationError as e:
            errors.append({"date": day.date.isoformat(), "error": str(e.errors()[0]["msg"])})

    if errors:
        logger.warning("Feature rows skipped", count=len(errors))
    return rows, errors


def feature_frame(rows: Sequence[FeatureRow]) -> pd.DataFrame:
    """Date column followed by the table columns."""
    records = [row.model_dump() for row in rows]
    frame = pd.DataFrame(records, columns=["date"] + TABLE_COLUMNS)
    return frame.sort_values("date", kind="stable").reset_index(drop=True)


def correlation_matrix(table: pd.DataFrame) -> pd.DataFrame:
    """Pearson correlations of every numeric column; constant columns correlate 0."""
    numeric = table.drop(columns=["date"], errors="ignore").astype(float)
    if len(numeric) < MIN_CORRELATION_ROWS:
        raise InsufficientDataError(f"correlation needs at least {MIN_CORRELATION_ROWS} rows, got {len(numeric)}")

    constant = [c for c in numeric.columns if numeric[c].std(ddof=0) == 0.0]
    if constant:
        logger.warning("Constant columns in correlation input", columns=constant)

    corr = numeric.corr(method="pearson")
    # pandas leaves NaN wherever a constant column is involved
    corr.loc[:, constant] = 0.0
    corr.loc[constant, :] = 0.0
    values = np.clip(corr.to_numpy(copy=True), -1.0, 1.0)
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 1.0)
    return pd.DataFrame(values, index=numeric.columns, columns=numeric.columns)


def consolidate(table: pd.DataFrame) -> ConsolidatedTable:
    """Keep the model inputs; the index level, fit residual and option positions go."""
    missing = [c for c in FEATURE_COLUMNS + [TARGET_COLUMN] if c not in table.columns]
    if missing:
        raise DataError(f"feature table lacks columns {missing}")
    dates = list(table["date"]) if "date" in table.columns else []
    return ConsolidatedTable(
        features=table[FEATURE_COLUMNS].astype(float).reset_index(drop=True),
        target=table[TARGET_COLUMN].astype(float).reset_index(drop=True),
        dates=dates,
    )


def train_test_split(
    table: ConsolidatedTable,
    test_fraction: float = 0.30,
    seed: int = 0,
) -> Tuple[ConsolidatedTable, ConsolidatedTable]:
    n = len(table)
    if n < MIN_SPLIT_ROWS:
        raise InsufficientDataError(f"splitting needs at least {MIN_SPLIT_ROWS} rows, got {n}")
    if not 0.0 < test_fraction < 1.0:
        raise InsufficientDataError(f"test fraction must lie in (0, 1), got {test_fraction}")
    n_test = min(max(int(round(test_fraction * n)), 1), n - 1)
    train_idx, test_idx = sk_train_test_split(np.arange(n), test_size=n_test, random_state=seed, shuffle=True)
    return table.take(sorted(train_idx.tolist())), table.take(sorted(test_idx.tolist()))


class FeatureScaler:
    """Per-column mean / population std from training data."""

    def __init__(self, columns: Sequence[str], scaler: StandardScaler):
        self.columns = list(columns)
        self._scaler = scaler

    @property
    def mean(self) -> np.ndarray:
        return self._scaler.mean_

    @property
    def std(self) -> np.ndarray:
        return self._scaler.scale_

    def apply(self, features: pd.DataFrame) -> pd.DataFrame:
        scaled = self._scaler.transform(np.asarray(features[self.columns], dtype=float))
        return pd.DataFrame(scaled, columns=self.columns, index=features.index)

    def inverse(self, scaled: pd.DataFrame) -> pd.DataFrame:
        values = self._scaler.inverse_transform(np.asarray(scaled[self.columns], dtype=float))
        return pd.DataFrame(values, columns=self.columns, index=scaled.index)


def standardize(train_features: pd.DataFrame) -> FeatureScaler:
    values = np.asarray(train_features, dtype=float)
    for j, name in enumerate(train_features.columns):
        if np.ptp(values[:, j]) == 0.0:
            raise ConstantColumnError(str(name))
    scaler = StandardScaler(with_mean=True, with_std=True).fit(values)
    return FeatureScaler(train_features.columns, scaler)


def apply(scaler: FeatureScaler, features: pd.DataFrame) -> pd.DataFrame:
    return scaler.apply(features)
