"""Returns panels: loading, price differencing and date slicing.

A :class:`ReturnsPanel` is the aligned N x T block of simple daily returns
that every other stage consumes. Dates are kept as opaque, strictly
increasing ISO-8601 strings; no calendar arithmetic is done anywhere.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class PanelError(ValueError):
    """Raised for malformed or unusable panel input."""


@dataclass(frozen=True)
class ReturnsPanel:
    asset_ids: Tuple[str, ...]
    dates: Tuple[str, ...]
    returns: np.ndarray
    labels: Optional[Mapping[str, Tuple[str, str]]] = None
    dropped: Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        ids = tuple(str(a) for a in self.asset_ids)
        dates = tuple(str(d) for d in self.dates)
        r = np.array(self.returns, dtype=np.float64)
        if r.ndim != 2:
            raise PanelError(f"returns must be 2-D, got shape {r.shape}")
        n, t = r.shape
        if n < 2 or t < 2:
            raise PanelError(f"panel needs at least 2 assets and 2 dates, got N={n}, T={t}")
        if len(ids) != n or len(dates) != t:
            raise PanelError(
                f"shape {r.shape} does not match {len(ids)} ids x {len(dates)} dates"
            )
        if len(set(ids)) != n:
            raise PanelError("duplicate asset ids")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise PanelError("dates must be strictly increasing")
        if not np.all(np.isfinite(r)):
            raise PanelError("returns contain non-finite values")
        labels = None
        if self.labels is not None:
            unknown = set(self.labels) - set(ids)
            if unknown:
                raise PanelError(f"labels for unknown assets: {sorted(unknown)[:5]}")
            labels = {k: (str(v[0]), str(v[1])) for k, v in self.labels.items()}
        r.setflags(write=False)
        object.__setattr__(self, "asset_ids", ids)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "labels", labels)

    @property
    def n_assets(self) -> int:
        return self.returns.shape[0]

    @property
    def n_dates(self) -> int:
        return self.returns.shape[1]

    def index_of(self, asset_id: str) -> int:
        try:
            return self.asset_ids.index(asset_id)
        except ValueError:
            raise KeyError(f"unknown asset id {asset_id!r}") from None

    def sectors(self) -> Optional[List[Optional[str]]]:
        """Sector label per asset in panel order (None where unlabeled)."""
        if self.labels is None:
            return None
        return [self.labels[a][0] if a in self.labels else None for a in self.asset_ids]

    def __eq__(self, other):
        if not isinstance(other, ReturnsPanel):
            return NotImplemented
        return (
            self.asset_ids == other.asset_ids
            and self.dates == other.dates
            and self.labels == other.labels
            and np.array_equal(self.returns, other.returns)
        )

    __hash__ = None


def prices_to_returns(prices: Sequence[float]) -> np.ndarray:
    """Simple returns ``(p_t - p_{t-1}) / p_{t-1}`` of a positive price series.

    >>> prices_to_returns([100, 110, 99]).round(12).tolist()
    [0.1, -0.1]
    """
    p = np.asarray(prices, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise PanelError("need a 1-D series of at least 2 prices")
    bad = np.flatnonzero(~(p > 0))
    if bad.size:
        raise PanelError(f"non-positive price {p[bad[0]]!r} at index {bad[0]}")
    return (p[1:] - p[:-1]) / p[:-1]


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise PanelError(f"non-numeric value {text!r} at row {row}, column {col!r}") from None
    if math.isnan(value):
        raise PanelError(f"NaN at row {row}, column {col!r}")
    return value


def _read_wide(path: Path):
    cells: Dict[Tuple[str, str], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise PanelError(f"{path}: header row with a date column and assets required")
        assets = [h.strip() for h in header[1:]]
        if len(set(assets)) != len(assets):
            raise PanelError(f"{path}: duplicate asset column")
        dates = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            date = row[0].strip()
            if date in dates:
                raise PanelError(f"{path}: duplicate date {date!r} at row {lineno}")
            dates.append(date)
            for asset, text in zip(assets, row[1:]):
                text = text.strip()
                if text:
                    cells[(date, asset)] = _parse_float(text, lineno, asset)
    return assets, dates, cells


def _read_long(path: Path):
    cells: Dict[Tuple[str, str], float] = {}
    assets: List[str] = []
    seen_assets = set()
    dates = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 3:
            raise PanelError(f"{path}: long layout needs columns date,asset_id,value")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise PanelError(f"{path}: short row {lineno}")
            date, asset, text = row[0].strip(), row[1].strip(), row[2].strip()
            if (date, asset) in cells:
                raise PanelError(f"{path}: duplicate cell ({date}, {asset}) at row {lineno}")
            if asset not in seen_assets:
                seen_assets.add(asset)
                assets.append(asset)
            dates.add(date)
            if text:
                cells[(date, asset)] = _parse_float(text, lineno, "value")
    return assets, sorted(dates), cells


def load_labels(path) -> Dict[str, Tuple[str, str]]:
    """Read an ``asset_id,sector,industry`` CSV."""
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"asset_id", "sector", "industry"} - set(reader.fieldnames or ())
        if missing:
            raise PanelError(f"{path}: label file missing columns {sorted(missing)}")
        for row in reader:
            labels[row["asset_id"].strip()] = (row["sector"].strip(), row["industry"].strip())
    return labels


def load_panel(
    path,
    format: str = "returns",
    csv_layout: str = "wide",
    labels_path=None,
    strict: bool = True,
) -> ReturnsPanel:
    """Load a CSV of prices or returns into a :class:`ReturnsPanel`.

    Args:
        path: CSV file. Wide layout is ``date,<asset>,<asset>,...``; long
            layout is ``date,asset_id,value`` rows.
        format: ``"prices"`` (differenced into simple returns, dropping the
            first date) or ``"returns"`` (taken as given).
        csv_layout: ``"wide"`` or ``"long"``.
        labels_path: optional ``asset_id,sector,industry`` CSV. Labels for
            assets not in the panel are ignored.
        strict: if True any missing cell is an error; otherwise assets with
            a missing value are dropped and listed in ``panel.dropped``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format not in ("prices", "returns"):
        raise PanelError(f"unknown format {format!r}")
    if csv_layout == "wide":
        assets, dates, cells = _read_wide(path)
    elif csv_layout == "long":
        assets, dates, cells = _read_long(path)
    else:
        raise PanelError(f"unknown csv layout {csv_layout!r}")

    dates = sorted(dates)
    kept, dropped = [], []
    for a in assets:
        if all((d, a) in cells for d in dates):
            kept.append(a)
        else:
            dropped.append(a)
    if dropped:
        if strict:
            raise PanelError(f"{path}: missing values for assets {dropped[:10]}")
        logger.warning("dropping %d assets with missing values: %s", len(dropped), dropped)

    values = np.array([[cells[(d, a)] for d in dates] for a in kept], dtype=np.float64)
    values = values.reshape(len(kept), len(dates))
    if format == "prices":
        if len(dates) < 3:
            raise PanelError(f"{path}: fewer than 2 usable dates after differencing")
        rets = np.empty((len(kept), len(dates) - 1))
        for i, a in enumerate(kept):
            try:
                rets[i] = prices_to_returns(values[i])
            except PanelError as exc:
                raise PanelError(f"{path}: asset {a!r}: {exc}") from None
        values, dates = rets, dates[1:]
    if len(dates) < 2:
        raise PanelError(f"{path}: fewer than 2 usable dates")

    labels = None
    if labels_path is not None:
        all_labels = load_labels(labels_path)
        labels = {a: all_labels[a] for a in kept if a in all_labels}
    return ReturnsPanel(tuple(kept), tuple(dates), values, labels, tuple(dropped))


def slice_panel(panel: ReturnsPanel, start_date: str, end_date: str) -> ReturnsPanel:
    """Sub-panel with ``start_date <= date <= end_date`` (string comparison)."""
    if start_date > end_date:
        raise PanelError(f"start {start_date!r} after end {end_date!r}")
    mask = np.array([start_date <= d <= end_date for d in panel.dates])
    if not mask.any():
        raise PanelError(f"no dates in [{start_date}, {end_date}]")
    if mask.sum() < 2:
        raise PanelError(f"slice [{start_date}, {end_date}] keeps fewer than 2 dates")
    dates = tuple(d for d, m in zip(panel.dates, mask) if m)
    return ReturnsPanel(panel.asset_ids, dates, panel.returns[:, mask], panel.labels)


def write_wide_csv(panel: ReturnsPanel, path, labels_path=None) -> None:
    """Write returns in the wide layout (``repr`` floats round-trip exactly)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.asset_ids])
        for t, d in enumerate(panel.dates):
            w.writerow([d, *(repr(float(x)) for x in panel.returns[:, t])])
    if labels_path is not None and panel.labels:
        with open(labels_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["asset_id", "sector", "industry"])
            for a in panel.asset_ids:
                if a in panel.labels:
                    w.writerow([a, *panel.labels[a]])
