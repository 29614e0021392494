"""Return-series ingestion, rolling-window scheduling, and synthetic fixtures.

The central type is :class:`ReturnsPanel`: a dense (periods x assets) matrix
of simple returns with strictly increasing dates and named columns.  Panels
are immutable; windowing and partitioning return new views.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "PanelError",
    "InsufficientHistoryError",
    "ReturnsPanel",
    "Window",
    "WindowSchedule",
    "SynthSpec",
    "load_returns",
    "write_returns",
    "make_schedule",
    "partition_mixture",
    "synth_panel",
]


class PanelError(ValueError):
    """Malformed panel data (parse failures, bad dates, NaN cells)."""


class InsufficientHistoryError(ValueError):
    """Panel too short for the requested window schedule."""


@dataclass(frozen=True)
class ReturnsPanel:
    """Immutable matrix of simple returns, one row per date, one column per asset.

    Parameters
    ----------
    dates : tuple of datetime.date
        Strictly increasing observation dates, one per row.
    assets : tuple of str
        Column names; non-empty and unique.
    values : ndarray, shape (S, N)
        Return observations.  Stored read-only.
    """

    dates: tuple[dt.date, ...]
    assets: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise PanelError(f"panel values must be 2-D, got ndim={values.ndim}")
        s, n = values.shape
        if n < 1:
            raise PanelError("panel needs at least one asset column")
        if s < 1:
            raise PanelError("panel needs at least one row")
        if len(self.assets) != n:
            raise PanelError(
                f"{len(self.assets)} asset names for {n} value columns"
            )
        if len(set(self.assets)) != len(self.assets):
            raise PanelError("asset names must be unique")
        if any(not name for name in self.assets):
            raise PanelError("asset names must be non-empty")
        if len(self.dates) != s:
            raise PanelError(f"{len(self.dates)} dates for {s} rows")
        for i in range(1, s):
            if self.dates[i] <= self.dates[i - 1]:
                raise PanelError(
                    f"dates must be strictly increasing: row {i + 1} "
                    f"({self.dates[i].isoformat()}) does not follow row {i} "
                    f"({self.dates[i - 1].isoformat()})"
                )
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            r, c = bad[0]
            raise PanelError(
                f"non-finite return at row {int(r) + 1}, asset {self.assets[int(c)]!r}"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]

    def window(self, start: int, stop: int) -> "ReturnsPanel":
        """Contiguous row slice [start, stop) as a new panel."""
        if not (0 <= start < stop <= self.n_periods):
            raise PanelError(
                f"window [{start}, {stop}) out of range for {self.n_periods} rows"
            )
        return ReturnsPanel(
            dates=self.dates[start:stop],
            assets=self.assets,
            values=self.values[start:stop],
        )


@dataclass(frozen=True)
class Window:
    """Half-open row ranges for one rebalancing period."""

    index: int
    in_sample: tuple[int, int]
    out_sample: tuple[int, int]


@dataclass(frozen=True)
class WindowSchedule:
    """Rolling in-sample/out-of-sample index plan over a panel."""

    horizon: int
    holding: int
    n_rows: int
    windows: tuple[Window, ...]

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)


def make_schedule(n_rows: int, horizon: int, holding: int) -> WindowSchedule:
    """Build the rolling-window plan: estimate on ``horizon`` rows, hold ``holding``.

    Period k estimates on rows [k*holding, k*holding + horizon) and evaluates
    on the following ``holding`` rows.  The number of periods is
    floor((n_rows - horizon) / holding); every out-of-sample block fits in
    the panel and consecutive blocks tile it without gaps.

    Raises
    ------
    InsufficientHistoryError
        If the panel cannot supply even one full period.
    """
    if horizon < 1 or holding < 1:
        raise ValueError(f"horizon and holding must be >= 1, got {horizon}, {holding}")
    if n_rows < horizon + holding:
        raise InsufficientHistoryError(
            f"need at least horizon + holding = {horizon + holding} rows, got {n_rows}"
        )
    count = (n_rows - horizon) // holding
    windows = []
    for k in range(count):
        lo = k * holding
        windows.append(
            Window(
                index=k,
                in_sample=(lo, lo + horizon),
                out_sample=(lo + horizon, lo + horizon + holding),
            )
        )
    return WindowSchedule(
        horizon=horizon, holding=holding, n_rows=n_rows, windows=tuple(windows)
    )


def partition_mixture(panel: ReturnsPanel, components: int) -> list[ReturnsPanel]:
    """Split a panel into ``components`` contiguous blocks of near-equal length.

    Block lengths differ by at most one; the earlier blocks take the
    remainder.  Concatenating the blocks in order recovers the panel.
    """
    if components < 1:
        raise ValueError(f"components must be >= 1, got {components}")
    s = panel.n_periods
    if components > s:
        raise PanelError(
            f"cannot split {s} rows into {components} non-empty blocks"
        )
    base, rem = divmod(s, components)
    blocks = []
    start = 0
    for i in range(components):
        length = base + (1 if i < rem else 0)
        blocks.append(panel.window(start, start + length))
        start += length
    return blocks


def load_returns(path: str, fmt: str = "wide_csv") -> ReturnsPanel:
    """Read a wide CSV (date column followed by one column per asset).

    The first row is the header.  Dates must be ISO ``YYYY-MM-DD`` and
    strictly increasing; every cell must parse as a finite float.  Parse
    errors name the offending row (1-based file line) and column.
    """
    if fmt != "wide_csv":
        raise ValueError(f"unsupported format {fmt!r}")
    try:
        fh = open(path, "r", encoding="utf-8-sig", newline="")
    except OSError as exc:
        raise PanelError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelError(f"{path}: empty file") from None
        if len(header) < 2:
            raise PanelError(f"{path}: header needs a date column plus asset columns")
        assets = tuple(name.strip() for name in header[1:])
        dates: list[dt.date] = []
        rows: list[list[float]] = []
        for lineno, record in enumerate(reader, start=2):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue  # ignore blank lines
            if len(record) != len(header):
                raise PanelError(
                    f"{path}: row {lineno} has {len(record)} fields, expected {len(header)}"
                )
            raw_date = record[0].strip()
            try:
                date = dt.date.fromisoformat(raw_date)
            except ValueError:
                raise PanelError(
                    f"{path}: row {lineno}, column {header[0]!r}: "
                    f"bad date {raw_date!r} (expected YYYY-MM-DD)"
                ) from None
            parsed = []
            for j, cell in enumerate(record[1:]):
                text = cell.strip()
                try:
                    value = float(text)
                except ValueError:
                    raise PanelError(
                        f"{path}: row {lineno}, column {assets[j]!r}: "
                        f"bad value {cell!r}"
                    ) from None
                if not np.isfinite(value):
                    raise PanelError(
                        f"{path}: row {lineno}, column {assets[j]!r}: "
                        f"non-finite value {cell!r}"
                    )
                parsed.append(value)
            if dates and date <= dates[-1]:
                raise PanelError(
                    f"{path}: row {lineno}: date {date.isoformat()} does not "
                    f"increase over previous row ({dates[-1].isoformat()})"
                )
            dates.append(date)
            rows.append(parsed)
    if len(rows) < 2:
        raise PanelError(f"{path}: need at least two data rows, got {len(rows)}")
    try:
        return ReturnsPanel(
            dates=tuple(dates), assets=assets, values=np.array(rows, dtype=float)
        )
    except PanelError as exc:
        raise PanelError(f"{path}: {exc}") from None


def write_returns(panel: ReturnsPanel, path: str, date_label: str = "date") -> None:
    """Write a panel as a wide CSV that :func:`load_returns` reads back exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([date_label, *panel.assets])
        for date, row in zip(panel.dates, panel.values):
            writer.writerow([date.isoformat(), *(repr(float(v)) for v in row)])


@dataclass(frozen=True)
class SynthSpec:
    """Distribution knobs for synthetic panels.

    ``mean`` and ``vol`` may be scalars or per-asset sequences; ``correlation``
    is the common pairwise correlation of the generating normal.
    """

    mean: float | Sequence[float] = 4e-4
    vol: float | Sequence[float] = 0.01
    correlation: float = 0.3

    def moments(self, n_assets: int) -> tuple[np.ndarray, np.ndarray]:
        mu = np.broadcast_to(np.asarray(self.mean, dtype=float), (n_assets,)).copy()
        vol = np.broadcast_to(np.asarray(self.vol, dtype=float), (n_assets,)).copy()
        if np.any(vol < 0):
            raise ValueError("vol must be non-negative")
        if not -1.0 / max(n_assets - 1, 1) <= self.correlation <= 1.0:
            raise ValueError(f"correlation {self.correlation} not attainable for {n_assets} assets")
        corr = np.full((n_assets, n_assets), self.correlation)
        np.fill_diagonal(corr, 1.0)
        cov = corr * np.outer(vol, vol)
        return mu, cov


def _business_days(start: dt.date, count: int) -> tuple[dt.date, ...]:
    out = []
    day = start
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return tuple(out)


def synth_panel(
    seed: int,
    n_periods: int,
    n_assets: int,
    spec: SynthSpec | None = None,
    start: dt.date = dt.date(2005, 1, 3),
) -> ReturnsPanel:
    """Deterministic multivariate-normal panel for tests and demos.

    Same ``(seed, n_periods, n_assets, spec)`` always yields the identical
    panel.  ``vol = 0`` produces constant columns equal to ``mean``.
    """
    if n_periods < 1 or n_assets < 1:
        raise ValueError("n_periods and n_assets must be >= 1")
    spec = spec or SynthSpec()
    mu, cov = spec.moments(n_assets)
    rng = np.random.default_rng(seed)
    if np.allclose(cov, 0.0):
        values = np.tile(mu, (n_periods, 1))
    else:
        values = rng.multivariate_normal(mu, cov, size=n_periods, method="cholesky" if _is_pd(cov) else "eigh")
    names = tuple(f"A{i + 1}" for i in range(n_assets))
    return ReturnsPanel(
        dates=_business_days(start, n_periods), assets=names, values=values
    )


def _is_pd(cov: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(cov)
        return True
    except np.linalg.LinAlgError:
        return False
