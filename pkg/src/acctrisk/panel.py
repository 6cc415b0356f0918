"""Monthly checking-account panels: data model, io, validation, splits.

A panel bundles per-account monthly ledger series, one attribute row per
labeled account, and default labels tied to a snapshot month ``t`` (the
label says whether the firm goes bankrupt within the 12 months after
``t``). Month indices are plain integers; month 0 is January of year 0,
so calendar years are the blocks ``[12k, 12k+11]``. Cumulative violation
counters reset each January and must be non-decreasing inside a year.

Labeled accounts need a complete 24-month record window ``[t-23, t]``;
snapshots with missing months are disqualified and reported in
``PanelDataset.diagnostics`` rather than imputed.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

SECTORS = ("Agriculture", "Service", "Commerce", "Industry", "Construction")

# column order of the per-month value block, shared with the records file
SERIES = (
    "min_bal",
    "max_bal",
    "mean_bal",
    "mean_crbal",
    "mean_dbbal",
    "tcredit",
    "tdebit",
    "int_cnviol",
    "rej_cnviol",
    "int_caviol",
    "rej_caviol",
)
_CUMULATIVE = ("int_cnviol", "rej_cnviol", "int_caviol", "rej_caviol")

RECORDS_HEADER = ("account_id", "month_index") + SERIES
ATTRIBUTES_HEADER = (
    "account_id",
    "sector",
    "total_sales",
    "relationship_years",
    "unpaid_loan_months",
)
LABELS_HEADER = ("account_id", "snapshot_month", "default")

WINDOW_MONTHS = 24


class PanelValidationError(ValueError):
    """Raised for malformed files or rows violating panel invariants."""


@dataclass(frozen=True)
class MonthlyRecord:
    account_id: str
    month_index: int
    min_bal: float
    max_bal: float
    mean_bal: float
    mean_crbal: float
    mean_dbbal: float
    tcredit: float
    tdebit: float
    int_cnviol: float
    rej_cnviol: float
    int_caviol: float
    rej_caviol: float


@dataclass(frozen=True)
class FirmAttributes:
    account_id: str
    sector: str
    total_sales: float
    relationship_years: float
    unpaid_loan_months: frozenset = frozenset()


@dataclass(frozen=True)
class AccountLabel:
    snapshot_month: int
    default: int


@dataclass
class AccountSeries:
    """Monthly values of one account, months ascending, data [n, len(SERIES)]."""

    months: np.ndarray
    data: np.ndarray

    def month_pos(self, month: int) -> int:
        i = int(np.searchsorted(self.months, month))
        if i >= self.months.shape[0] or self.months[i] != month:
            return -1
        return i


def _check_record_invariants(rec: MonthlyRecord, where: str):
    if not rec.min_bal <= rec.mean_bal <= rec.max_bal:
        raise PanelValidationError(
            f"{where}: balance ordering violated (min {rec.min_bal}, mean {rec.mean_bal}, max {rec.max_bal})"
        )
    if rec.tcredit < 0:
        raise PanelValidationError(f"{where}: tcredit must be >= 0")
    if rec.tdebit < 0:
        raise PanelValidationError(f"{where}: tdebit must be >= 0")
    if rec.rej_cnviol > rec.int_cnviol:
        raise PanelValidationError(f"{where}: rej_cnviol exceeds int_cnviol")
    if rec.rej_caviol > rec.int_caviol:
        raise PanelValidationError(f"{where}: rej_caviol exceeds int_caviol")


def _check_year_monotone(months: np.ndarray, data: np.ndarray, account_id: str):
    """Cumulative counters must be non-decreasing within calendar years."""
    if months.shape[0] < 2:
        return
    same_year = (months[1:] // 12) == (months[:-1] // 12)
    consecutive = np.diff(months) == 1
    check = same_year & consecutive
    for name in _CUMULATIVE:
        col = data[:, SERIES.index(name)]
        bad = check & (col[1:] < col[:-1])
        if bad.any():
            i = int(np.nonzero(bad)[0][0]) + 1
            raise PanelValidationError(
                f"account {account_id}: {name} decreases from month "
                f"{int(months[i - 1])} to {int(months[i])} within a calendar year"
            )


class PanelDataset:
    """Immutable-by-convention container; safe to share across workers."""

    def __init__(self, accounts, attributes, labels, diagnostics=None):
        self.accounts: dict[str, AccountSeries] = accounts
        self.attributes: dict[str, FirmAttributes] = attributes
        self.labels: dict[str, AccountLabel] = labels
        self.diagnostics: list[str] = list(diagnostics or [])

    # -- construction ------------------------------------------------------

    @classmethod
    def from_components(cls, records, attributes, labels) -> "PanelDataset":
        """Validate and assemble a panel from in-memory collections.

        ``records``: iterable of MonthlyRecord; ``attributes``: iterable of
        FirmAttributes; ``labels``: mapping account_id -> AccountLabel.
        """
        by_account: dict[str, list[MonthlyRecord]] = {}
        seen = set()
        for i, rec in enumerate(records):
            key = (rec.account_id, rec.month_index)
            if key in seen:
                raise PanelValidationError(
                    f"duplicate (account_id, month_index) {key} at record {i}"
                )
            seen.add(key)
            _check_record_invariants(rec, f"record {i} (account {rec.account_id}, month {rec.month_index})")
            by_account.setdefault(rec.account_id, []).append(rec)

        accounts: dict[str, AccountSeries] = {}
        for acc, recs in by_account.items():
            recs.sort(key=lambda r: r.month_index)
            months = np.array([r.month_index for r in recs], dtype=np.int64)
            data = np.array(
                [[getattr(r, s) for s in SERIES] for r in recs], dtype=np.float64
            )
            _check_year_monotone(months, data, acc)
            accounts[acc] = AccountSeries(months=months, data=data)

        attr_map: dict[str, FirmAttributes] = {}
        for a in attributes:
            if a.account_id in attr_map:
                raise PanelValidationError(f"duplicate attributes row for account {a.account_id}")
            if a.sector not in SECTORS:
                raise PanelValidationError(
                    f"account {a.account_id}: unknown sector {a.sector!r}"
                )
            if a.relationship_years < 0:
                raise PanelValidationError(
                    f"account {a.account_id}: relationship_years must be >= 0"
                )
            attr_map[a.account_id] = a

        diagnostics: list[str] = []
        kept_labels: dict[str, AccountLabel] = {}
        for acc in sorted(labels):
            lab = labels[acc]
            if lab.default not in (0, 1):
                raise PanelValidationError(f"account {acc}: label must be 0 or 1")
            if acc not in accounts:
                raise PanelValidationError(f"label for account {acc} has no records")
            if acc not in attr_map:
                raise PanelValidationError(f"labeled account {acc} has no attributes row")
            if _window_positions(accounts[acc], lab.snapshot_month) is None:
                diagnostics.append(
                    f"account {acc}: incomplete 24-month window ending at "
                    f"month {lab.snapshot_month}; snapshot disqualified"
                )
                continue
            kept_labels[acc] = lab
        return cls(accounts, attr_map, kept_labels, diagnostics)

    # -- access ------------------------------------------------------------

    def labeled_accounts(self) -> list[str]:
        return sorted(self.labels)

    def snapshot_months(self) -> list[int]:
        return sorted({lab.snapshot_month for lab in self.labels.values()})

    def label_vector(self, accounts=None) -> np.ndarray:
        accounts = self.labeled_accounts() if accounts is None else accounts
        return np.array([self.labels[a].default for a in accounts], dtype=np.int64)

    def window(self, account_id: str, t: int, n_months: int = WINDOW_MONTHS) -> np.ndarray:
        """Value block for months ``[t - n_months + 1, t]``; re-validates monotonicity."""
        series = self.accounts[account_id]
        pos = _window_positions(series, t, n_months)
        if pos is None:
            raise PanelValidationError(
                f"account {account_id}: incomplete {n_months}-month window ending at {t}"
            )
        lo, hi = pos
        months = series.months[lo : hi + 1]
        data = series.data[lo : hi + 1]
        _check_year_monotone(months, data, account_id)
        return data

    def subset(self, account_ids) -> "PanelDataset":
        keep = set(account_ids)
        return PanelDataset(
            accounts={a: s for a, s in self.accounts.items() if a in keep},
            attributes={a: v for a, v in self.attributes.items() if a in keep},
            labels={a: v for a, v in self.labels.items() if a in keep},
            diagnostics=[],
        )

    def iter_records(self):
        for acc in sorted(self.accounts):
            series = self.accounts[acc]
            for i in range(series.months.shape[0]):
                vals = series.data[i]
                yield MonthlyRecord(
                    acc, int(series.months[i]), *(float(v) for v in vals)
                )


def _window_positions(series: AccountSeries, t: int, n_months: int = WINDOW_MONTHS):
    """Start/end positions of a complete consecutive window ending at t, or None."""
    hi = series.month_pos(t)
    if hi < 0:
        return None
    lo = hi - (n_months - 1)
    if lo < 0:
        return None
    if series.months[lo] != t - (n_months - 1):
        return None
    window = series.months[lo : hi + 1]
    if not (np.diff(window) == 1).all():
        return None
    return lo, hi


# ---------------------------------------------------------------------------
# file io
# ---------------------------------------------------------------------------

def _open_rows(path):
    if not os.path.exists(path):
        raise PanelValidationError(f"file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    # leading comment lines carry provenance headers written by the CLI
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(lines))))


def _parse_float(value, where):
    try:
        return float(value)
    except ValueError:
        raise PanelValidationError(f"{where}: cannot parse number {value!r}") from None


def _parse_int(value, where):
    try:
        return int(value)
    except ValueError:
        raise PanelValidationError(f"{where}: cannot parse integer {value!r}") from None


def load_panel(records_path, attributes_path, labels_path) -> PanelDataset:
    """Read and validate the three panel files.

    Raises PanelValidationError naming the offending row for malformed or
    invariant-violating input; incomplete label windows only produce
    diagnostics on the returned dataset.
    """
    rows = _open_rows(records_path)
    if not rows or tuple(rows[0]) != RECORDS_HEADER:
        raise PanelValidationError(f"{records_path}: unexpected header {rows[0] if rows else '(empty)'}")
    records = []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != len(RECORDS_HEADER):
            raise PanelValidationError(f"{records_path} row {ln}: expected {len(RECORDS_HEADER)} fields")
        where = f"{records_path} row {ln}"
        records.append(
            MonthlyRecord(
                row[0],
                _parse_int(row[1], where),
                *(_parse_float(v, where) for v in row[2:]),
            )
        )

    rows = _open_rows(attributes_path)
    if not rows or tuple(rows[0]) != ATTRIBUTES_HEADER:
        raise PanelValidationError(f"{attributes_path}: unexpected header")
    attributes = []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != len(ATTRIBUTES_HEADER):
            raise PanelValidationError(f"{attributes_path} row {ln}: expected {len(ATTRIBUTES_HEADER)} fields")
        where = f"{attributes_path} row {ln}"
        unpaid = frozenset(
            _parse_int(tok, where) for tok in row[4].split(";") if tok != ""
        )
        attributes.append(
            FirmAttributes(
                row[0],
                row[1],
                _parse_float(row[2], where),
                _parse_float(row[3], where),
                unpaid,
            )
        )

    rows = _open_rows(labels_path)
    if not rows or tuple(rows[0]) != LABELS_HEADER:
        raise PanelValidationError(f"{labels_path}: unexpected header")
    labels = {}
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != len(LABELS_HEADER):
            raise PanelValidationError(f"{labels_path} row {ln}: expected {len(LABELS_HEADER)} fields")
        where = f"{labels_path} row {ln}"
        acc = row[0]
        if acc in labels:
            raise PanelValidationError(f"{where}: duplicate label for account {acc}")
        labels[acc] = AccountLabel(_parse_int(row[1], where), _parse_int(row[2], where))

    return PanelDataset.from_components(records, attributes, labels)


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def save_panel(panel: PanelDataset, records_path, attributes_path, labels_path, header_comment: str | None = None):
    """Write the three panel files in canonical (sorted, shortest-float) form."""

    def _write(path, header, rows):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    rec_rows = [
        [r.account_id, r.month_index] + [_fmt(getattr(r, s)) for s in SERIES]
        for r in panel.iter_records()
    ]
    _write(records_path, RECORDS_HEADER, rec_rows)

    attr_rows = [
        [
            a.account_id,
            a.sector,
            _fmt(a.total_sales),
            _fmt(a.relationship_years),
            ";".join(str(m) for m in sorted(a.unpaid_loan_months)),
        ]
        for a in (panel.attributes[k] for k in sorted(panel.attributes))
    ]
    _write(attributes_path, ATTRIBUTES_HEADER, attr_rows)

    label_rows = [
        [acc, panel.labels[acc].snapshot_month, panel.labels[acc].default]
        for acc in sorted(panel.labels)
    ]
    _write(labels_path, LABELS_HEADER, label_rows)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def split_temporal(panel: PanelDataset, boundary_month: int):
    """Snapshots at or before the boundary train, later ones test."""
    months = panel.snapshot_months()
    if not months:
        raise PanelValidationError("panel has no labeled snapshots")
    if boundary_month < months[0] or boundary_month >= months[-1]:
        raise PanelValidationError(
            f"boundary {boundary_month} outside snapshot range {months[0]}..{months[-1]}"
        )
    train = [a for a, lab in panel.labels.items() if lab.snapshot_month <= boundary_month]
    test = [a for a, lab in panel.labels.items() if lab.snapshot_month > boundary_month]
    if not train or not test:
        raise PanelValidationError("temporal split leaves one side empty")
    return panel.subset(train), panel.subset(test)


def split_random(panel: PanelDataset, test_fraction: float, seed: int):
    """Deterministic stratified split on the default label."""
    if not 0.0 < test_fraction < 1.0:
        raise PanelValidationError("test_fraction must lie strictly between 0 and 1")
    accounts = panel.labeled_accounts()
    y = panel.label_vector(accounts)
    rng = np.random.default_rng(seed)
    test_accounts: list[str] = []
    for cls in (0, 1):
        idx = [a for a, lab in zip(accounts, y) if lab == cls]
        if not idx:
            raise PanelValidationError(f"class {cls} has zero members")
        k = int(np.floor(test_fraction * len(idx) + 0.5))
        k = min(max(k, 0), len(idx))
        pick = rng.permutation(len(idx))[:k]
        test_accounts.extend(idx[i] for i in pick)
    test_set = set(test_accounts)
    train_accounts = [a for a in accounts if a not in test_set]
    if not train_accounts or not test_accounts:
        raise PanelValidationError("random split leaves one side empty")
    return panel.subset(train_accounts), panel.subset(sorted(test_set))
