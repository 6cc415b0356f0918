"""Feature engineering on account panels.

Three feature families over the 24-month window ``[t-23, t]`` ending at
each labeled snapshot:

* 30 continuous columns (``var1`` .. ``var34``; the numbering carries
  historical gaps) built from five window operations - value at t,
  12-month change, 24-month change, 12-month mean and standard
  deviation - plus their one-year-lagged variants. Size effects are
  removed by dividing flagged columns by the account's mean monthly
  credits over the full window.
* 5 discrete columns from recent credit-balance levels, violation
  activity, unpaid loans and relationship history, with configurable
  class boundaries.
* automatic arithmetic interactions (+, -, *, /) over all column pairs
  of a base matrix, with staged importance-based selection.

Missingness is first-class: every undefined value (zero denominators,
zero normalization base, categories unseen at encode time) is masked,
never imputed. Outputs are deterministic for identical panels.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import boost as boost_mod
from .panel import SERIES, PanelDataset, PanelValidationError, WINDOW_MONTHS

_S = {name: i for i, name in enumerate(SERIES)}

# column order of the continuous definition (numbering has gaps: 2, 4, 6, 8 unused)
DEF1_COLUMNS = ["var1", "var3", "var5", "var7"] + [f"var{i}" for i in range(9, 35)]

DEF3_COLUMNS = [
    "crbal_sum_class",
    "violation_class",
    "unpaid_loan_12m",
    "crbal_ratio_class",
    "relationship_class",
]


@dataclass
class FeatureMatrix:
    """Named-column numeric matrix with an explicit missing-value mask."""

    ids: list[tuple[str, int]]  # (account_id, snapshot_month)
    columns: list[str]
    values: np.ndarray  # float64 [n, p]
    mask: np.ndarray  # bool [n, p]; True = missing
    provenance: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be unique")
        if self.values.shape != self.mask.shape or self.values.shape[0] != len(self.ids):
            raise ValueError("inconsistent shapes")

    @property
    def n_rows(self) -> int:
        return len(self.ids)

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def to_dense(self) -> np.ndarray:
        """float64 matrix with NaN at masked cells."""
        out = self.values.copy()
        out[self.mask] = np.nan
        return out

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        out = self.values[:, j].copy()
        out[self.mask[:, j]] = np.nan
        return out

    def select(self, columns) -> "FeatureMatrix":
        pos = [self.columns.index(c) for c in columns]
        return FeatureMatrix(
            ids=list(self.ids),
            columns=list(columns),
            values=self.values[:, pos].copy(),
            mask=self.mask[:, pos].copy(),
            provenance={c: self.provenance[c] for c in columns if c in self.provenance},
        )

    def hstack(self, other: "FeatureMatrix") -> "FeatureMatrix":
        if self.ids != other.ids:
            raise ValueError("row ids differ; cannot stack")
        dup = set(self.columns) & set(other.columns)
        if dup:
            raise ValueError(f"duplicate columns on stack: {sorted(dup)}")
        prov = dict(self.provenance)
        prov.update(other.provenance)
        return FeatureMatrix(
            ids=list(self.ids),
            columns=self.columns + other.columns,
            values=np.hstack([self.values, other.values]),
            mask=np.hstack([self.mask, other.mask]),
            provenance=prov,
        )

    # -- io: delimiter-separated values with an NA sentinel + manifest ------

    def write_csv(self, path, header_comment: str | None = None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["account_id", "snapshot_month"] + self.columns)
            for i, (acc, t) in enumerate(self.ids):
                row = [acc, t]
                for j in range(self.n_columns):
                    row.append("NA" if self.mask[i, j] else repr(float(self.values[i, j])))
                w.writerow(row)
        with open(manifest_path(path), "w", encoding="utf-8") as fh:
            json.dump({"columns": {c: self.provenance.get(c, {}) for c in self.columns}}, fh, indent=1, sort_keys=True)

    @classmethod
    def read_csv(cls, path) -> "FeatureMatrix":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            lines = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
        rows = list(csv.reader(lines))
        header = rows[0]
        if header[:2] != ["account_id", "snapshot_month"]:
            raise ValueError(f"{path}: unexpected feature file header")
        columns = header[2:]
        ids = []
        values = np.zeros((len(rows) - 1, len(columns)))
        mask = np.zeros_like(values, dtype=bool)
        for i, row in enumerate(rows[1:]):
            ids.append((row[0], int(row[1])))
            for j, tok in enumerate(row[2:]):
                if tok == "NA":
                    mask[i, j] = True
                else:
                    values[i, j] = float(tok)
        prov = {}
        mpath = manifest_path(path)
        if os.path.exists(mpath):
            with open(mpath, "r", encoding="utf-8") as fh:
                prov = json.load(fh).get("columns", {})
        return cls(ids=ids, columns=columns, values=values, mask=mask, provenance=prov)


def manifest_path(path) -> str:
    return str(path) + ".manifest.json"


# ---------------------------------------------------------------------------
# window operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowStats:
    """The five window operations for one monthly series, plus lagged variants."""

    value_now: float  # value at t
    chg12: float  # value at t minus value at t-11
    chg24: float  # value at t minus value at t-23
    mean12: float  # mean over [t-11, t]
    sd12: float  # sample sd over [t-11, t]
    chg12_lag: float  # value at t-12 minus value at t-23
    mean12_lag: float  # mean over [t-23, t-12]
    sd12_lag: float  # sample sd over [t-23, t-12]


def window_stats(series) -> WindowStats:
    s = np.asarray(series, dtype=np.float64)
    if s.shape[0] != WINDOW_MONTHS:
        raise ValueError(f"expected a {WINDOW_MONTHS}-month series")
    return WindowStats(
        value_now=float(s[23]),
        chg12=float(s[23] - s[12]),
        chg24=float(s[23] - s[0]),
        mean12=float(s[12:24].mean()),
        sd12=float(s[12:24].std(ddof=1)),
        chg12_lag=float(s[11] - s[0]),
        mean12_lag=float(s[0:12].mean()),
        sd12_lag=float(s[0:12].std(ddof=1)),
    )


def _window_tensor(panel: PanelDataset):
    """Stack complete label windows: ids plus a [n, 24, len(SERIES)] block.

    Labeled snapshots without a complete window are skipped with a
    diagnostic entry (returned alongside).
    """
    ids = []
    blocks = []
    skipped = []
    for acc in panel.labeled_accounts():
        t = panel.labels[acc].snapshot_month
        try:
            blocks.append(panel.window(acc, t))
        except PanelValidationError as exc:
            skipped.append(str(exc))
            continue
        ids.append((acc, t))
    if not ids:
        raise PanelValidationError("no labeled account has a complete window")
    return ids, np.stack(blocks), skipped


# ---------------------------------------------------------------------------
# sector encoding (ordinal by class-1 rate)
# ---------------------------------------------------------------------------

def encode_sector(categories, y):
    """Rank categories 1..L by ascending empirical class-1 rate.

    Ties break by category name. Returns (values, mask, order_map); apply
    the returned map to held-out data so test encoding reuses training
    ranks (unseen categories come back masked). For any concave impurity,
    one of the L-1 ordered splits on the encoded column attains the best
    split over all category subsets.
    """
    categories = list(categories)
    y = np.asarray(y, dtype=np.float64)
    if len(categories) != y.shape[0]:
        raise ValueError("length mismatch")
    if not categories:
        raise ValueError("need at least one category observation")
    rates = {}
    for cat in sorted(set(categories)):
        sel = np.array([c == cat for c in categories])
        rates[cat] = float(y[sel].mean())
    order = sorted(rates, key=lambda c: (rates[c], c))
    order_map = {cat: rank for rank, cat in enumerate(order, start=1)}
    values, mask = apply_sector_encoding(order_map, categories)
    return values, mask, order_map


def apply_sector_encoding(order_map, categories):
    values = np.zeros(len(categories))
    mask = np.zeros(len(categories), dtype=bool)
    for i, cat in enumerate(categories):
        if cat in order_map:
            values[i] = order_map[cat]
        else:
            mask[i] = True
    return values, mask


def fit_sector_encoding(panel: PanelDataset) -> dict[str, int]:
    accounts = panel.labeled_accounts()
    cats = [panel.attributes[a].sector for a in accounts]
    y = panel.label_vector(accounts)
    _, _, order_map = encode_sector(cats, y)
    return order_map


# ---------------------------------------------------------------------------
# Definition 1: 30 continuous columns
# ---------------------------------------------------------------------------

def compute_def1(panel: PanelDataset, sector_encoding: dict[str, int] | None = None) -> FeatureMatrix:
    """The 30 continuous columns for every labeled snapshot.

    ``sector_encoding`` carries training-set category ranks for var29;
    when omitted it is fitted on this panel's own labels (fine for
    training data, leaky for held-out data). The 24-month mean of tcredit
    is the normalization base; when it is zero the normalized columns are
    masked, not zeroed.
    """
    ids, W, skipped = _window_tensor(panel)
    n = len(ids)

    def ser(name):
        return W[:, :, _S[name]]

    def now(s):
        return s[:, 23]

    def chg12(s):
        return s[:, 23] - s[:, 12]

    def chg12_lag(s):
        return s[:, 11] - s[:, 0]

    def chg24(s):
        return s[:, 23] - s[:, 0]

    def mean12(s):
        return s[:, 12:24].mean(axis=1)

    def sd12(s):
        return s[:, 12:24].std(axis=1, ddof=1)

    def mean12_lag(s):
        return s[:, 0:12].mean(axis=1)

    def sd12_lag(s):
        return s[:, 0:12].std(axis=1, ddof=1)

    norm_base = ser("tcredit").mean(axis=1)  # recorded even when zero
    norm_bad = norm_base == 0.0

    values = np.zeros((n, len(DEF1_COLUMNS)))
    mask = np.zeros_like(values, dtype=bool)
    prov: dict[str, dict] = {}

    def put(name, vals, bad=None, formula="", normalized=False):
        j = DEF1_COLUMNS.index(name)
        col_bad = norm_bad.copy() if normalized else np.zeros(n, dtype=bool)
        if bad is not None:
            col_bad |= bad
        safe = np.where(col_bad, 0.0, vals)
        values[:, j] = safe
        mask[:, j] = col_bad
        prov[name] = {"source": "def1", "formula": formula, "normalized": normalized}

    def ratio(num, den):
        bad = den == 0.0
        out = np.zeros_like(num)
        np.divide(num, den, out=out, where=~bad)
        return out, bad

    def normed(vals):
        out = np.zeros_like(vals)
        np.divide(vals, norm_base, out=out, where=~norm_bad)
        return out

    put("var1", normed(chg24(ser("min_bal"))), formula="chg24(min_bal) / mean24(tcredit)", normalized=True)
    put("var3", normed(chg24(ser("mean_bal"))), formula="chg24(mean_bal) / mean24(tcredit)", normalized=True)
    put("var5", normed(chg24(ser("mean_crbal"))), formula="chg24(mean_crbal) / mean24(tcredit)", normalized=True)
    put("var7", normed(chg24(ser("mean_dbbal"))), formula="chg24(mean_dbbal) / mean24(tcredit)", normalized=True)

    put("var9", chg12(ser("int_cnviol")), formula="chg12(int_cnviol)")
    put("var10", chg12_lag(ser("int_cnviol")), formula="chg12_lag(int_cnviol)")
    put("var11", chg12(ser("rej_cnviol")), formula="chg12(rej_cnviol)")
    put("var12", chg12_lag(ser("rej_cnviol")), formula="chg12_lag(rej_cnviol)")

    d_int = chg12(ser("int_caviol"))
    d_rej = chg12(ser("rej_caviol"))
    v13, bad13 = ratio(d_int - d_rej, d_int)
    put("var13", v13, bad=bad13, formula="(chg12(int_caviol) - chg12(rej_caviol)) / chg12(int_caviol)")
    d_int_l = chg12_lag(ser("int_caviol"))
    d_rej_l = chg12_lag(ser("rej_caviol"))
    v14, bad14 = ratio(d_int_l - d_rej_l, d_int_l)
    put("var14", v14, bad=bad14, formula="(chg12_lag(int_caviol) - chg12_lag(rej_caviol)) / chg12_lag(int_caviol)")

    spread = ser("max_bal") - ser("min_bal")
    put("var15", normed(chg12(spread)), formula="chg12(max_bal - min_bal) / mean24(tcredit)", normalized=True)

    put("var16", normed(chg12(ser("tcredit"))), formula="chg12(tcredit) / mean24(tcredit)", normalized=True)
    put("var17", normed(chg12_lag(ser("tcredit"))), formula="chg12_lag(tcredit) / mean24(tcredit)", normalized=True)
    put("var18", normed(chg12(ser("tdebit"))), formula="chg12(tdebit) / mean24(tcredit)", normalized=True)
    # the lagged debit change; pairs with var17 the way var18 pairs with var16
    put("var19", normed(chg12_lag(ser("tdebit"))), formula="chg12_lag(tdebit) / mean24(tcredit)", normalized=True)

    tc = ser("tcredit")
    td = ser("tdebit")
    bad20 = (td[:, 23] == 0.0) | (td[:, 12] == 0.0)
    r23 = np.divide(tc[:, 23], td[:, 23], out=np.zeros(n), where=td[:, 23] != 0)
    r12 = np.divide(tc[:, 12], td[:, 12], out=np.zeros(n), where=td[:, 12] != 0)
    put("var20", r23 - r12, bad=bad20, formula="chg12(tcredit / tdebit)")
    bad21 = (td[:, 11] == 0.0) | (td[:, 0] == 0.0)
    r11 = np.divide(tc[:, 11], td[:, 11], out=np.zeros(n), where=td[:, 11] != 0)
    r0 = np.divide(tc[:, 0], td[:, 0], out=np.zeros(n), where=td[:, 0] != 0)
    put("var21", r11 - r0, bad=bad21, formula="chg12_lag(tcredit / tdebit)")

    v22, bad22 = ratio(sd12(ser("mean_bal")), mean12(ser("mean_bal")))
    put("var22", v22, bad=bad22, formula="sd12(mean_bal) / mean12(mean_bal)")
    v23, bad23 = ratio(sd12_lag(ser("mean_bal")), mean12_lag(ser("mean_bal")))
    put("var23", v23, bad=bad23, formula="sd12_lag(mean_bal) / mean12_lag(mean_bal)")
    v24, bad24 = ratio(sd12(ser("tcredit")), mean12(ser("tcredit")))
    put("var24", v24, bad=bad24, formula="sd12(tcredit) / mean12(tcredit)")
    v25, bad25 = ratio(sd12_lag(ser("tcredit")), mean12_lag(ser("tcredit")))
    put("var25", v25, bad=bad25, formula="sd12_lag(tcredit) / mean12_lag(tcredit)")

    put("var26", normed(now(ser("mean_bal"))), formula="now(mean_bal) / mean24(tcredit)", normalized=True)
    put("var27", normed(now(ser("mean_crbal"))), formula="now(mean_crbal) / mean24(tcredit)", normalized=True)
    put("var28", normed(now(ser("mean_dbbal"))), formula="now(mean_dbbal) / mean24(tcredit)", normalized=True)
    put("var31", normed(now(ser("tcredit"))), formula="now(tcredit) / mean24(tcredit)", normalized=True)
    put("var32", normed(now(ser("tdebit"))), formula="now(tdebit) / mean24(tcredit)", normalized=True)
    put("var33", normed(now(ser("min_bal"))), formula="now(min_bal) / mean24(tcredit)", normalized=True)
    put("var34", normed(now(ser("max_bal"))), formula="now(max_bal) / mean24(tcredit)", normalized=True)

    accounts = [acc for acc, _ in ids]
    sectors = [panel.attributes[a].sector for a in accounts]
    if sector_encoding is None:
        y = panel.label_vector(accounts)
        _, _, sector_encoding = encode_sector(sectors, y)
    v29, m29 = apply_sector_encoding(sector_encoding, sectors)
    j29 = DEF1_COLUMNS.index("var29")
    values[:, j29] = v29
    mask[:, j29] = m29
    prov["var29"] = {
        "source": "def1",
        "formula": "sector rank by ascending training default rate",
        "encoding": {k: int(v) for k, v in sector_encoding.items()},
    }

    j30 = DEF1_COLUMNS.index("var30")
    values[:, j30] = [panel.attributes[a].total_sales for a in accounts]
    prov["var30"] = {"source": "def1", "formula": "total_sales"}

    fm = FeatureMatrix(ids=ids, columns=list(DEF1_COLUMNS), values=values, mask=mask, provenance=prov)
    fm.provenance["_diagnostics"] = {"skipped_rows": skipped}
    return fm


# ---------------------------------------------------------------------------
# Definition 3: 5 discrete columns
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Def3Thresholds:
    a: float  # currency bound on the 3-month credit-balance sum
    b: float  # ratio bound on mean_crbal(t) / mean_crbal(t-1)
    c: float  # years bound on relationship history


def default_def3_thresholds(panel: PanelDataset) -> Def3Thresholds:
    """Quantile-based stand-ins for the class boundaries: a = median
    3-month credit-balance sum on this panel, b = 0.5, c = 3 years."""
    _, W, _ = _window_tensor(panel)
    sums = W[:, 21:24, _S["mean_crbal"]].sum(axis=1)
    a = float(np.median(sums))
    if a <= 0:
        a = max(float(sums.max()), 1.0)
    return Def3Thresholds(a=a, b=0.5, c=3.0)


def _monthly_from_cumulative(block: np.ndarray, months: np.ndarray) -> np.ndarray:
    """Per-month counts from a within-year cumulative series.

    January (month % 12 == 0) restarts the counter, so its cumulative
    value is the January count itself.
    """
    out = np.empty_like(block)
    out[:, 0] = np.nan  # undefined unless January
    jan0 = months[0] % 12 == 0
    if jan0:
        out[:, 0] = block[:, 0]
    diffs = block[:, 1:] - block[:, :-1]
    jan = (months[1:] % 12) == 0
    out[:, 1:] = np.where(jan[None, :], block[:, 1:], diffs)
    return out


def compute_def3(panel: PanelDataset, thresholds: Def3Thresholds | None = None) -> FeatureMatrix:
    """Five discrete columns encoded as small integers 0, 1 (and 2).

    violation_class: 0 when no violations were attempted in [t-2, t],
    1 when some were attempted but none rejected, 2 when some were
    rejected.
    """
    thresholds = thresholds or default_def3_thresholds(panel)
    if thresholds.a <= 0:
        raise ValueError("threshold a must be positive")
    ids, W, skipped = _window_tensor(panel)
    n = len(ids)
    accounts = [acc for acc, _ in ids]
    t_arr = np.array([t for _, t in ids])
    month_axis = t_arr[:, None] - (WINDOW_MONTHS - 1) + np.arange(WINDOW_MONTHS)[None, :]

    values = np.zeros((n, len(DEF3_COLUMNS)))
    mask = np.zeros_like(values, dtype=bool)

    crbal = W[:, :, _S["mean_crbal"]]
    values[:, 0] = (crbal[:, 21:24].sum(axis=1) > thresholds.a).astype(float)

    s1 = np.zeros(n)
    s2 = np.zeros(n)
    for i in range(n):
        months = month_axis[i]
        mon_int = _monthly_from_cumulative(W[i : i + 1, :, _S["int_cnviol"]], months)[0]
        mon_rej = _monthly_from_cumulative(W[i : i + 1, :, _S["rej_cnviol"]], months)[0]
        s1[i] = np.nansum(mon_int[21:24])
        s2[i] = np.nansum(mon_rej[21:24])
    values[:, 1] = np.where(s1 == 0, 0.0, np.where(s2 == 0, 1.0, 2.0))

    for i, acc in enumerate(accounts):
        t = t_arr[i]
        unpaid = panel.attributes[acc].unpaid_loan_months
        values[i, 2] = float(any(t - 11 <= m <= t for m in unpaid))

    denom = crbal[:, 22]
    bad = denom == 0.0
    ratio = np.divide(crbal[:, 23], denom, out=np.zeros(n), where=~bad)
    values[:, 3] = np.where(bad, 0.0, (ratio >= thresholds.b).astype(float))
    mask[:, 3] = bad

    rel = np.array([panel.attributes[a].relationship_years for a in accounts])
    values[:, 4] = (rel >= thresholds.c).astype(float)

    prov = {
        "crbal_sum_class": {"source": "def3", "formula": f"sum(mean_crbal, [t-2,t]) > {thresholds.a!r}"},
        "violation_class": {"source": "def3", "formula": "0: S1=0; 1: S1>0 & S2=0; 2: S1>0 & S2>0 over [t-2,t]"},
        "unpaid_loan_12m": {"source": "def3", "formula": "any unpaid loan month in [t-11, t]"},
        "crbal_ratio_class": {"source": "def3", "formula": f"mean_crbal(t)/mean_crbal(t-1) >= {thresholds.b!r}"},
        "relationship_class": {"source": "def3", "formula": f"relationship_years >= {thresholds.c!r}"},
        "_diagnostics": {"skipped_rows": skipped},
    }
    return FeatureMatrix(ids=ids, columns=list(DEF3_COLUMNS), values=values, mask=mask, provenance=prov)


# ---------------------------------------------------------------------------
# Definition 2: automatic base variables and arithmetic interactions
# ---------------------------------------------------------------------------

_DEF2_SERIES = (
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
)
_DEF2_OPS = ("now", "chg12", "chg24", "avg12", "sd12")


def def2_base(panel: PanelDataset) -> FeatureMatrix:
    """50 raw window summaries (10 monthly series x 5 operations)."""
    ids, W, skipped = _window_tensor(panel)
    cols = []
    blocks = []
    for name in _DEF2_SERIES:
        s = W[:, :, _S[name]]
        per_op = {
            "now": s[:, 23],
            "chg12": s[:, 23] - s[:, 12],
            "chg24": s[:, 23] - s[:, 0],
            "avg12": s[:, 12:24].mean(axis=1),
            "sd12": s[:, 12:24].std(axis=1, ddof=1),
        }
        for op in _DEF2_OPS:
            cols.append(f"{name}_{op}")
            blocks.append(per_op[op])
    values = np.column_stack(blocks)
    mask = np.zeros_like(values, dtype=bool)
    prov = {c: {"source": "def2_base"} for c in cols}
    prov["_diagnostics"] = {"skipped_rows": skipped}
    return FeatureMatrix(ids=ids, columns=cols, values=values, mask=mask, provenance=prov)


_OPS = ("+", "-", "*", "/")


def generate_interactions(base: FeatureMatrix) -> FeatureMatrix:
    """Base columns plus one column per unordered pair and operation.

    Pairs are oriented lexicographically by column name, so p base
    columns yield p + 4 * C(p, 2) columns. Division by zero masks the
    cell; constant result columns are kept but flagged in provenance.
    """
    names = sorted(base.columns)
    fm = base.select(names)
    n = fm.n_rows
    out_cols = list(names)
    out_vals = [fm.values]
    out_mask = [fm.mask]
    prov = dict(fm.provenance)

    for ai in range(len(names)):
        for bi in range(ai + 1, len(names)):
            a, b = names[ai], names[bi]
            va = fm.values[:, ai]
            vb = fm.values[:, bi]
            pair_missing = fm.mask[:, ai] | fm.mask[:, bi]
            cols = {}
            cols[f"{a}+{b}"] = (va + vb, pair_missing)
            cols[f"{a}-{b}"] = (va - vb, pair_missing)
            cols[f"{a}*{b}"] = (va * vb, pair_missing)
            div_bad = pair_missing | (vb == 0.0)
            div = np.divide(va, vb, out=np.zeros(n), where=vb != 0.0)
            cols[f"{a}/{b}"] = (div, div_bad)
            for op in _OPS:
                cname = f"{a}{op}{b}"
                vals, bad = cols[cname]
                vals = np.where(bad, 0.0, vals)
                out_cols.append(cname)
                out_vals.append(vals[:, None])
                out_mask.append(bad[:, None])
                entry = {"source": "interaction", "op": op, "parents": [a, b]}
                unmasked = vals[~bad]
                if unmasked.size == 0 or (unmasked == unmasked[0]).all():
                    entry["flags"] = ["constant"]
                prov[cname] = entry
    return FeatureMatrix(
        ids=list(fm.ids),
        columns=out_cols,
        values=np.hstack(out_vals),
        mask=np.hstack(out_mask),
        provenance=prov,
    )


def staged_interaction_selection(
    base: FeatureMatrix,
    y,
    per_family_k: int,
    final_k: int,
    params: boost_mod.BoostParams | None = None,
):
    """Importance-screened interaction matrix plus the final ranking.

    One boosting run per arithmetic family (raw, +, -, *, /) keeps its
    top ``per_family_k`` columns; the concatenation (about ``final_k``
    columns) feeds a final, lighter boosting whose importance ranking is
    returned and used to cap the matrix at ``final_k`` if needed. The
    screening models run coarser than production defaults (larger eta,
    fewer rounds) since only the ranking matters here.
    """
    y = np.asarray(y, dtype=np.float64)
    params = params or boost_mod.BoostParams(n_rounds=120, eta=0.1, max_depth=3, subsample=0.8, seed=7)
    inter = generate_interactions(base)
    families: dict[str, list[str]] = {"raw": [], "+": [], "-": [], "*": [], "/": []}
    for c in inter.columns:
        src = inter.provenance.get(c, {})
        if src.get("source") == "interaction":
            families[src["op"]].append(c)
        else:
            families["raw"].append(c)

    kept: list[str] = []
    for fam in ("raw", "+", "-", "*", "/"):
        cols = families[fam]
        if not cols:
            continue
        if per_family_k >= len(cols):
            kept.extend(cols)
            continue
        sub = inter.select(cols)
        model = boost_mod.fit_boost(sub.to_dense(), y, params, columns=cols)
        imp = model.importance
        order = np.lexsort((np.arange(len(cols)), -imp))
        kept.extend(cols[i] for i in order[:per_family_k])

    kept_fm = inter.select(kept)
    final_model = boost_mod.fit_boost(kept_fm.to_dense(), y, params, columns=kept)
    imp = final_model.importance
    order = np.lexsort((np.arange(len(kept)), -imp))
    ranking = [(kept[i], float(imp[i])) for i in order]
    if len(kept) > final_k:
        keep_cols = [name for name, _ in ranking[:final_k]]
        kept_fm = inter.select(keep_cols)
    return kept_fm, ranking


def default_label_vector(panel: PanelDataset, fm: FeatureMatrix) -> np.ndarray:
    """Labels aligned to a feature matrix's rows."""
    return np.array([panel.labels[acc].default for acc, _ in fm.ids], dtype=np.int64)
