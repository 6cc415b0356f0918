"""Deterministic generator of imbalanced synthetic account panels.

Firms get latent risk drivers (violation propensity, credit-flow
instability, low credit balances, size, sector) whose weighted sum is
the latent risk score; default labels are Bernoulli draws through a
logistic link with the intercept calibrated to the configured base rate.
The monthly series are built so the drivers leave genuine footprints:

* firm scale is lognormal; credit flows are scale times a seasonal,
  noisy level whose noise grows with the instability driver,
* credit-line violations arrive as Poisson counts whose log-intensity
  tracks the violation driver, with rejected counts/amounts a random
  sub-part of intended ones,
* firms with a high account-driver score drift into distress over the
  final 12 observed months: credits sag, debits overshoot, balances
  slide and violation intensity ramps up,
* sector shifts the latent score monotonically (Agriculture safest,
  Construction riskiest).

The distress dynamics depend only on the drivers, never on the realized
label, so zero signal weights produce label-independent series. An
optional independent "financial ratio" driver enters the label score but
leaves no trace in the account series; ``generate_orthogonal_block``
emits features for it so information-fusion gains can be tested.

Per-firm randomness comes from a generator seeded with (seed, firm
ordinal), so per-firm generation can run in parallel and still match
serial output. Snapshots sit at the latest December month that leaves a
12-month label horizon inside the panel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .panel import (
    SECTORS,
    SERIES,
    AccountLabel,
    AccountSeries,
    FirmAttributes,
    PanelDataset,
)

_SIGNAL_KEYS = (
    "violation_intensity",
    "credit_instability",
    "low_current_credit",
    "size",
    "sector",
)

DEFAULT_SIGNAL_WEIGHTS = {
    "violation_intensity": 0.9,
    "credit_instability": 0.55,
    "low_current_credit": 0.7,
    "size": 0.35,
    "sector": 0.45,
}

# weight of the independent driver behind the orthogonal feature block
ORTHOGONAL_WEIGHT = 0.8

_RELU_MEAN = 1.0 / math.sqrt(2.0 * math.pi)  # E[max(N(0,1), 0)]


@dataclass(frozen=True)
class SynthConfig:
    n_firms: int = 1000
    n_months: int = 36
    base_default_rate: float = 0.05
    signal_weights: dict = field(default_factory=lambda: dict(DEFAULT_SIGNAL_WEIGHTS))
    orthogonal_block: bool = False
    seed: int = 0

    def validate(self):
        if self.n_firms < 1:
            raise ValueError("n_firms must be >= 1")
        if self.n_months < 36:
            raise ValueError("n_months must be >= 36 (two feature windows plus the label horizon)")
        if not 0.0 < self.base_default_rate < 0.5:
            raise ValueError("base_default_rate must lie in (0, 0.5)")
        unknown = set(self.signal_weights) - set(_SIGNAL_KEYS)
        if unknown:
            raise ValueError(f"unknown signal weight keys: {sorted(unknown)}")


@dataclass
class SynthTruth:
    """Generator-side ground truth, used only by tests and diagnostics."""

    account_ids: list[str]
    snapshot_month: int
    latent: np.ndarray  # risk + intercept; labels ~ Bernoulli(logistic(latent))
    account_score: np.ndarray  # account-driver part of the risk
    orth_score: np.ndarray  # independent driver behind the orthogonal block
    prob: np.ndarray
    coefficients: dict
    intercept: float


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def snapshot_month_for(n_months: int) -> int:
    """Latest December (month % 12 == 11) leaving a 12-month horizon."""
    t = n_months - 13
    t -= (t - 11) % 12
    return t


def _firm_rng(seed: int, ordinal: int) -> np.random.Generator:
    return np.random.default_rng((seed, ordinal))


@dataclass
class _Firm:
    drivers: dict
    sector_idx: int
    label_u: float
    months: np.ndarray
    data: np.ndarray
    total_sales: float
    relationship_years: float
    unpaid_months: frozenset


def _cumulate_by_year(months: np.ndarray, monthly: np.ndarray) -> np.ndarray:
    out = np.empty_like(monthly)
    run = 0.0
    for i in range(months.shape[0]):
        if months[i] % 12 == 0:
            run = 0.0
        run += monthly[i]
        out[i] = run
    return out


def _generate_firm(cfg: SynthConfig, ordinal: int, t: int) -> _Firm:
    rng = _firm_rng(cfg.seed, ordinal)
    nm = cfg.n_months
    months = np.arange(nm, dtype=np.int64)

    u = rng.standard_normal(5)  # viol, instab, lowcr, size, orth
    sector_idx = int(rng.integers(0, len(SECTORS)))
    label_u = float(rng.random())
    phase = float(rng.random()) * 2.0 * math.pi

    u_viol, u_instab, u_lowcr, size_ln, u_orth = (float(v) for v in u)
    drivers = {
        "violation_intensity": u_viol,
        "credit_instability": u_instab,
        # only a shortage of credit balance raises risk; surplus is neutral
        "low_current_credit": 1.6 * (max(u_lowcr, 0.0) - _RELU_MEAN),
        "size": -size_ln,
        "sector": (sector_idx - 2) / math.sqrt(2.0),
        "orth": u_orth,
    }
    w = cfg.signal_weights
    account_score = sum(w.get(k, 0.0) * drivers[k] for k in _SIGNAL_KEYS)
    # distress in the observed series follows the account drivers only
    distress = float(_sigmoid(1.3 * account_score - 0.6))
    ramp = np.clip((months - (t - 12)) / 12.0, 0.0, 1.0)

    scale = math.exp(math.log(5e4) + 0.9 * size_ln)
    seas = 0.15 * np.sin(2.0 * math.pi * (months % 12) / 12.0 + phase)
    nu = 0.08 + 0.30 * float(_sigmoid(1.2 * u_instab))

    eps = rng.standard_normal((8, nm))
    tcredit = scale * np.maximum(0.02, 1.0 + seas + nu * eps[0] - 0.55 * distress * ramp)
    tdebit = tcredit * np.maximum(0.05, 1.0 + 0.08 * eps[1] + 0.30 * distress * ramp)

    ar = np.empty(nm)
    ar[0] = eps[2][0]
    for m in range(1, nm):
        ar[m] = 0.8 * ar[m - 1] + 0.6 * eps[2][m]
    level = 0.25 + 0.55 * float(_sigmoid(-1.2 * u_lowcr))
    mean_bal = scale * (level * (1.0 + 0.18 * ar) - 0.55 * distress * ramp)
    lo = scale * (0.10 + 0.05 * np.abs(eps[3]) + 0.10 * nu)
    hi = scale * (0.15 + 0.08 * np.abs(eps[4]) + 0.15 * nu)
    min_bal = mean_bal - lo
    max_bal = mean_bal + hi
    # own noise so credit/debit balances never collapse into exact
    # linear combinations of the balance series
    mean_crbal = np.maximum(mean_bal, 0.0) * np.clip(0.9 + 0.12 * eps[6], 0.05, None) + scale * 0.01 * (
        1.0 + 0.25 * np.abs(eps[7])
    )
    mean_dbbal = np.minimum(mean_bal, 0.0) * np.clip(0.9 + 0.12 * eps[7], 0.05, None) - scale * 0.005 * (
        1.0 + 0.5 * distress * ramp
    ) * (1.0 + 0.25 * np.abs(eps[6]))

    lam = np.minimum(np.exp(-2.4 + 1.1 * u_viol + 2.3 * distress * ramp), 30.0)
    n_int = rng.poisson(lam)
    q_rej = 0.25 + 0.5 * float(_sigmoid(0.8 * u_viol + 0.8 * distress))
    n_rej = rng.binomial(n_int, q_rej)
    amt_u = rng.random(nm)
    amt_int = scale * 0.05 * n_int * (1.0 + 0.5 * np.abs(eps[5]))
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(n_int > 0, n_rej / np.maximum(n_int, 1), 0.0)
    amt_rej = amt_int * frac * (0.6 + 0.4 * amt_u)

    data = np.empty((nm, len(SERIES)))
    data[:, 0] = min_bal
    data[:, 1] = max_bal
    data[:, 2] = mean_bal
    data[:, 3] = mean_crbal
    data[:, 4] = mean_dbbal
    data[:, 5] = tcredit
    data[:, 6] = tdebit
    data[:, 7] = _cumulate_by_year(months, n_int.astype(np.float64))
    data[:, 8] = _cumulate_by_year(months, n_rej.astype(np.float64))
    data[:, 9] = _cumulate_by_year(months, amt_int)
    data[:, 10] = _cumulate_by_year(months, amt_rej)

    unpaid_u = rng.random(12)
    p_unpaid = 0.002 + 0.06 * distress
    unpaid = frozenset(
        int(t - 11 + k) for k in range(12) if unpaid_u[k] < p_unpaid
    )
    total_sales = 12.0 * scale * math.exp(0.25 * float(rng.standard_normal()))
    relationship_years = float(rng.exponential(5.0)) * (1.2 - 0.6 * distress)

    return _Firm(
        drivers=drivers,
        sector_idx=sector_idx,
        label_u=label_u,
        months=months,
        data=data,
        total_sales=total_sales,
        relationship_years=max(relationship_years, 0.0),
        unpaid_months=unpaid,
    )


def _calibrate_intercept(risk: np.ndarray, rate: float) -> float:
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _sigmoid(risk + mid).mean() < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_panel(config: SynthConfig) -> tuple[PanelDataset, SynthTruth]:
    """Deterministic panel plus ground truth for the given config."""
    config.validate()
    t = snapshot_month_for(config.n_months)
    w_orth = ORTHOGONAL_WEIGHT if config.orthogonal_block else 0.0

    firms = [_generate_firm(config, i, t) for i in range(config.n_firms)]
    account_ids = [f"A{i:06d}" for i in range(config.n_firms)]
    account_score = np.array(
        [
            sum(config.signal_weights.get(k, 0.0) * f.drivers[k] for k in _SIGNAL_KEYS)
            for f in firms
        ]
    )
    orth_score = np.array([f.drivers["orth"] for f in firms])
    risk = account_score + w_orth * orth_score
    intercept = _calibrate_intercept(risk, config.base_default_rate)
    latent = risk + intercept
    prob = _sigmoid(latent)
    label_u = np.array([f.label_u for f in firms])
    labels_arr = (label_u < prob).astype(np.int64)

    accounts = {}
    attributes = {}
    labels = {}
    for i, (acc, firm) in enumerate(zip(account_ids, firms)):
        accounts[acc] = AccountSeries(months=firm.months, data=firm.data)
        attributes[acc] = FirmAttributes(
            account_id=acc,
            sector=SECTORS[firm.sector_idx],
            total_sales=firm.total_sales,
            relationship_years=firm.relationship_years,
            unpaid_loan_months=firm.unpaid_months,
        )
        labels[acc] = AccountLabel(snapshot_month=t, default=int(labels_arr[i]))

    panel = PanelDataset(accounts, attributes, labels, diagnostics=[])
    coefficients = dict(config.signal_weights)
    coefficients["orthogonal"] = w_orth
    truth = SynthTruth(
        account_ids=account_ids,
        snapshot_month=t,
        latent=latent,
        account_score=account_score,
        orth_score=orth_score,
        prob=prob,
        coefficients=coefficients,
        intercept=intercept,
    )
    return panel, truth


def generate_orthogonal_block(truth: SynthTruth, n_features: int, seed: int):
    """Feature block for the independent driver; Spearman-uncorrelated
    with account-derived features by construction. Returns a
    FeatureMatrix (imported lazily to avoid a module cycle)."""
    from .features import FeatureMatrix

    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    n = len(truth.account_ids)
    rng = np.random.default_rng((seed, 1 << 20))
    if n_features == 1:
        loadings = np.array([0.75])
    else:
        loadings = 0.55 + 0.4 * np.arange(n_features) / (n_features - 1)
    noise = rng.standard_normal((n, n_features))
    values = loadings[None, :] * truth.orth_score[:, None] + np.sqrt(1.0 - loadings**2)[None, :] * noise
    cols = [f"fin_ratio_{j + 1:02d}" for j in range(n_features)]
    prov = {
        c: {"source": "orthogonal_block", "loading": float(loadings[j])}
        for j, c in enumerate(cols)
    }
    ids = [(acc, truth.snapshot_month) for acc in truth.account_ids]
    return FeatureMatrix(
        ids=ids,
        columns=cols,
        values=values,
        mask=np.zeros_like(values, dtype=bool),
        provenance=prov,
    )


def redraw_labels(truth: SynthTruth, seed: int) -> np.ndarray:
    """Fresh Bernoulli(logistic(latent)) draw; for oracle checks."""
    rng = np.random.default_rng(seed)
    return (rng.random(truth.latent.shape[0]) < truth.prob).astype(np.int64)


def write_truth_file(truth: SynthTruth, path, header_comment: str | None = None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("account_id,latent_score\n")
        for acc, v in zip(truth.account_ids, truth.latent):
            fh.write(f"{acc},{float(v)!r}\n")
