import os

import numpy as np
import pytest

from acctrisk import features, synthgen
from acctrisk.panel import (
    AccountLabel,
    FirmAttributes,
    MonthlyRecord,
    PanelDataset,
    split_random,
)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")

# the fixed synthetic dataset most behavioral tests run on
REFERENCE_CONFIG = synthgen.SynthConfig(
    n_firms=6000, n_months=36, base_default_rate=0.06, orthogonal_block=True, seed=42
)


def make_record(account_id, month, **overrides):
    """A valid monthly record with small deterministic defaults."""
    base = dict(
        min_bal=40.0 + month,
        max_bal=70.0 + month,
        mean_bal=50.0 + month,
        mean_crbal=40.0,
        mean_dbbal=-5.0,
        tcredit=100.0,
        tdebit=90.0,
        int_cnviol=0.0,
        rej_cnviol=0.0,
        int_caviol=0.0,
        rej_caviol=0.0,
    )
    base.update(overrides)
    return MonthlyRecord(account_id, month, **base)


def make_panel(n_accounts=2, n_months=24, snapshot=23, defaults=None, sectors=None):
    """Tiny valid panel: each account has months [snapshot-n_months+1, snapshot]."""
    defaults = defaults or {}
    records = []
    attributes = []
    labels = {}
    for i in range(n_accounts):
        acc = f"T{i:04d}"
        start = snapshot - n_months + 1
        for m in range(start, snapshot + 1):
            records.append(make_record(acc, m))
        sector = (sectors or {}).get(acc, "Service")
        attributes.append(FirmAttributes(acc, sector, 1000.0 + i, 2.0, frozenset()))
        labels[acc] = AccountLabel(snapshot, defaults.get(acc, 0))
    return PanelDataset.from_components(records, attributes, labels)


@pytest.fixture(scope="session")
def reference_data():
    """Generated panel + split + def1 features, shared across test modules."""
    panel, truth = synthgen.generate_panel(REFERENCE_CONFIG)
    train, test = split_random(panel, 0.3, 7)
    enc = features.fit_sector_encoding(train)
    f_tr = features.compute_def1(train, enc)
    f_te = features.compute_def1(test, enc)
    return {
        "panel": panel,
        "truth": truth,
        "train": train,
        "test": test,
        "f_tr": f_tr,
        "f_te": f_te,
        "y_tr": features.default_label_vector(train, f_tr),
        "y_te": features.default_label_vector(test, f_te),
        "X_tr": f_tr.to_dense(),
        "X_te": f_te.to_dense(),
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
