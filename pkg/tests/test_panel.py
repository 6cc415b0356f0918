import os

import numpy as np
import pytest

from acctrisk import synthgen
from acctrisk.panel import (
    AccountLabel,
    FirmAttributes,
    PanelValidationError,
    load_panel,
    save_panel,
    split_random,
    split_temporal,
)

from conftest import DATA_DIR, make_panel, make_record


def toy_paths():
    return (
        os.path.join(DATA_DIR, "toy_records.csv"),
        os.path.join(DATA_DIR, "toy_attributes.csv"),
        os.path.join(DATA_DIR, "toy_labels.csv"),
    )


class TestLoadPanel:
    def test_two_well_formed_accounts(self, tmp_path):
        panel = make_panel(n_accounts=2)
        paths = [tmp_path / n for n in ("r.csv", "a.csv", "l.csv")]
        save_panel(panel, *paths)
        loaded = load_panel(*paths)
        assert loaded.labeled_accounts() == ["T0000", "T0001"]
        assert loaded.diagnostics == []

    def test_toy_panel_loads(self):
        panel = load_panel(*toy_paths())
        assert panel.labeled_accounts() == ["T0001"]
        assert panel.labels["T0001"] == AccountLabel(23, 1)
        assert panel.attributes["T0001"].unpaid_loan_months == frozenset([15])

    def test_balance_ordering_violation_names_row(self, tmp_path):
        panel = make_panel(n_accounts=1)
        paths = [tmp_path / n for n in ("r.csv", "a.csv", "l.csv")]
        save_panel(panel, *paths)
        lines = paths[0].read_text().splitlines()
        parts = lines[5].split(",")
        parts[2], parts[3] = "99.0", "10.0"  # min above max
        lines[5] = ",".join(parts)
        paths[0].write_text("\n".join(lines) + "\n")
        with pytest.raises(PanelValidationError, match="balance ordering"):
            load_panel(*paths)

    def test_missing_file(self, tmp_path):
        with pytest.raises(PanelValidationError, match="not found"):
            load_panel(tmp_path / "nope.csv", tmp_path / "a.csv", tmp_path / "l.csv")

    def test_malformed_number_names_row(self, tmp_path):
        panel = make_panel(n_accounts=1)
        paths = [tmp_path / n for n in ("r.csv", "a.csv", "l.csv")]
        save_panel(panel, *paths)
        lines = paths[0].read_text().splitlines()
        parts = lines[3].split(",")
        parts[7] = "oops"
        lines[3] = ",".join(parts)
        paths[0].write_text("\n".join(lines) + "\n")
        with pytest.raises(PanelValidationError, match="row 4"):
            load_panel(*paths)

    def test_duplicate_month_rejected(self):
        recs = [make_record("A", 0), make_record("A", 0)]
        with pytest.raises(PanelValidationError, match="duplicate"):
            from acctrisk.panel import PanelDataset

            PanelDataset.from_components(recs, [], {})

    def test_label_without_records(self):
        from acctrisk.panel import PanelDataset

        with pytest.raises(PanelValidationError, match="no records"):
            PanelDataset.from_components(
                [make_record("A", m) for m in range(24)],
                [FirmAttributes("B", "Service", 1.0, 1.0)],
                {"B": AccountLabel(23, 0)},
            )

    def test_counter_decrease_within_year_rejected(self):
        recs = [make_record("A", m, int_cnviol=float(5 - m)) for m in range(3)]
        from acctrisk.panel import PanelDataset

        with pytest.raises(PanelValidationError, match="decreases"):
            PanelDataset.from_components(recs, [], {})

    def test_counter_reset_at_january_allowed(self):
        # months 11 -> 12 cross a calendar-year boundary
        recs = [make_record("A", m, int_cnviol=3.0 if m < 12 else 0.0) for m in range(14)]
        from acctrisk.panel import PanelDataset

        PanelDataset.from_components(recs, [], {})

    def test_incomplete_window_reported_not_fatal(self):
        from acctrisk.panel import PanelDataset

        recs = [make_record("A", m) for m in range(10, 24)]  # only 14 months
        panel = PanelDataset.from_components(
            recs,
            [FirmAttributes("A", "Service", 1.0, 1.0)],
            {"A": AccountLabel(23, 1)},
        )
        assert panel.labels == {}
        assert any("incomplete" in d for d in panel.diagnostics)

    def test_roundtrip_on_generator_output(self, tmp_path):
        cfg = synthgen.SynthConfig(n_firms=40, seed=9)
        panel, _ = synthgen.generate_panel(cfg)
        paths = [tmp_path / n for n in ("r.csv", "a.csv", "l.csv")]
        save_panel(panel, *paths)
        loaded = load_panel(*paths)
        assert loaded.diagnostics == []
        assert loaded.labeled_accounts() == panel.labeled_accounts()
        for acc in panel.accounts:
            np.testing.assert_array_equal(loaded.accounts[acc].months, panel.accounts[acc].months)
            np.testing.assert_array_equal(loaded.accounts[acc].data, panel.accounts[acc].data)
        # serialize(load(x)) == x for canonical files
        paths2 = [tmp_path / n for n in ("r2.csv", "a2.csv", "l2.csv")]
        save_panel(loaded, *paths2)
        for p1, p2 in zip(paths, paths2):
            assert p1.read_bytes() == p2.read_bytes()


class TestSplitTemporal:
    def _two_cohorts(self):
        early = make_panel(n_accounts=2, snapshot=35)
        late = make_panel(n_accounts=2, snapshot=47)
        # merge into one panel under distinct ids
        from acctrisk.panel import PanelDataset

        accounts = {}
        attributes = {}
        labels = {}
        for prefix, pnl in (("E", early), ("L", late)):
            for acc in pnl.accounts:
                accounts[prefix + acc] = pnl.accounts[acc]
                attributes[prefix + acc] = pnl.attributes[acc]
                labels[prefix + acc] = pnl.labels[acc]
        return PanelDataset(accounts, attributes, labels)

    def test_two_group_split(self):
        panel = self._two_cohorts()
        train, test = split_temporal(panel, 35)
        assert sorted(train.labels) == ["ET0000", "ET0001"]
        assert sorted(test.labels) == ["LT0000", "LT0001"]

    def test_boundary_out_of_range(self):
        panel = self._two_cohorts()
        with pytest.raises(PanelValidationError, match="outside"):
            split_temporal(panel, 100)

    def test_partition_identity_over_seeds(self):
        panel = self._two_cohorts()
        train, test = split_temporal(panel, 40)
        union = set(train.labels) | set(test.labels)
        assert union == set(panel.labels)
        assert set(train.labels) & set(test.labels) == set()


class TestSplitRandom:
    def test_proportional_stratification(self):
        defaults = {f"T{i:04d}": 1 if i < 5 else 0 for i in range(100)}
        panel = make_panel(n_accounts=100, defaults=defaults)
        train, test = split_random(panel, 0.2, 7)
        y_test = test.label_vector()
        assert y_test.sum() == 1
        assert len(y_test) == 20

    def test_determinism(self):
        panel = make_panel(n_accounts=50, defaults={"T0001": 1, "T0007": 1})
        a1 = split_random(panel, 0.3, 11)
        a2 = split_random(panel, 0.3, 11)
        assert sorted(a1[1].labels) == sorted(a2[1].labels)
        assert sorted(a1[0].labels) == sorted(a2[0].labels)

    def test_fraction_out_of_range(self):
        panel = make_panel(n_accounts=4, defaults={"T0000": 1})
        with pytest.raises(PanelValidationError):
            split_random(panel, 1.5, 0)

    def test_single_class_rejected(self):
        panel = make_panel(n_accounts=4)
        with pytest.raises(PanelValidationError, match="zero members"):
            split_random(panel, 0.5, 0)

    def test_partition_identity(self):
        panel = make_panel(n_accounts=30, defaults={f"T{i:04d}": 1 for i in range(6)})
        for seed in range(5):
            train, test = split_random(panel, 0.25, seed)
            assert set(train.labels) | set(test.labels) == set(panel.labels)
            assert set(train.labels) & set(test.labels) == set()

    def test_default_rate_balance_monte_carlo(self):
        cfg = synthgen.SynthConfig(n_firms=10000, base_default_rate=0.05, seed=3)
        panel, _ = synthgen.generate_panel(cfg)
        diffs = []
        for seed in range(100):
            train, test = split_random(panel, 0.3, seed)
            diffs.append(abs(train.label_vector().mean() - test.label_vector().mean()))
        assert float(np.mean(diffs)) < 0.005
