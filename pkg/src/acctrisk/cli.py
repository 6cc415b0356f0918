"""Experiment harness: generate, featurize, train, select, evaluate, compare.

Configuration is a single INI file (key/value with sections); every
hyperparameter has a default and can be overridden. All commands are
pure functions of (config, seed, input files): reruns are byte-identical
and every output file starts with a comment line naming the resolved
config hash and seed.

Exit codes: 0 success, 1 validation/configuration error, 2 numeric
failure (non-convergence, separation, degenerate data).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import os
import re
import sys
from dataclasses import replace

import numpy as np

from . import __version__, backend_name, boost, ensemble, features, glm, metrics, synthgen
from .panel import PanelDataset, PanelValidationError, load_panel, save_panel, split_random, split_temporal

DEFAULT_CONFIG = {
    "synth": {
        "n_firms": "2000",
        "n_months": "36",
        "base_default_rate": "0.05",
        "orthogonal_block": "true",
        "seed": "1",
        "w_violation_intensity": "0.9",
        "w_credit_instability": "0.55",
        "w_low_current_credit": "0.7",
        "w_size": "0.35",
        "w_sector": "0.45",
    },
    "split": {
        "kind": "random",  # random | temporal
        "test_fraction": "0.3",
        "seed": "7",
        "boundary_month": "",
    },
    "features": {
        "definitions": "def1,def3",
        "def3_a": "auto",
        "def3_b": "0.5",
        "def3_c": "3.0",
        "orth_features": "11",
        "per_family_k": "40",
        "final_k": "200",
    },
    "rf": {
        "n_trees": "100",
        "mtry": "0",
        "fraction": "0.6666666666666666",
        "min_node_size": "1",
        "max_depth": "64",
        "with_replacement": "false",
        "seed": "5",
    },
    "boost": {
        "n_rounds": "0",  # 0 = choose by cross-validation over cv_grid
        "eta": "0.01",
        "max_depth": "5",
        "subsample": "0.5",
        "loss": "logistic",
        "min_child_weight": "1.0",
        "cv_folds": "4",
        "cv_grid": "50,100,200,400,800",
        "seed": "3",
    },
    "logit": {
        "max_missing_fraction": "0.5",
    },
    "select": {
        "k": "8",
        "direction": "both",
        "boost_rounds": "300",
        "boost_eta": "0.05",
    },
    "compare": {
        "groups": "def1,def1_top20,def1_top5,merged",
        "models": "logit,rf,brf,boost",
    },
    "output": {
        "threshold": "0.5",
    },
}


class ConfigError(ValueError):
    pass


def read_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULT_CONFIG)
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    for section in cp.sections():
        if section not in DEFAULT_CONFIG:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(cp[section]) - set(DEFAULT_CONFIG[section])
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cp


def config_hash(cp: configparser.ConfigParser) -> str:
    lines = []
    for section in sorted(cp.sections()):
        for key in sorted(cp[section]):
            lines.append(f"{section}.{key}={cp[section][key]}")
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]


def _header(cp, seed) -> str:
    return f"config_hash={config_hash(cp)} seed={seed} acctrisk={__version__}"


def _synth_config(cp) -> synthgen.SynthConfig:
    s = cp["synth"]
    weights = {
        "violation_intensity": s.getfloat("w_violation_intensity"),
        "credit_instability": s.getfloat("w_credit_instability"),
        "low_current_credit": s.getfloat("w_low_current_credit"),
        "size": s.getfloat("w_size"),
        "sector": s.getfloat("w_sector"),
    }
    return synthgen.SynthConfig(
        n_firms=s.getint("n_firms"),
        n_months=s.getint("n_months"),
        base_default_rate=s.getfloat("base_default_rate"),
        signal_weights=weights,
        orthogonal_block=s.getboolean("orthogonal_block"),
        seed=s.getint("seed"),
    )


def _forest_params(cp, sampling: str) -> ensemble.ForestParams:
    r = cp["rf"]
    return ensemble.ForestParams(
        n_trees=r.getint("n_trees"),
        mtry=r.getint("mtry"),
        sampling=sampling,
        fraction=r.getfloat("fraction"),
        with_replacement=r.getboolean("with_replacement"),
        min_node_size=r.getint("min_node_size"),
        max_depth=r.getint("max_depth"),
        seed=r.getint("seed"),
    )


def _boost_params(cp) -> boost.BoostParams:
    b = cp["boost"]
    rounds = b.getint("n_rounds")
    return boost.BoostParams(
        n_rounds=rounds if rounds > 0 else int(b.get("cv_grid").split(",")[-1]),
        eta=b.getfloat("eta"),
        max_depth=b.getint("max_depth"),
        subsample=b.getfloat("subsample"),
        loss=b.get("loss"),
        min_child_weight=b.getfloat("min_child_weight"),
        seed=b.getint("seed"),
    )


def _write_text(path, cp, seed, body: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {_header(cp, seed)}\n")
        fh.write(body)


def _panel_paths(dirname):
    return (
        os.path.join(dirname, "records.csv"),
        os.path.join(dirname, "attributes.csv"),
        os.path.join(dirname, "labels.csv"),
    )


# ---------------------------------------------------------------------------
# pipeline pieces shared by the commands
# ---------------------------------------------------------------------------

def _split_panel(panel: PanelDataset, cp):
    s = cp["split"]
    kind = s.get("kind")
    if kind == "random":
        return split_random(panel, s.getfloat("test_fraction"), s.getint("seed")), "random"
    if kind == "temporal":
        raw = s.get("boundary_month").strip()
        if raw == "":
            raise ConfigError("temporal split needs split.boundary_month")
        return split_temporal(panel, int(raw)), "temporal"
    raise ConfigError(f"unknown split kind {kind!r}")


def _def3_thresholds(cp, train_panel) -> features.Def3Thresholds:
    f = cp["features"]
    if f.get("def3_a").strip() == "auto":
        base = features.default_def3_thresholds(train_panel)
        a = base.a
    else:
        a = f.getfloat("def3_a")
    return features.Def3Thresholds(a=a, b=f.getfloat("def3_b"), c=f.getfloat("def3_c"))


def _align_block(block: features.FeatureMatrix, fm: features.FeatureMatrix) -> features.FeatureMatrix:
    pos = {acc: i for i, (acc, _) in enumerate(block.ids)}
    sel = [pos[acc] for acc, _ in fm.ids]
    return features.FeatureMatrix(
        ids=list(fm.ids),
        columns=list(block.columns),
        values=block.values[sel],
        mask=block.mask[sel],
        provenance=dict(block.provenance),
    )


class _FeatureBundle:
    """Per-split feature matrices for every group the run needs."""

    def __init__(self, cp, train_panel, test_panel, truth=None):
        self.cp = cp
        self.train_panel = train_panel
        self.test_panel = test_panel
        self.truth = truth
        self.sector_map = features.fit_sector_encoding(train_panel)
        self.def1_train = features.compute_def1(train_panel, self.sector_map)
        self.def1_test = features.compute_def1(test_panel, self.sector_map)
        self.y_train = features.default_label_vector(train_panel, self.def1_train)
        self.y_test = features.default_label_vector(test_panel, self.def1_test)
        self._cache: dict[str, tuple] = {"def1": (self.def1_train, self.def1_test)}

    def _atom(self, name: str):
        if name in self._cache:
            return self._cache[name]
        cp = self.cp
        if name == "def3":
            thr = _def3_thresholds(cp, self.train_panel)
            pair = (
                features.compute_def3(self.train_panel, thr),
                features.compute_def3(self.test_panel, thr),
            )
        elif name == "orth":
            if self.truth is None:
                raise ConfigError("group 'orth' needs synthetic data with an orthogonal block")
            block = synthgen.generate_orthogonal_block(
                self.truth, cp["features"].getint("orth_features"), cp["synth"].getint("seed")
            )
            pair = (_align_block(block, self.def1_train), _align_block(block, self.def1_test))
        elif name == "def2":
            base_tr = features.def2_base(self.train_panel)
            base_te = features.def2_base(self.test_panel)
            sel_params = boost.BoostParams(
                n_rounds=cp["select"].getint("boost_rounds"),
                eta=cp["select"].getfloat("boost_eta"),
                max_depth=3,
                subsample=0.8,
                seed=cp["boost"].getint("seed"),
            )
            picked, _ranking = features.staged_interaction_selection(
                base_tr,
                self.y_train,
                cp["features"].getint("per_family_k"),
                cp["features"].getint("final_k"),
                params=sel_params,
            )
            inter_te = features.generate_interactions(base_te)
            pair = (picked, inter_te.select(picked.columns))
        elif m := re.fullmatch(r"def1_top(\d+)", name):
            k = int(m.group(1))
            model = boost.fit_boost(
                self.def1_train.to_dense(),
                self.y_train,
                boost.BoostParams(
                    n_rounds=self.cp["select"].getint("boost_rounds"),
                    eta=self.cp["select"].getfloat("boost_eta"),
                    max_depth=3,
                    subsample=0.8,
                    seed=self.cp["boost"].getint("seed"),
                ),
                columns=self.def1_train.columns,
            )
            ranked = ensemble.rank_importance(model.importance, self.def1_train.columns)
            cols = [c for c, _ in ranked[:k]]
            pair = (self.def1_train.select(cols), self.def1_test.select(cols))
        elif m := re.fullmatch(r"def1_aic(\d+)", name):
            k = int(m.group(1))
            _, trace = glm.stepwise_select(
                self.def1_train.to_dense(),
                self.y_train,
                direction="forward",
                columns=self.def1_train.columns,
            )
            added = [r.column for r in trace if r.action == "add"][:k]
            if not added:
                raise ConfigError(f"forward selection added no columns for group {name}")
            pair = (self.def1_train.select(added), self.def1_test.select(added))
        else:
            raise ConfigError(f"unknown feature group atom {name!r}")
        self._cache[name] = pair
        return pair

    def group(self, expr: str):
        expr = expr.strip()
        if expr == "merged":
            expr = "def1+orth"
        atoms = [a.strip() for a in expr.split("+") if a.strip()]
        if not atoms:
            raise ConfigError("empty group expression")
        tr, te = self._atom(atoms[0])
        for extra in atoms[1:]:
            etr, ete = self._atom(extra)
            tr = tr.hstack(etr)
            te = te.hstack(ete)
        return tr, te


def _fit_model(name: str, cp, fm_train, y_train, fm_test, n_jobs: int = 1):
    """Train one model; returns (train_scores, test_scores, details).

    Scores may contain NaN where a model cannot score a row (logit on
    incomplete cases); AUCs are computed on scored rows and the counts
    recorded.
    """
    X_tr = fm_train.to_dense()
    X_te = fm_test.to_dense()
    details: dict = {"model": name, "n_columns": len(fm_train.columns)}
    if name == "logit":
        max_miss = cp["logit"].getfloat("max_missing_fraction")
        missfrac = fm_train.mask.mean(axis=0)
        keep = [c for c, m in zip(fm_train.columns, missfrac) if m <= max_miss]
        dropped_cols = [c for c in fm_train.columns if c not in keep]
        pos = [fm_train.columns.index(c) for c in keep]
        model = glm.fit_logit(X_tr[:, pos], y_train, keep)
        details.update(
            {
                "dropped_columns": dropped_cols,
                "n_train_used": model.n_obs,
                "n_train_dropped": model.n_dropped,
                "aic": model.aic,
            }
        )
        return model.predict(X_tr[:, pos]), model.predict(X_te[:, pos]), details, model
    if name in ("rf", "brf"):
        params = _forest_params(cp, "uniform" if name == "rf" else "balanced")
        forest = ensemble.fit_forest(X_tr, y_train, params, columns=fm_train.columns, n_jobs=n_jobs)
        oob = ensemble.oob_predictions(forest, X_tr)
        ok = ~np.isnan(oob)
        details["oob_auc"] = (
            metrics.auc(oob[ok], y_train[ok]) if np.unique(y_train[ok]).shape[0] == 2 else None
        )
        details["n_trees"] = params.n_trees
        return ensemble.predict_forest(forest, X_tr), ensemble.predict_forest(forest, X_te), details, forest
    if name == "boost":
        params = _boost_params(cp)
        if cp["boost"].getint("n_rounds") == 0:
            grid = [int(g) for g in cp["boost"].get("cv_grid").split(",")]
            cv = boost.cv_rounds(X_tr, y_train, params, cp["boost"].getint("cv_folds"), grid)
            params = replace(params, n_rounds=cv.best_rounds)
            details["cv_grid"] = grid
            details["cv_mean_auc"] = [float(v) for v in cv.mean_auc]
        model = boost.fit_boost(X_tr, y_train, params, columns=fm_train.columns)
        details["n_rounds"] = params.n_rounds
        details["rounds_per_column"] = params.n_rounds / len(fm_train.columns)
        return model.predict(X_tr), model.predict(X_te), details, model
    raise ConfigError(f"unknown model {name!r}")


def _scored_auc(scores, y):
    ok = ~np.isnan(scores)
    if np.unique(y[ok]).shape[0] < 2:
        return float("nan"), int(ok.sum())
    return metrics.auc(scores[ok], y[ok]), int(ok.sum())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args, cp) -> int:
    cfg = _synth_config(cp)
    panel, truth = synthgen.generate_panel(cfg)
    os.makedirs(args.out, exist_ok=True)
    rec, att, lab = _panel_paths(args.out)
    save_panel(panel, rec, att, lab, header_comment=_header(cp, cfg.seed))
    synthgen.write_truth_file(truth, os.path.join(args.out, "truth.csv"), header_comment=_header(cp, cfg.seed))
    if cfg.orthogonal_block:
        block = synthgen.generate_orthogonal_block(
            truth, cp["features"].getint("orth_features"), cfg.seed
        )
        block.write_csv(os.path.join(args.out, "orth_features.csv"), header_comment=_header(cp, cfg.seed))
    rate = panel.label_vector().mean()
    print(f"wrote {len(panel.labels)} labeled accounts (default rate {rate:.4f}) to {args.out}")
    for d in panel.diagnostics:
        print(f"diagnostic: {d}", file=sys.stderr)
    return 0


def cmd_featurize(args, cp) -> int:
    panel = load_panel(*_panel_paths(args.data))
    (train_panel, test_panel), split_kind = _split_panel(panel, cp)
    os.makedirs(args.out, exist_ok=True)
    seed = cp["split"].getint("seed")
    sector_map = features.fit_sector_encoding(train_panel)
    wanted = [d.strip() for d in cp["features"].get("definitions").split(",") if d.strip()]
    thr = _def3_thresholds(cp, train_panel) if "def3" in wanted else None
    for side, pnl in (("train", train_panel), ("test", test_panel)):
        save_panel(
            pnl,
            os.path.join(args.out, f"records_{side}.csv"),
            os.path.join(args.out, f"attributes_{side}.csv"),
            os.path.join(args.out, f"labels_{side}.csv"),
            header_comment=_header(cp, seed),
        )
        for d in wanted:
            if d == "def1":
                fm = features.compute_def1(pnl, sector_map)
            elif d == "def3":
                fm = features.compute_def3(pnl, thr)
            elif d == "def2":
                fm = features.def2_base(pnl)
            else:
                raise ConfigError(f"unknown definition {d!r} in features.definitions")
            fm.write_csv(os.path.join(args.out, f"features_{d}_{side}.csv"), header_comment=_header(cp, seed))
    meta = {
        "split_kind": split_kind,
        "n_train": len(train_panel.labels),
        "n_test": len(test_panel.labels),
        "sector_encoding": sector_map,
        "diagnostics": panel.diagnostics,
    }
    _write_text(os.path.join(args.out, "featurize_meta.json"), cp, seed, json.dumps(meta, indent=1, sort_keys=True) + "\n")
    print(f"featurized {meta['n_train']} train / {meta['n_test']} test accounts ({split_kind} split)")
    return 0


def _load_features_and_labels(features_path, labels_path):
    fm = features.FeatureMatrix.read_csv(features_path)
    labels = {}
    with open(labels_path, "r", encoding="utf-8") as fh:
        rows = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    for ln in rows[1:]:
        acc, _t, d = ln.split(",")
        labels[acc] = int(d)
    y = np.array([labels[acc] for acc, _ in fm.ids], dtype=np.int64)
    return fm, y


def cmd_train(args, cp) -> int:
    fm, y = _load_features_and_labels(args.features, args.labels)
    tr_scores, _te, details, model = _fit_model(args.model, cp, fm, y, fm, n_jobs=args.threads)
    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, f"model_{args.model}.json")
    payload = model.to_dict()
    payload["train_details"] = details
    envelope = {"_header": _header(cp, 0), "payload": payload}
    with open(model_path, "w", encoding="utf-8") as fh:
        json.dump(envelope, fh, sort_keys=True)
        fh.write("\n")
    auc_tr, n_scored = _scored_auc(tr_scores, y)
    print(f"trained {args.model}: train AUC {auc_tr:.4f} on {n_scored} rows -> {model_path}")
    return 0


def _load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)["payload"]
    kind = payload.get("kind")
    if kind == "forest":
        return ensemble.Forest.from_dict(payload)
    if kind == "boost":
        return boost.BoostedModel.from_dict(payload)
    if kind == "glm":
        return glm.GlmModel.from_dict(payload)
    raise ConfigError(f"unknown model kind {kind!r} in {path}")


def _model_scores(model, fm):
    if isinstance(model, glm.GlmModel):
        return model.predict(fm.to_dense(), columns=fm.columns)
    if isinstance(model, ensemble.Forest):
        return ensemble.predict_forest(model, fm.to_dense())
    return model.predict(fm.to_dense())


def _write_eval(out_dir, prefix, cp, scores, y, threshold):
    ok = ~np.isnan(scores)
    report = metrics.evaluate_scores(scores[ok], y[ok], threshold)
    roc_body = io.StringIO()
    roc_body.write("fpr,tpr\n")
    for fpr, tpr in report.roc:
        roc_body.write(f"{float(fpr)!r},{float(tpr)!r}\n")
    _write_text(os.path.join(out_dir, f"{prefix}_roc.csv"), cp, 0, roc_body.getvalue())
    payload = report.to_dict()
    payload["n_scored"] = int(ok.sum())
    payload["n_rows"] = int(scores.shape[0])
    _write_text(
        os.path.join(out_dir, f"{prefix}_report.json"),
        cp,
        0,
        json.dumps(payload, indent=1, sort_keys=True) + "\n",
    )
    return report


def cmd_evaluate(args, cp) -> int:
    model = _load_model(args.model)
    fm, y = _load_features_and_labels(args.features, args.labels)
    os.makedirs(args.out, exist_ok=True)
    scores = _model_scores(model, fm)
    report = _write_eval(args.out, "eval", cp, scores, y, cp["output"].getfloat("threshold"))
    print(f"AUC {report.auc:.4f}; confusion at {report.confusion.threshold}: "
          f"class0 err {report.confusion.class0_error:.4f} class1 err {report.confusion.class1_error:.4f}")
    return 0


def cmd_report(args, cp) -> int:
    model = _load_model(args.model)
    fm, y = _load_features_and_labels(args.features, args.labels)
    os.makedirs(args.out, exist_ok=True)
    scores = _model_scores(model, fm)
    report = _write_eval(args.out, "report", cp, scores, y, cp["output"].getfloat("threshold"))
    if isinstance(model, glm.GlmModel):
        _write_text(os.path.join(args.out, "glm_summary.txt"), cp, 0, model.summary() + "\n")
    else:
        imp = model.importance if isinstance(model, boost.BoostedModel) else ensemble.forest_importance(model)
        ranked = ensemble.rank_importance(imp, model.columns)
        body = "column,importance\n" + "".join(f"{c},{v!r}\n" for c, v in ranked)
        _write_text(os.path.join(args.out, "importance.csv"), cp, 0, body)
    print(f"report written to {args.out} (AUC {report.auc:.4f})")
    return 0


def cmd_select(args, cp) -> int:
    """Compare k variables chosen by boosting importance, stepwise AIC and
    the exact-cardinality lasso on the continuous definition."""
    if args.data:
        panel = load_panel(*_panel_paths(args.data))
    else:
        panel, _ = synthgen.generate_panel(_synth_config(cp))
    (train_panel, _test_panel), _ = _split_panel(panel, cp)
    fm = features.compute_def1(train_panel, features.fit_sector_encoding(train_panel))
    y = features.default_label_vector(train_panel, fm)
    k = cp["select"].getint("k")
    if k > len(fm.columns):
        raise ConfigError(f"select.k={k} exceeds the {len(fm.columns)} available columns")
    X = fm.to_dense()

    model = boost.fit_boost(
        X,
        y,
        boost.BoostParams(
            n_rounds=cp["select"].getint("boost_rounds"),
            eta=cp["select"].getfloat("boost_eta"),
            max_depth=3,
            subsample=0.8,
            seed=cp["boost"].getint("seed"),
        ),
        columns=fm.columns,
    )
    boost_list = [c for c, _ in ensemble.rank_importance(model.importance, fm.columns)[:k]]

    step_model, trace = glm.stepwise_select(X, y, cp["select"].get("direction"), fm.columns)
    step_selected = [t for t in step_model.terms if t != "(Intercept)"]
    if len(step_selected) != k:
        order = [r.column for r in trace if r.action == "add"]
        step_list = order[:k] if len(order) >= k else step_selected
        step_note = f"stepwise chose {len(step_selected)} variables; listing first {len(step_list)} forward additions"
    else:
        step_list = step_selected
        step_note = ""

    lasso_fit = glm.lasso_exact_k(X, y, k)
    lasso_list = [fm.columns[j] for j in lasso_fit.active]

    lists = {"boosting": boost_list, "stepwise": step_list, "lasso": lasso_list}
    members = sorted(set().union(*lists.values()), key=lambda c: fm.columns.index(c))
    body = io.StringIO()
    body.write("column,boosting,stepwise,lasso\n")
    for c in members:
        body.write(
            ",".join([c] + ["YES" if c in lists[m] else "" for m in ("boosting", "stepwise", "lasso")]) + "\n"
        )
    os.makedirs(args.out, exist_ok=True)
    _write_text(os.path.join(args.out, "select_membership.csv"), cp, 0, body.getvalue())
    overlap = {
        f"{a}&{b}": len(set(lists[a]) & set(lists[b]))
        for a, b in (("boosting", "stepwise"), ("boosting", "lasso"), ("stepwise", "lasso"))
    }
    payload = {
        "k": k,
        "lists": lists,
        "overlap": overlap,
        "lasso_lambda": lasso_fit.lam,
        "lasso_exact": lasso_fit.exact_k,
        "notes": [n for n in [step_note] if n],
    }
    _write_text(os.path.join(args.out, "select_overlap.json"), cp, 0, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(f"selection lists written to {args.out}; overlaps {overlap}")
    return 0


def cmd_compare(args, cp) -> int:
    """AUC grid: one row per feature group, one column per model."""
    truth = None
    if args.data:
        panel = load_panel(*_panel_paths(args.data))
    else:
        panel, truth = synthgen.generate_panel(_synth_config(cp))
    (train_panel, test_panel), split_kind = _split_panel(panel, cp)
    bundle = _FeatureBundle(cp, train_panel, test_panel, truth)
    groups = [g.strip() for g in cp["compare"].get("groups").split(",") if g.strip()]
    models = [m.strip() for m in cp["compare"].get("models").split(",") if m.strip()]
    threshold = cp["output"].getfloat("threshold")

    test_grid = {}
    train_grid = {}
    detail_rows = []
    for group in groups:
        fm_tr, fm_te = bundle.group(group)
        for model_name in models:
            tr_scores, te_scores, details, _model = _fit_model(
                model_name, cp, fm_tr, bundle.y_train, fm_te, n_jobs=args.threads
            )
            auc_tr, n_tr = _scored_auc(tr_scores, bundle.y_train)
            auc_te, n_te = _scored_auc(te_scores, bundle.y_test)
            test_grid[(group, model_name)] = auc_te
            train_grid[(group, model_name)] = auc_tr
            ok = ~np.isnan(te_scores)
            conf = (
                metrics.confusion(te_scores[ok], bundle.y_test[ok], threshold).to_dict()
                if np.unique(bundle.y_test[ok]).shape[0] == 2
                else None
            )
            details.update(
                {
                    "group": group,
                    "train_auc": auc_tr,
                    "test_auc": auc_te,
                    "n_train_scored": n_tr,
                    "n_test_scored": n_te,
                    "test_confusion": conf,
                    "split_kind": split_kind,
                }
            )
            detail_rows.append(details)

    os.makedirs(args.out, exist_ok=True)

    def _grid_body(grid):
        body = io.StringIO()
        body.write("group," + ",".join(models) + "\n")
        for g in groups:
            body.write(g + "," + ",".join(f"{grid[(g, m)]:.6f}" for m in models) + "\n")
        return body.getvalue()

    _write_text(os.path.join(args.out, "compare_test_auc.csv"), cp, 0, _grid_body(test_grid))
    _write_text(os.path.join(args.out, "compare_train_auc.csv"), cp, 0, _grid_body(train_grid))
    _write_text(
        os.path.join(args.out, "compare_details.json"),
        cp,
        0,
        json.dumps(detail_rows, indent=1, sort_keys=True) + "\n",
    )
    print(_grid_body(test_grid), end="")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acctrisk",
        description="Account-activity default risk experiments on synthetic panels "
        f"(kernel backend: {backend_name()})",
    )
    parser.add_argument("--config", help="INI config file; defaults apply for missing keys")
    parser.add_argument("--seed", type=int, help="override synth.seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for forest fitting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic panel (records/attributes/labels/truth)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="split a panel and write feature matrices per definition")
    p.add_argument("--data", required=True, help="directory with records.csv/attributes.csv/labels.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="fit one model on a feature file")
    p.add_argument("--model", required=True, choices=["logit", "rf", "brf", "boost"])
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="compare boosting/stepwise/lasso variable selections")
    p.add_argument("--data", help="panel directory; omitted = generate per config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="score a persisted model on a feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="AUC grid over feature groups and models")
    p.add_argument("--data", help="panel directory; omitted = generate per config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="evaluation plus importance table or GLM summary")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cp = read_config(args.config)
        if args.seed is not None:
            cp["synth"]["seed"] = str(args.seed)
        return args.func(args, cp)
    except (ConfigError, PanelValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except glm.GlmError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
