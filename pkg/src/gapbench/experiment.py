"""Declarative experiment runner.

A single JSON config names datasets (paths or generator settings), prediction
time policies, input lengths, split methods, models, and metrics.  The runner
executes the full grid, converting each model's native prediction form to
whatever each metric needs, and produces a report with one entry per grid
cell (a score or an error, never silence).  Identical configs produce
byte-identical reports.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import metrics as metrics_mod
from .extraction import T0Policy, extract_dataset
from .generator import GeneratorConfig, generate
from .models import build_model
from .scenario import ScenarioParams, make_scenario
from .scene_io import config_hash, load_scenes
from .splitting import split_extreme, split_random_stratified
from .transforms import TransformContext, auto_chain

REPORT_FORMAT_VERSION = 1


@dataclass
class ExperimentConfig:
    datasets: list[dict]
    policies: list[dict]
    n_input_steps: list[int]
    step: float
    splits: list[dict]
    models: list[dict]
    metrics: list[dict]
    n_p: int = 20
    transform_seed: int = 0
    t_eps: float = 0.5
    scenario: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**payload)
        for ds in cfg.datasets:
            if "name" not in ds or ("path" not in ds and "generator" not in ds):
                raise ValueError("each dataset needs a name and a path or generator")
            if "path" in ds and not Path(ds["path"]).exists():
                raise ValueError(f"dataset path does not exist: {ds['path']}")
        for m in cfg.models:
            if "name" not in m or "type" not in m:
                raise ValueError("each model needs a name and a type")
        if not cfg.policies or not cfg.n_input_steps or not cfg.metrics:
            raise ValueError("policies, n_input_steps, and metrics must be nonempty")
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def canonical(self) -> dict:
        return {
            "datasets": self.datasets, "policies": self.policies,
            "n_input_steps": self.n_input_steps, "step": self.step,
            "splits": self.splits, "models": self.models, "metrics": self.metrics,
            "n_p": self.n_p, "transform_seed": self.transform_seed,
            "t_eps": self.t_eps, "scenario": self.scenario,
        }

    def override_seeds(self, seed: int) -> None:
        for ds in self.datasets:
            if "generator" in ds:
                ds["generator"]["seed"] = seed
        for sp in self.splits:
            if "seed" in sp:
                sp["seed"] = seed
        self.transform_seed = seed


def _policy_from(cfg: dict) -> T0Policy:
    kind = cfg["kind"]
    if kind == "initial":
        return T0Policy.initial()
    if kind == "fixed_gap":
        return T0Policy.fixed_gap(cfg["gap"])
    if kind == "critical":
        return T0Policy.critical(cfg.get("t_eps", 0.5))
    raise ValueError(f"unknown policy kind {kind!r}")


def _split_label(cfg: dict) -> str:
    if cfg["method"] == "random_stratified":
        return f"random_stratified_s{cfg['seed']}"
    return cfg["method"]


def _metric_label(cfg: dict) -> str:
    name = cfg["name"]
    if name in ("ade", "fde"):
        return f"{name}_b{cfg.get('beta', 1.0):g}"
    return name


def _seed_for(base: int, *tags) -> int:
    digest = hashlib.sha256(":".join([str(base), *map(str, tags)]).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _load_dataset_scenes(ds_cfg: dict):
    if "generator" in ds_cfg:
        gen = GeneratorConfig(**ds_cfg["generator"])
        scenes, _ = generate(gen)
        return scenes, gen.scenario_kind
    scenes = load_scenes(ds_cfg["path"])
    kinds = {s.scenario_kind for s in scenes}
    if len(kinds) != 1:
        raise ValueError(f"dataset {ds_cfg['name']!r} mixes scenario kinds {kinds}")
    return scenes, kinds.pop()


def _evaluate(metric_cfg: dict, preds: list, test_samples: list,
              policy_label: str):
    name = metric_cfg["name"]
    if metrics_mod.required_form(name) == "binary":
        scores = [p.a_pred for p in preds]
        truths = [s.a for s in test_samples]
        if name == "accuracy":
            return metrics_mod.accuracy(scores, truths,
                                        metric_cfg.get("threshold", 0.5), policy_label)
        if name == "auc":
            return metrics_mod.auc(scores, truths, policy_label)
        if name == "tnr_pr":
            return metrics_mod.tnr_pr(scores, truths, policy_label)
        raise ValueError(f"unknown binary metric {name!r}")
    pred_sets = [p.trajs for p in preds]
    truths = [s.x_o for s in test_samples]
    if name == "ade":
        return metrics_mod.ade_beta(pred_sets, truths, metric_cfg.get("beta", 1.0),
                                    policy_label)
    if name == "fde":
        return metrics_mod.fde_beta(pred_sets, truths, metric_cfg.get("beta", 1.0),
                                    policy_label)
    if name == "miss_rate":
        return metrics_mod.miss_rate(pred_sets, truths,
                                     metric_cfg.get("r_miss", 2.0), policy_label)
    raise ValueError(f"unknown trajectory metric {name!r}")


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute the full (dataset x policy x n_i x split x model x metric) grid.

    Training only ever sees train-split samples; prediction-form conversions
    rely on class-conditional trajectory models fitted on the same train
    split.  Per-cell failures are recorded in the report and the remaining
    cells still run.
    """
    canonical = config.canonical()
    report = {
        "format_version": REPORT_FORMAT_VERSION,
        "config": canonical,
        "config_hash": config_hash(canonical),
        "dataset_stats": [],
        "cells": [],
    }

    def emit_error_cells(ds, pol, n_i, split_label, message):
        for m_cfg in config.models:
            for metric_cfg in config.metrics:
                report["cells"].append({
                    "dataset": ds, "policy": pol, "n_i": n_i, "split": split_label,
                    "model": m_cfg["name"], "metric": _metric_label(metric_cfg),
                    "transform": None, "value": None, "baseline": None,
                    "policy_check": None, "n_test": None, "error": message,
                })

    for ds_cfg in config.datasets:
        ds_name = ds_cfg["name"]
        scenes, kind = _load_dataset_scenes(ds_cfg)
        scenario = make_scenario(kind, ScenarioParams(**config.scenario))
        scene_map = {s.scene_id: s for s in scenes}
        for pol_cfg in config.policies:
            policy = _policy_from(pol_cfg)
            for n_i in config.n_input_steps:
                dataset = extract_dataset(scenes, policy, n_i, config.step,
                                          scenario, config.t_eps)
                report["dataset_stats"].append({
                    "dataset": ds_name, "policy": policy.label, "n_i": n_i,
                    "n_scenes": len(scenes), "n_samples": len(dataset),
                    "n_accepted": sum(s.a for s in dataset.samples),
                    "excluded": dataset.excluded, "rejected": dataset.rejected,
                    "scene_errors": dataset.errors, "provenance": dataset.provenance,
                })
                for split_cfg in config.splits:
                    split_label = _split_label(split_cfg)
                    try:
                        if split_cfg["method"] == "random_stratified":
                            split = split_random_stratified(dataset, split_cfg["seed"])
                        elif split_cfg["method"] == "extreme":
                            split = split_extreme(dataset)
                        else:
                            raise ValueError(
                                f"unknown split method {split_cfg['method']!r}")
                    except ValueError as exc:
                        emit_error_cells(ds_name, policy.label, n_i, split_label,
                                         f"split failed: {exc}")
                        continue
                    train = [dataset.samples[i] for i in split.train_idx]
                    test = [dataset.samples[i] for i in split.test_idx]
                    cond = _fit_conditional_models(train)
                    for m_cfg in config.models:
                        _run_model_cells(report, config, ds_name, policy, n_i,
                                         split_label, m_cfg, train, test,
                                         scene_map, scenario, cond)
    return report


def _fit_conditional_models(train):
    """Class-conditional trajectory models used by the form conversions;
    a missing class leaves that side unavailable (cells needing it fail)."""
    from .models import retrieval_train

    cond = {}
    for cls, key in ((1, "m_a"), (0, "m_not_a")):
        try:
            cond[key] = retrieval_train(train, cls)
        except ValueError:
            cond[key] = None
    return cond


def _run_model_cells(report, config, ds_name, policy, n_i, split_label,
                     m_cfg, train, test, scene_map, scenario, cond):
    model_name = m_cfg["name"]

    def cell(metric_label, **kw):
        base = {"dataset": ds_name, "policy": policy.label, "n_i": n_i,
                "split": split_label, "model": model_name, "metric": metric_label,
                "transform": None, "value": None, "baseline": None,
                "policy_check": None, "n_test": len(test), "error": None}
        base.update(kw)
        report["cells"].append(base)

    try:
        model = build_model({k: v for k, v in m_cfg.items()})
        model.fit(train)
        raw_preds = [model.predict(s) for s in test]
    except Exception as exc:
        for metric_cfg in config.metrics:
            cell(_metric_label(metric_cfg), error=f"model failed: {exc}")
        return

    for metric_cfg in config.metrics:
        label = _metric_label(metric_cfg)
        form = metrics_mod.required_form(metric_cfg["name"])
        route = "identity" if model.output_form == form \
            else f"{model.output_form}->{form}"
        try:
            preds = []
            for i, (pred, sample) in enumerate(zip(raw_preds, test)):
                ctx = TransformContext(
                    scene=scene_map[sample.scene_id], scenario=scenario,
                    sample=sample, m_a=cond["m_a"], m_not_a=cond["m_not_a"],
                    n_p=config.n_p,
                    seed=_seed_for(config.transform_seed, ds_name, policy.label,
                                   n_i, split_label, model_name, i),
                )
                preds.append(auto_chain(pred, form, ctx))
            result = _evaluate(metric_cfg, preds, test, policy.label)
            baseline = None
            if form == "binary":
                baseline = metrics_mod.random_baseline(
                    metric_cfg["name"], [s.a for s in test],
                    seed=_seed_for(config.transform_seed, "baseline", ds_name,
                                   policy.label, n_i, split_label, label),
                    threshold=metric_cfg.get("threshold", 0.5))
            cell(label, transform=route, value=result.value, baseline=baseline,
                 policy_check=result.policy_check)
        except Exception as exc:
            cell(label, transform=route, error=f"{type(exc).__name__}: {exc}")


REPORT_CSV_COLUMNS = ["dataset", "policy", "n_i", "split", "model", "metric",
                      "transform", "value", "baseline", "policy_check",
                      "n_test", "error"]


def report_to_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_CSV_COLUMNS)
    for c in report["cells"]:
        writer.writerow([
            c["dataset"], c["policy"], c["n_i"], c["split"], c["model"], c["metric"],
            c.get("transform") or "",
            "" if c["value"] is None else repr(c["value"]),
            "" if c["baseline"] is None else repr(c["baseline"]),
            c["policy_check"] or "", c["n_test"] if c["n_test"] is not None else "",
            c["error"] or "",
        ])
    return buf.getvalue()


def emit_report(report: dict, out_dir: str | Path,
                formats: tuple[str, ...] = ("json", "csv"),
                figures: bool = True) -> list[Path]:
    """Write the machine-readable dump, the delimited table, and (by default)
    one rendered figure per dataset/policy/metric combination."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out_dir / "report.json"
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        written.append(path)
    if "csv" in formats:
        path = out_dir / "report.csv"
        path.write_text(report_to_csv(report))
        written.append(path)
    if figures:
        from .figures import render_report_figures
        written.extend(render_report_figures(report, out_dir / "figures"))
    return written


def load_report(path: str | Path) -> dict:
    report = json.loads(Path(path).read_text())
    if report.get("format_version") != REPORT_FORMAT_VERSION:
        raise ValueError(f"unsupported report version {report.get('format_version')!r}")
    return report
