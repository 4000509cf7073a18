"""Command line entry points.

Verbs: ``generate`` writes synthetic scenes plus a ground-truth manifest,
``extract`` turns scenes into serialized sample datasets, ``run`` executes a
full experiment grid and emits the report (JSON dump, CSV table, figures),
and ``report`` re-renders those outputs from a saved report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .experiment import (ExperimentConfig, emit_report, load_report,
                         run_experiment)
from .extraction import extract_dataset
from .generator import GeneratorConfig, generate
from .scenario import ScenarioParams, make_scenario
from .scene_io import save_dataset, write_manifest, write_scene


def _formats(arg: str) -> tuple[str, ...]:
    return ("json", "csv") if arg == "both" else (arg,)


def _resolve_out(args) -> str:
    # GAPBENCH_OUT is the only environment override supported
    out = args.out or os.environ.get("GAPBENCH_OUT")
    if not out:
        raise SystemExit("no output directory: pass --out or set GAPBENCH_OUT")
    return out


def cmd_generate(args) -> int:
    payload = json.loads(Path(args.config).read_text())
    if args.seed_override is not None:
        payload["seed"] = args.seed_override
    config = GeneratorConfig(**payload)
    scenes, truths = generate(config)
    out = Path(_resolve_out(args))
    for scene in scenes:
        write_scene(scene, out / "scenes")
    write_manifest(truths, out)
    (out / "generator_config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(scenes)} scenes to {out / 'scenes'}")
    return 0


def cmd_extract(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed_override is not None:
        config.override_seeds(args.seed_override)
    out = Path(_resolve_out(args))
    from .experiment import _load_dataset_scenes, _policy_from
    for ds_cfg in config.datasets:
        scenes, kind = _load_dataset_scenes(ds_cfg)
        scenario = make_scenario(kind, ScenarioParams(**config.scenario))
        for pol_cfg in config.policies:
            policy = _policy_from(pol_cfg)
            for n_i in config.n_input_steps:
                dataset = extract_dataset(scenes, policy, n_i, config.step,
                                          scenario, config.t_eps)
                base = out / f"{ds_cfg['name']}__{policy.label}__ni{n_i}"
                csv_path, _ = save_dataset(dataset, base)
                print(f"{csv_path}: {len(dataset)} samples "
                      f"(excluded {sum(dataset.excluded.values())}, "
                      f"rejected {sum(dataset.rejected.values())})")
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed_override is not None:
        config.override_seeds(args.seed_override)
    out = _resolve_out(args)
    report = run_experiment(config)
    emit_report(report, out, formats=_formats(args.format))
    failures = [c for c in report["cells"] if c["error"] is not None]
    done = len(report["cells"]) - len(failures)
    print(f"{done}/{len(report['cells'])} grid cells succeeded; "
          f"report in {out}")
    for c in failures[:10]:
        print(f"  failed: {c['dataset']}/{c['policy']}/n_i={c['n_i']}/"
              f"{c['split']}/{c['model']}/{c['metric']}: {c['error']}")
    return 1 if failures else 0


def cmd_report(args) -> int:
    report = load_report(args.report)
    out = _resolve_out(args)
    emit_report(report, out, formats=_formats(args.format))
    print(f"re-rendered report into {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gapbench",
        description="Benchmark behavior prediction models in gap-acceptance scenes")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate synthetic labeled scenes")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", default=None)
    p_gen.add_argument("--seed-override", type=int, default=None)
    p_gen.set_defaults(func=cmd_generate)

    p_ext = sub.add_parser("extract", help="extract sample datasets from scenes")
    p_ext.add_argument("--config", required=True)
    p_ext.add_argument("--out", default=None)
    p_ext.add_argument("--seed-override", type=int, default=None)
    p_ext.set_defaults(func=cmd_extract)

    p_run = sub.add_parser("run", help="run the full experiment grid")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed-override", type=int, default=None)
    p_run.add_argument("--format", choices=["json", "csv", "both"], default="both")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="re-render outputs from a saved report")
    p_rep.add_argument("--report", required=True)
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--format", choices=["json", "csv", "both"], default="both")
    p_rep.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
