"""Command-line entry points.

Subcommands:

* ``gen-data``  generate a synthetic blob dataset CSV (+ metadata sidecar)
* ``run``       simulated-oracle experiment from a JSON config file
* ``compare``   several strategies over a shared initial pool, one aggregate CSV
* ``analyze``   informativeness table (accuracy of top-scored pool slices)
* ``serve``     start the interactive labeling HTTP service

Exit codes: 0 on success, 2 for a bad configuration (the diagnostic names
the failing key), 1 for any other error. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .acquisition import STRATEGIES, write_scores_csv
from .data import Dataset, OracleToken, gen_blobs, load_csv, normalize, save_csv
from .engine import (
    ALConfig,
    CycleReport,
    RunRecorder,
    aggregate_reports,
    informativeness_analysis,
    init_pool,
    initial_model_scores,
    run_seed,
    write_aggregate_csv,
    write_informativeness_csv,
    write_reports_jsonl,
)
from .exceptions import ActiveLearningError, ConfigurationError

DEFAULT_FRACTIONS = (0.05, 0.1, 0.2, 0.3, 0.5, 1.0)


def load_config_file(path) -> tuple[ALConfig, dict]:
    """Parse a config JSON into (ALConfig, dataset spec)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")
    dataset_spec = doc.pop("dataset", None)
    if dataset_spec is None:
        raise ConfigurationError("dataset: missing (need 'path' or 'generate')")
    config = ALConfig.from_dict(doc)
    return config, dataset_spec


def resolve_dataset(spec: dict) -> Dataset:
    if not isinstance(spec, dict):
        raise ConfigurationError("dataset: must be a JSON object")
    if "path" in spec:
        dataset = load_csv(spec["path"])
    elif "generate" in spec:
        gen = spec["generate"]
        if not isinstance(gen, dict):
            raise ConfigurationError("dataset.generate: must be a JSON object")
        allowed = {"class_count", "per_class", "n_features", "spread", "overlap", "seed", "name"}
        unknown = set(gen) - allowed
        if unknown:
            raise ConfigurationError(f"dataset.generate.{sorted(unknown)[0]}: unknown key")
        try:
            dataset = gen_blobs(**gen)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"dataset.generate: {exc}") from exc
    else:
        raise ConfigurationError("dataset: needs either 'path' or 'generate'")
    if spec.get("normalize"):
        dataset = normalize(dataset)
    return dataset


class _FileRecorder(RunRecorder):
    """Writes per-cycle score dumps (and optional history CSVs)."""

    def __init__(self, out_dir: Path, strategy: str, seed: int, dump_history: bool):
        self.out_dir = out_dir
        self.strategy = strategy
        self.seed = seed
        self.dump_history = dump_history
        self._scores_path = out_dir / f"scores_{strategy}_seed{seed}.csv"

    def on_scores(self, cycle, sample_ids, scores):
        write_scores_csv(self._scores_path, sample_ids, scores,
                         self.strategy, cycle, append=cycle > 0)

    def on_cycle_trained(self, cycle, model, history):
        if self.dump_history:
            name = f"history_{self.strategy}_seed{self.seed}_cycle{cycle}.csv"
            history.write_csv(self.out_dir / name)


def _write_pools_json(out_dir: Path, strategies: list[str], config: ALConfig,
                      n_pool: int) -> None:
    pools = {}
    for strategy in strategies:
        pools[strategy] = {
            str(seed): {
                "initial_labeled": init_pool(
                    n_pool, config.initial_fraction, seed
                ).labeled.tolist()
            }
            for seed in config.seeds
        }
    (out_dir / "pools.json").write_text(json.dumps(pools, indent=2), encoding="utf-8")


def _run_strategies(dataset: Dataset, config: ALConfig, strategies: list[str],
                    out_dir: Path, dump_history: bool, jobs: int,
                    mc_passes: int) -> list[CycleReport]:
    """Run every (strategy, seed) pair; deterministic report order."""
    tasks = [(strategy, seed) for strategy in strategies for seed in config.seeds]

    def one(task):
        strategy, seed = task
        recorder = _FileRecorder(out_dir, strategy, seed, dump_history)
        return run_seed(dataset, config.with_strategy(strategy), seed,
                        recorder=recorder, mc_passes=mc_passes)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_task = list(pool.map(one, tasks))
    else:
        per_task = [one(task) for task in tasks]
    reports: list[CycleReport] = []
    for task_reports in per_task:
        reports.extend(task_reports)
    return reports


# ----------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    dataset = gen_blobs(
        class_count=args.classes,
        per_class=args.per_class,
        n_features=args.dims,
        spread=args.spread,
        overlap=args.overlap,
        seed=args.seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(dataset, out)
    print(f"wrote {dataset.n_samples} samples ({dataset.class_count} classes, "
          f"{dataset.n_features} features) to {out}")
    return 0


def _prepare_out_dir(args, config: ALConfig, dataset_spec: dict) -> Path:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {"dataset": dataset_spec, **config.to_dict()}
    (out_dir / "config.json").write_text(json.dumps(echo, indent=2), encoding="utf-8")
    return out_dir


def cmd_run(args) -> int:
    config, dataset_spec = load_config_file(args.config)
    if config.oracle_mode != "simulated":
        raise ConfigurationError("oracle_mode: 'run' supports simulated mode only; "
                                 "use 'serve' for interactive runs")
    dataset = resolve_dataset(dataset_spec)
    out_dir = _prepare_out_dir(args, config, dataset_spec)
    reports = _run_strategies(dataset, config, [config.strategy], out_dir,
                              args.dump_history, args.jobs, args.mc_passes)
    write_reports_jsonl(reports, out_dir / "reports.jsonl")
    write_aggregate_csv(aggregate_reports(reports), out_dir / "aggregate.csv")
    _write_pools_json(out_dir, [config.strategy], config, len(dataset.train_indices))
    print(f"wrote {len(reports)} cycle reports to {out_dir}")
    return 0


def cmd_compare(args) -> int:
    config, dataset_spec = load_config_file(args.config)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if not strategies:
        raise ConfigurationError("strategies: empty list")
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ConfigurationError(f"strategies: unknown strategy {strategy!r}")
    dataset = resolve_dataset(dataset_spec)
    out_dir = _prepare_out_dir(args, config, dataset_spec)
    reports = _run_strategies(dataset, config, strategies, out_dir,
                              args.dump_history, args.jobs, args.mc_passes)
    write_reports_jsonl(reports, out_dir / "reports.jsonl")
    write_aggregate_csv(aggregate_reports(reports), out_dir / "aggregate.csv")
    _write_pools_json(out_dir, strategies, config, len(dataset.train_indices))
    print(f"compared {len(strategies)} strategies; aggregate at {out_dir / 'aggregate.csv'}")
    return 0


def cmd_analyze(args) -> int:
    if args.run:
        config_path = Path(args.run) / "config.json"
    elif args.config:
        config_path = Path(args.config)
    else:
        raise ConfigurationError("analyze needs --config or --run")
    config, dataset_spec = load_config_file(config_path)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ConfigurationError(f"strategies: unknown strategy {strategy!r}")
    fractions = [float(f) for f in args.fractions.split(",") if f.strip()]
    dataset = resolve_dataset(dataset_spec)

    token = OracleToken()
    sums: dict[tuple[str, float], float] = {}
    for seed in config.seeds:
        pool, model, history, scores = initial_model_scores(
            dataset, config, seed, strategies, mc_passes=args.mc_passes
        )
        for strategy in strategies:
            table = informativeness_analysis(
                pool.unlabeled, scores[strategy], model, dataset, fractions, token
            )
            for fraction, accuracy in table:
                sums[(strategy, fraction)] = sums.get((strategy, fraction), 0.0) + accuracy
    rows = [
        {"strategy": strategy, "fraction": fraction,
         "accuracy": total / len(config.seeds)}
        for (strategy, fraction), total in sorted(sums.items())
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_informativeness_csv(rows, out)
    print(f"wrote informativeness table ({len(rows)} rows) to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(data_dir=args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


# ----------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="al-lab",
                                     description="Active learning laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic blob dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--spread", type=float, default=0.5)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="run a simulated-oracle experiment")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--mc-passes", type=int, default=25)
    p.add_argument("--dump-history", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare strategies over a shared initial pool")
    p.add_argument("--config", required=True)
    p.add_argument("--strategies", required=True,
                   help="comma-separated strategy names")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--mc-passes", type=int, default=25)
    p.add_argument("--dump-history", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", help="informativeness table for the initial model")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--run", help="run directory holding config.json")
    p.add_argument("--strategies", default="dispersion,random,margin")
    p.add_argument("--fractions", default=",".join(str(f) for f in DEFAULT_FRACTIONS))
    p.add_argument("--mc-passes", type=int, default=25)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("serve", help="start the interactive labeling service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None,
                   help="persistence root (defaults to $AL_LAB_DATA_DIR)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ActiveLearningError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
