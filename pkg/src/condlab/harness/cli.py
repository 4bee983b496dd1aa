# -*- encoding: utf-8 -*-
"""Command line interface.

Every subcommand writes its reports into the output directory together with
a `manifest.json`. Exit codes: 0 on success, 1 on usage and validation
errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from condlab import io, linalg
from condlab.config import get_settings
from condlab.harness.reports import ReportFormat, write_csv, write_json, write_manifest, write_table
from condlab.main import Condlab
from condlab.schema.core import EmbeddingTap, GrayingConfig, GrayingMethod, RngStream
from condlab.schema.exception import CondlabConfigError, CondlabError
from condlab.schema.experiment import ExperimentConfig
from condlab.utils import pretty_print

logger = logging.getLogger("condlab")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURE = 2


class UsageError(Exception):
    """Raised instead of exiting when the arguments cannot be parsed."""

    def __init__(self, message: str, usage: str):  # noqa: D107
        super().__init__(message)
        self.message = message
        self.usage = usage


class CondlabArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message: str):
        raise UsageError(message, self.format_usage())


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Master seed (default: 0 or the config file seed).")
    common.add_argument("--out", type=str, default=None, help="Output directory.")
    common.add_argument("--config", type=str, default=None, help="Experiment configuration JSON file.")
    common.add_argument(
        "--format",
        type=ReportFormat,
        choices=list(ReportFormat),
        default=ReportFormat.CSV,
        help="Report format (default: csv).",
    )
    common.add_argument("--log-level", type=str, default=None, help="Logging level, e.g. INFO.")
    common.add_argument("--plot", action="store_true", help="Also write PNG figures.")
    common.add_argument("--record", action="store_true", help="Record runs in the run library.")
    return common


def _floats(text: str) -> List[float]:
    return [float(item) for item in text.split(",") if item]


def _ints(text: str) -> List[int]:
    return [int(item) for item in text.split(",") if item]


def _methods(text: str) -> List[GrayingMethod]:
    return [GrayingMethod(item) for item in text.split(",") if item]


def build_parser() -> CondlabArgumentParser:
    """Create the argument parser with all subcommands."""
    common = _common_options()
    parser = CondlabArgumentParser(
        prog="condlab",
        description="Token conditioning experiments for vision transformers.",
    )
    commands = parser.add_subparsers(dest="command", parser_class=CondlabArgumentParser)
    commands.required = True

    props = commands.add_parser("props", parents=[common], help="Run all bound-verification suites.")
    props.add_argument("--trials", type=int, default=1000, help="Trials per suite (default: 1000).")

    profile = commands.add_parser("profile", parents=[common], help="Condition profile of a checkpoint.")
    profile.add_argument("--checkpoint", type=str, required=True, help="Checkpoint written by train.")
    profile.add_argument("--samples", type=int, default=16, help="Evaluation samples (default: 16).")
    profile.add_argument(
        "--tap",
        type=EmbeddingTap,
        choices=list(EmbeddingTap),
        default=EmbeddingTap.TRANSFORM,
        help="Where embeddings are measured.",
    )

    commands.add_parser("train", parents=[common], help="Train one run.")
    commands.add_parser("ablate", parents=[common], help="Train the skip-connection ablation arms.")

    sweep = commands.add_parser("sweep", parents=[common], help="Train a token graying sweep.")
    sweep.add_argument("--epsilons", type=_floats, default=[0.9, 0.7, 0.5], help="Comma-separated epsilons.")
    sweep.add_argument("--methods", type=_methods, default=[GrayingMethod.SVD, GrayingMethod.DCT], help="Comma-separated methods.")

    gray = commands.add_parser("gray", parents=[common], help="Gray token matrices.")
    gray.add_argument("--input", type=str, default=None, help="Matrix container (.cmat, one or more samples) or CSV file; random if omitted.")
    gray.add_argument("--output", type=str, default=None, help="Container file for the grayed matrices (default: <out>/grayed.cmat).")
    gray.add_argument("--report", type=str, default=None, help="CSV file with the condition numbers before and after per sample.")
    gray.add_argument("--rows", type=int, default=64, help="Rows of the random matrix.")
    gray.add_argument("--cols", type=int, default=48, help="Columns of the random matrix.")
    gray.add_argument("--method", type=GrayingMethod, choices=list(GrayingMethod), default=GrayingMethod.SVD)
    gray.add_argument("--epsilon", type=float, default=None, help="Amplification coefficient in (0, 1].")
    gray.add_argument("--rescale", action="store_true", help="Keep the largest singular value.")

    jacobian = commands.add_parser("jacobian", parents=[common], help="Jacobian conditioning of attention blocks.")
    jacobian.add_argument("--n", type=int, default=8, help="Tokens (default: 8).")
    jacobian.add_argument("--d", type=int, default=32, help="Token dimension (default: 32).")
    jacobian.add_argument("--seeds", type=int, default=50, help="Number of seeds (default: 50).")
    jacobian.add_argument("--epsilons", type=_floats, default=[0.6], help="Comma-separated epsilons.")
    jacobian.add_argument("--heads", type=int, default=1)
    jacobian.add_argument("--prenorm", action="store_true", help="Normalize before attention.")

    bench = commands.add_parser("bench", parents=[common], help="Timing trend of SVD and DCT graying.")
    bench.add_argument("--sizes", type=_ints, default=[32, 64, 128, 256], help="Comma-separated sizes.")
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--epsilon", type=float, default=0.9)

    runs = commands.add_parser("runs", parents=[common], help="List recorded runs.")
    runs.add_argument("--kind", type=str, default=None, help="Only runs of this kind.")
    runs.add_argument("--limit", type=int, default=None)
    return parser


def load_experiment(path: Optional[str], seed: Optional[int], out: Optional[str]) -> ExperimentConfig:
    """Read an experiment configuration and apply the command line overrides.

    Raises:
        CondlabConfigError: If the file is missing or not valid JSON.
        pydantic.ValidationError: If the configuration is invalid.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise CondlabConfigError(f"config file {config_path} not found")
        try:
            data = json.loads(config_path.read_text())
        except ValueError as e:
            raise CondlabConfigError(f"config file {config_path} is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise CondlabConfigError(f"config file {config_path} must hold a JSON object")
    if seed is not None:
        data["seed"] = seed
    data.setdefault("seed", 0)
    if out is not None or data.get("output_dir") is None:
        data["output_dir"] = out or get_settings().output_dir
    return ExperimentConfig.model_validate(data)


class Context:
    """Parsed arguments plus the state shared by the command handlers."""

    def __init__(self, args: argparse.Namespace, app: Condlab):  # noqa: D107
        self.args = args
        self.app = app
        self.seed = args.seed if args.seed is not None else 0
        self.out = Path(args.out or app.config.output_dir)
        self.record = args.record or app.config.record_runs
        self.files: List[Path] = []
        self.experiment: Optional[ExperimentConfig] = None

    def table(self, name: str, rows: Sequence[Dict[str, Any]]) -> Path:
        path = write_table(self.out, name, rows, self.args.format)
        self.files.append(path)
        return path

    def document(self, name: str, data: Any) -> Path:
        path = write_json(self.out / f"{name}.json", data)
        self.files.append(path)
        return path

    def figure(self, name: str, plot: Callable, *args) -> None:
        if self.args.plot:
            self.files.append(plot(*args, self.out / f"{name}.png"))

    def echo(self, data: Any) -> None:
        sys.stdout.write(pretty_print(data))

    def manifest(self, extra: Optional[Dict[str, Any]] = None) -> None:
        config = self.experiment.model_dump(mode="json") if self.experiment is not None else None
        seed = self.experiment.seed if self.experiment is not None else self.seed
        write_manifest(self.out, self.args.command, seed, self.files, config=config, extra=extra)


def _plots():
    from condlab.harness import plots

    return plots


def cmd_props(ctx: Context) -> None:
    """Bound-verification suites, magnitude check and DCT graying statistics."""
    stats = ctx.app.verify_bounds(ctx.args.trials, ctx.seed)
    for suite in stats:
        ctx.table(f"{suite.label}_{suite.n}x{suite.d}", suite.rows())
    summaries = [suite.summary() for suite in stats]
    ctx.table("props_summary", summaries)
    extra = {
        "magnitude": ctx.app.magnitude_check(ctx.args.trials, ctx.seed),
        "dct_graying": ctx.app.graying_statistics(ctx.args.trials, ctx.seed),
    }
    ctx.document("props_checks", extra)
    ctx.figure("bound_ratios", _plots().plot_bound_ratios, stats)
    ctx.echo(
        [
            {"suite": s.label, "n": s.n, "d": s.d, "fraction_satisfied": s.fraction_satisfied}
            for s in stats
        ],
    )
    ctx.manifest()


def cmd_profile(ctx: Context) -> None:
    """Per-layer condition profile of a trained vision transformer."""
    dataset = None
    if ctx.args.config is not None:
        ctx.experiment = load_experiment(ctx.args.config, ctx.args.seed, ctx.args.out)
        dataset = ctx.experiment.dataset
    report = ctx.app.profile(
        ctx.args.checkpoint,
        samples=ctx.args.samples,
        seed=ctx.seed,
        tap=ctx.args.tap,
        dataset=dataset,
    )
    ctx.table("profile", report.rows())
    ctx.figure("profile", _plots().plot_layer_profile, report)
    ctx.echo(report.rows())
    ctx.manifest({"checkpoint": str(ctx.args.checkpoint), "tap": report.tap.value})


def cmd_train(ctx: Context) -> None:
    """Train one run."""
    ctx.experiment = load_experiment(ctx.args.config, ctx.args.seed, ctx.args.out)
    report = ctx.app.train(ctx.experiment)
    ctx.table("curves", report.curve_rows())
    ctx.table("summary", [report.summary()])
    if report.condition is not None:
        ctx.table("condition", report.condition.rows())
        ctx.figure("profile", _plots().plot_layer_profile, report.condition)
    ctx.figure("curves", _plots().plot_curves, [report])
    ctx.figure("condition_trace", _plots().plot_condition_trace, [report])
    if report.checkpoint_path is not None:
        ctx.files.append(Path(report.checkpoint_path))
    if ctx.record:
        ctx.app.record(report, ctx.experiment, kind="train")
    ctx.echo(report.summary())
    ctx.manifest({"normalization": report.normalization})


def cmd_ablate(ctx: Context) -> None:
    """Train the skip-connection ablation arms."""
    ctx.experiment = load_experiment(ctx.args.config, ctx.args.seed, ctx.args.out)
    report = ctx.app.ablate(ctx.experiment)
    ctx.table("ablation_summary", report.table())
    ctx.table("ablation_curves", report.curves())
    ctx.figure("ablation_curves", _plots().plot_curves, report.arms)
    ctx.figure("ablation_condition_trace", _plots().plot_condition_trace, report.arms)
    if ctx.record:
        for arm in report.arms:
            ctx.app.record(arm, ctx.experiment, kind="ablate")
    ctx.echo(
        [
            {"arm": arm.arm, "final_accuracy": arm.final_accuracy, "diverged": arm.diverged, "error": arm.error}
            for arm in report.arms
        ],
    )
    ctx.manifest({"normalization": report.normalization})


def cmd_sweep(ctx: Context) -> None:
    """Train a token graying sweep."""
    ctx.experiment = load_experiment(ctx.args.config, ctx.args.seed, ctx.args.out)
    report = ctx.app.sweep(ctx.experiment, ctx.args.epsilons, methods=ctx.args.methods)
    ctx.table("sweep_summary", report.table())
    ctx.table("sweep_layers", report.layer_rows())
    ctx.table("sweep_trace", report.trace_rows())
    ctx.figure("sweep_condition_trace", _plots().plot_condition_trace, report.runs)
    ctx.figure("sweep_curves", _plots().plot_curves, report.runs)
    if ctx.record:
        for run in report.runs:
            ctx.app.record(run, ctx.experiment, kind="sweep")
    ctx.echo(
        [
            {"arm": run.arm, "final_accuracy": run.final_accuracy, "input_log_condition": run.input_log_condition}
            for run in report.runs
        ],
    )
    ctx.manifest({"normalization": report.normalization})


def _read_input_matrices(path: str) -> List[np.ndarray]:
    if Path(path).suffix.lower() == ".csv":
        return [io.read_matrix_csv(path)]
    matrices = io.read_matrices(path)
    if not matrices:
        raise CondlabConfigError(f"matrix file {path} holds no matrices")
    return matrices


def cmd_gray(ctx: Context) -> None:
    """Gray token matrices and report their condition numbers before and after.

    A container file may hold several samples; each is grayed independently.
    """
    args = ctx.args
    if args.input is not None:
        samples = _read_input_matrices(args.input)
    else:
        samples = [linalg.gaussian(RngStream(seed=ctx.seed).generator(), args.rows, args.cols)]
    epsilon = args.epsilon if args.epsilon is not None else ctx.app.config.default_epsilon
    try:
        config = GrayingConfig(method=args.method, epsilon=epsilon, rescale=args.rescale)
    except ValidationError as e:
        raise CondlabConfigError(f"invalid graying parameters: {e}") from None
    grayed, rows = ctx.app.gray_samples(samples, config)
    output = Path(args.output) if args.output is not None else ctx.out / "grayed.cmat"
    output.parent.mkdir(parents=True, exist_ok=True)
    io.write_matrices(output, grayed)
    ctx.files.append(output)
    if args.report is not None:
        ctx.files.append(write_csv(args.report, rows))
    else:
        ctx.table("gray", rows)
    ctx.echo(rows)
    ctx.manifest({"input": args.input, "samples": len(samples)})


def cmd_jacobian(ctx: Context) -> None:
    """Jacobian conditioning of attention blocks with and without skip, and on grayed tokens."""
    args = ctx.args
    seeds = [ctx.seed + i for i in range(args.seeds)]
    result = ctx.app.jacobian(args.n, args.d, seeds, epsilons=args.epsilons, heads=args.heads, prenorm=args.prenorm)
    ctx.table("jacobian_skip", result["skip"]["rows"])
    ctx.table("jacobian_graying", result["graying"]["rows"])
    summary = {
        "fraction_skip_better": result["skip"]["fraction_skip_better"],
        "median_skip": result["skip"]["median_skip"],
        "median_no_skip": result["skip"]["median_no_skip"],
        "graying_medians": result["graying"]["medians"],
    }
    ctx.document("jacobian_summary", summary)
    if args.plot:
        spectra = ctx.app.jacobian_spectra(args.n, args.d, ctx.seed, heads=args.heads)
        ctx.figure("jacobian_spectra", _plots().plot_spectra, spectra)
    ctx.echo(summary)
    ctx.manifest()


def cmd_bench(ctx: Context) -> None:
    """Timing trend of SVD graying against DCT graying."""
    args = ctx.args
    result = ctx.app.bench(sizes=args.sizes, repeats=args.repeats, epsilon=args.epsilon, seed=ctx.seed)
    ctx.table("bench", result["rows"])
    summary = {key: value for key, value in result.items() if key != "rows"}
    ctx.document("bench_summary", summary)
    ctx.echo(summary)
    ctx.manifest()


def cmd_runs(ctx: Context) -> None:
    """List the runs of the run library."""
    records = ctx.app.library.get_runs(
        kind=ctx.args.kind,
        order_by="created_at",
        limit=ctx.args.limit,
    )
    rows = [
        {
            "id": str(record.id),
            "name": record.name,
            "kind": record.kind,
            "arm": record.arm,
            "seed": record.seed,
            "status": record.status,
            "final_accuracy": record.summary.get("final_accuracy"),
        }
        for record in records
    ]
    ctx.table("runs", rows)
    ctx.echo(rows)


COMMANDS: Dict[str, Callable[[Context], None]] = {
    "props": cmd_props,
    "profile": cmd_profile,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "gray": cmd_gray,
    "jacobian": cmd_jacobian,
    "bench": cmd_bench,
    "runs": cmd_runs,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line interface.

    Args:
        argv (Sequence[str], optional): Arguments without the program name.
            Defaults to `sys.argv[1:]`.

    Returns:
        int: The exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(e.usage)
        sys.stderr.write(f"condlab: error: {e.message}\n")
        return EXIT_INVALID
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    settings = get_settings()
    overrides: Dict[str, Any] = {}
    if args.log_level is not None:
        overrides["log_level"] = args.log_level
    if args.out is not None:
        overrides["output_dir"] = args.out
    app = Condlab(config=settings.model_copy(update=overrides))
    try:
        COMMANDS[args.command](Context(args, app))
    except (CondlabConfigError, ValidationError) as e:
        logger.error("Invalid input: %s", e)
        sys.stderr.write(f"condlab: error: {e}\n")
        return EXIT_INVALID
    except (CondlabError, OSError) as e:
        logger.error("Command %s failed: %s", args.command, e)
        sys.stderr.write(f"condlab: {args.command} failed: {e}\n")
        return EXIT_FAILURE
    finally:
        app.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
