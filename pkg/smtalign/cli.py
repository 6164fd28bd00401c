"""
Command line: smtalign generate | train | evaluate | optimize | predict.

Exit codes: 0 success, 1 usage, config or validation error, 2 infeasible optimization, 3 I/O error.
"""

import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import click
import pandas as pd

from smtalign.config import Config, build_config
from smtalign.dataset import read_records, records_to_frame, write_records
from smtalign.domain import ENCODING_HASH, TARGETS, encode_matrix, split_dataset, split_from_indices
from smtalign.es_solver import EsConfig, InfeasibleProblemError, optimize
from smtalign.evaluation import (
    configs_echo, evaluate_models, load_model_settings, model_configs, run_benchmark, tune_mtry,
)
from smtalign.identifiers import ArtifactNames
from smtalign.manifest import ChecksumMismatchError, Manifest, SplitManifest
from smtalign.placement_nlp import Bounds, ThresholdSettings, build_problem, compute_bounds
from smtalign.predictors import MODEL_KINDS, ModelBundle, fit_bundle
from smtalign.run_info import RunInfo
from smtalign.synthetic_line import GeneratorConfig, generate_dataset, sample_contexts
from smtalign.util import calculate_md5, config_hash, read_json, write_json

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO = 0, 1, 2, 3

LOG_FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"

# Recommendations outside this band are flagged (um for x and y, degrees for theta).
REFERENCE_BAND = {"x": (0.0, 50.0), "y": (0.0, 50.0), "theta": (-2.0, 2.0)}


class SmtalignGroup(click.Group):
    """Maps exceptions to the documented exit codes with a one-line message on stderr."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                              standalone_mode=False, **extra)
        except click.ClickException as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)
        except InfeasibleProblemError as e:
            click.echo(f"Infeasible: {e}", err=True)
            sys.exit(EXIT_INFEASIBLE)
        except (OSError, ChecksumMismatchError) as e:
            click.echo(f"I/O error: {e}", err=True)
            sys.exit(EXIT_IO)
        except ValueError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        sys.exit(rv or EXIT_OK)


class CommandRun:
    """
    Bookkeeping around one command: output directory, run info sidecar, config echo and
    manifest. Files added with add_file() end up in the manifest.
    """

    def __init__(self, config: Config, command: str, out_dir, seed: int):
        self.config = config
        self.command = command
        self.out_dir = Path(out_dir)
        self.seed = seed
        self.names = ArtifactNames(config)
        self.parameters: dict = {}
        self.manifest: Optional[Manifest] = None
        self.run_info: Optional[RunInfo] = None

    def __enter__(self) -> 'CommandRun':
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest.load_or_create(str(self.out_dir), self.config)
        self.run_info = RunInfo(str(self.out_dir), self.command, self.seed, self.config.hash)
        self.run_info.register_start()
        return self

    def path(self, filename: str) -> Path:
        return self.out_dir / filename

    def add_file(self, filename: str, **metadata) -> None:
        self.manifest.add_file(filename, Command=self.command, **metadata)

    def config_echo(self) -> dict:
        echo = {
            "command": self.command,
            "seed": self.seed,
            "encoding_hash": ENCODING_HASH,
            "config": self.config.as_dict(),
            "parameters": self.parameters,
        }
        echo["config_hash"] = config_hash(echo)
        return echo

    def __exit__(self, exc_type, exc, tb) -> None:
        echo_filename = self.names.config_echo_filename(self.command)
        write_json(self.path(echo_filename), self.config_echo())
        self.add_file(echo_filename)
        self.manifest.save()
        self.run_info.register_end()
        self.run_info.save(result="success" if exc is None else f"failed: {exc}")


def _config(ctx: click.Context) -> Config:
    return ctx.obj["config"]


def _seed(config: Config, seed: Optional[int]) -> int:
    return int(config.seed if seed is None else seed)


def _workers(config: Config) -> int:
    return int(config.section('evaluation').get('workers', 1) or 1)


def _validated_model_dir(model_dir: str, kinds, config: Config) -> Manifest:
    """Check the model files of the given kinds against the directory manifest."""
    names = ArtifactNames(config)
    manifest = Manifest.load_existing(model_dir, config)
    manifest.validate([names.model_filename(kind, target) for kind in kinds for target in TARGETS])
    return manifest


def _format_triplet(values) -> str:
    return "(" + ", ".join(f"{v:.3f}" for v in values) + ")"


@click.group("smtalign", cls=SmtalignGroup)
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False),
              help='YAML or JSON settings merged over the packaged defaults.')
@click.option('--log-level', default='INFO', show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
@click.pass_context
def cli(ctx, config_file, log_level):
    logging.basicConfig(level=log_level.upper(), format=LOG_FORMAT, stream=sys.stderr)
    Config.reset()
    ctx.obj = {"config": Config.initialize(config_file)}


@cli.command(help='Generate a synthetic labeled dataset')
@click.option('--out', 'out_dir', default='.', show_default=True, type=click.Path(file_okay=False))
@click.option('--seed', type=int, help='Overrides the configured seed.')
@click.option('--records-per-type', type=int, help='Records per component directory.')
@click.pass_context
def generate(ctx, out_dir, seed, records_per_type):
    config = _config(ctx)
    seed = _seed(config, seed)
    section = config.section('generator')
    if records_per_type is not None:
        section['records_per_type'] = records_per_type
    generator_config = GeneratorConfig.from_mapping(section).with_seed(seed)

    with CommandRun(config, 'generate', out_dir, seed) as run:
        records = generate_dataset(generator_config)
        write_records(records, run.path(run.names.dataset_filename))
        run.add_file(run.names.dataset_filename, Records=len(records))

        contexts = sample_contexts(records, generator_config.records_per_type)
        write_records(contexts, run.path(run.names.contexts_filename))
        run.add_file(run.names.contexts_filename, Records=len(contexts))

        write_json(run.path(run.names.dataset_metadata_filename), {
            "seed": seed,
            "records": len(records),
            "generator": generator_config.to_dict(),
            "config_hash": config_hash(generator_config.to_dict()),
        })
        run.add_file(run.names.dataset_metadata_filename)
        run.parameters = {"records_per_type": generator_config.records_per_type}
    click.echo(f"Wrote {len(records)} records to {run.path(run.names.dataset_filename)}")


@cli.command(help='Train one model per target')
@click.argument('dataset', type=click.Path(dir_okay=False))
@click.option('--model', 'kind', type=click.Choice(MODEL_KINDS), default='rfr', show_default=True)
@click.option('--out', 'out_dir', default='.', show_default=True, type=click.Path(file_okay=False))
@click.option('--seed', type=int, help='Overrides the configured seed.')
@click.option('--tune', is_flag=True, help='Choose forest mtry on the validation set.')
@click.pass_context
def train(ctx, dataset, kind, out_dir, seed, tune):
    config = _config(ctx)
    seed = _seed(config, seed)
    if tune and kind != 'rfr':
        raise click.UsageError("--tune applies to --model rfr only")
    records = read_records(dataset, require_labels=True)
    split = split_dataset(records, seed)
    svr_configs, rfr_config = load_model_settings(config)
    workers = _workers(config)

    with CommandRun(config, 'train', out_dir, seed) as run:
        scores = None
        if tune:
            candidates = config.section('evaluation').get('tune_candidates')
            configs, scores = tune_mtry(split, rfr_config, seed, candidates, workers)
        else:
            configs = model_configs(kind, svr_configs, rfr_config, seed)
        bundle = fit_bundle(kind, split.train, configs, workers)
        for filename, target in zip(bundle.save(run.out_dir, run.names), TARGETS):
            run.add_file(filename, Kind=kind, Target=target, EncodingHash=ENCODING_HASH)

        split_manifest = SplitManifest(seed, calculate_md5(dataset), split.train_index,
                                       split.validation_index, split.test_index)
        split_manifest.save(run.path(run.names.split_filename))
        run.add_file(run.names.split_filename)
        run.parameters = {
            "model": kind,
            "dataset_md5": split_manifest.dataset_md5,
            "split_sizes": list(split.sizes),
            "models": configs_echo({kind: configs})[kind],
            "tuning": {target: {str(m): v for m, v in by_mtry.items()} for target, by_mtry in scores.items()}
            if scores else None,
        }
    click.echo(f"Trained {kind} models for {', '.join(TARGETS)} on {split.sizes[0]} records; wrote {run.out_dir}")


def _stored_split(records, model_dir: str, dataset: str, names: ArtifactNames):
    split_manifest = SplitManifest.load(Path(model_dir) / names.split_filename)
    if calculate_md5(dataset) != split_manifest.dataset_md5:
        logger.warning("%s differs from the dataset the models were trained on; re-splitting with seed %d",
                       dataset, split_manifest.seed)
        return split_dataset(records, split_manifest.seed), split_manifest.seed
    return split_from_indices(records, split_manifest.train_index, split_manifest.validation_index,
                              split_manifest.test_index), split_manifest.seed


def _kinds_in_manifest(manifest: Manifest, names: ArtifactNames) -> list[str]:
    present = set()
    for filename in manifest.get_filenames():
        try:
            kind, _ = names.extract_kind_target_from_filename(filename)
        except ValueError:
            continue
        present.add(kind)
    return [kind for kind in MODEL_KINDS if kind in present]


@cli.command(help='Evaluate models; without MODEL_DIR the full benchmark is run')
@click.argument('dataset', type=click.Path(dir_okay=False))
@click.argument('model_dir', required=False, type=click.Path(file_okay=False))
@click.option('--model', 'kinds', type=click.Choice(MODEL_KINDS), multiple=True,
              help='Model kinds to evaluate (default: all, or all found in MODEL_DIR).')
@click.option('--out', 'out_dir', default='.', show_default=True, type=click.Path(file_okay=False))
@click.option('--seed', type=int, help='Overrides the configured seed.')
@click.pass_context
def evaluate(ctx, dataset, model_dir, kinds, out_dir, seed):
    config = _config(ctx)
    seed = _seed(config, seed)
    names = ArtifactNames(config)
    records = read_records(dataset, require_labels=True)

    if model_dir is None:
        kinds = list(kinds) or list(MODEL_KINDS)
        svr_configs, rfr_config = load_model_settings(config)
        report, _ = run_benchmark(records, svr_configs, rfr_config, seed, kinds, _workers(config))
    else:
        if not kinds:
            kinds = _kinds_in_manifest(Manifest.load_existing(model_dir, config), names)
            if not kinds:
                raise FileNotFoundError(f"No model files listed in the manifest of {model_dir}")
        _validated_model_dir(model_dir, kinds, config)
        bundles = [ModelBundle.load(model_dir, kind, names) for kind in kinds]
        split, seed = _stored_split(records, model_dir, dataset, names)
        echo = {bundle.kind: {target: asdict(bundle[target].model.config) for target in TARGETS}
                for bundle in bundles}
        report = evaluate_models(bundles, split, seed, echo)

    with CommandRun(config, 'evaluate', out_dir, seed) as run:
        for filename in report.write(run.out_dir, names):
            run.add_file(filename)
        run.parameters = {"models": list(kinds), "dataset_md5": calculate_md5(dataset),
                          "model_dir": Path(model_dir).name if model_dir else None}
    click.echo(report.to_text(), nl=False)


def _load_override(path: Optional[str]) -> tuple[dict, Optional[dict]]:
    if path is None:
        return {}, None
    override = read_json(path)
    unknown = sorted(set(override) - {"thresholds", "bounds"})
    if unknown:
        raise ValueError(f"{path}: unknown override block '{unknown[0]}'")
    return override.get("thresholds") or {}, override.get("bounds")


def _bounds_for(context, bounds_override: Optional[dict]) -> Bounds:
    bounds = compute_bounds(context)
    if not bounds_override:
        return bounds
    pairs = bounds.to_dict()
    for name, pair in bounds_override.items():
        if name not in pairs:
            raise ValueError(f"bounds.{name}: unknown decision variable (expected x, y or theta)")
        pairs[name] = pair
    return Bounds.from_pairs([pairs[name] for name in ("x", "y", "theta")])


def _within_band(chi) -> bool:
    values = {"x": chi.pre_offset_x, "y": chi.pre_offset_y, "theta": chi.pre_offset_theta}
    return all(lo <= values[name] <= hi for name, (lo, hi) in REFERENCE_BAND.items())


@cli.command(name="optimize", help="Recommend a placement setting for each context row")
@click.argument('context_csv', type=click.Path(dir_okay=False))
@click.argument('model_dir', type=click.Path(file_okay=False))
@click.option('--model', 'kind', type=click.Choice(MODEL_KINDS), default='rfr', show_default=True)
@click.option('--out', 'out_dir', default='.', show_default=True, type=click.Path(file_okay=False))
@click.option('--seed', type=int, help='Overrides the configured seed.')
@click.option('--override', 'override_file', type=click.Path(exists=True, dir_okay=False),
              help='JSON with "thresholds" and/or "bounds" blocks.')
@click.pass_context
def optimize_cmd(ctx, context_csv, model_dir, kind, out_dir, seed, override_file):
    config = _config(ctx)
    seed = _seed(config, seed)
    names = ArtifactNames(config)
    contexts = [record.unlabeled() for record in read_records(context_csv)]
    _validated_model_dir(model_dir, [kind], config)
    bundle = ModelBundle.load(model_dir, kind, names)
    threshold_override, bounds_override = _load_override(override_file)
    settings = build_config(ThresholdSettings, {**config.section('thresholds'), **threshold_override},
                            "thresholds")
    es_config = build_config(EsConfig, {**config.section('es'), "seed": seed}, "es")

    recommendations, failures = [], []
    with CommandRun(config, 'optimize', out_dir, seed) as run:
        for index, context in enumerate(contexts):
            problem = build_problem(context, bundle.models, settings, _bounds_for(context, bounds_override))
            entry = {
                "index": index,
                "directory": asdict(context.directory),
                "actual_placement": asdict(context.placement),
                "bounds": problem.bounds.to_dict(),
                "thresholds": asdict(problem.thresholds),
            }
            try:
                result = optimize(problem, es_config)
            except InfeasibleProblemError as e:
                entry.update(feasible=False, worst_slack=e.worst_slack)
                failures.append(e)
                recommendations.append(entry)
                click.echo(f"context {index}: infeasible (worst slack {e.worst_slack:.4g})")
                continue
            trace_filename = names.trace_filename(index)
            result.write_trace(run.path(trace_filename))
            run.add_file(trace_filename)
            best = result.best
            entry.update(
                feasible=True,
                best=best.to_dict(),
                final_population_best=result.final_best.to_dict(),
                within_reference_band=_within_band(best.chi),
                trace=trace_filename,
            )
            recommendations.append(entry)
            click.echo(
                f"context {index}: chi = {_format_triplet(asdict(best.chi).values())}, "
                f"predicted post = {_format_triplet(best.predictions)}, "
                f"objective = {best.objective_value:.4f} um, "
                f"slacks = {_format_triplet(best.slacks)}, trace = {run.path(trace_filename)}"
                + ("" if entry["within_reference_band"] else " [outside reference band]")
            )
        write_json(run.path(names.recommendations_filename),
                   {"model": kind, "es": asdict(es_config), "recommendations": recommendations})
        run.add_file(names.recommendations_filename)
        run.parameters = {"model": kind, "contexts_md5": calculate_md5(context_csv),
                          "override": read_json(override_file) if override_file else None}
        if failures:
            worst = min(e.worst_slack for e in failures)
            raise InfeasibleProblemError(
                f"{len(failures)} of {len(contexts)} contexts have no feasible placement "
                f"(worst slack {worst:.4g})", worst_slack=worst)


@cli.command(help='Predict post-reflow offsets for each row')
@click.argument('context_csv', type=click.Path(dir_okay=False))
@click.argument('model_dir', type=click.Path(file_okay=False))
@click.option('--model', 'kind', type=click.Choice(MODEL_KINDS), default='rfr', show_default=True)
@click.option('--out', 'out_dir', default='.', show_default=True, type=click.Path(file_okay=False))
@click.pass_context
def predict(ctx, context_csv, model_dir, kind, out_dir):
    config = _config(ctx)
    names = ArtifactNames(config)
    records = [record.unlabeled() for record in read_records(context_csv)]
    _validated_model_dir(model_dir, [kind], config)
    bundle = ModelBundle.load(model_dir, kind, names)
    predictions = bundle.predict_many(encode_matrix(records))

    frame = records_to_frame(records)
    for target in TARGETS:
        frame[f"predicted_{target}"] = predictions[target]
    with CommandRun(config, 'predict', out_dir, _seed(config, None)) as run:
        frame.to_csv(run.path(names.predictions_filename), index=False)
        run.add_file(names.predictions_filename, Kind=kind)
        run.parameters = {"model": kind, "contexts_md5": calculate_md5(context_csv)}
    with pd.option_context('display.width', 200):
        click.echo(frame[[f"predicted_{target}" for target in TARGETS]].to_string())


def main():
    cli()


if __name__ == "__main__":
    main()
