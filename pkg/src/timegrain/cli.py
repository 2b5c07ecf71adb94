"""Command-line front-end over line-delimited sequence records.

Every stochastic subcommand takes an explicit ``--seed``; there are no
hidden entropy sources, so fixed flags reproduce outputs byte for byte.
Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click
import numpy as np

from .augment import AugmentConfig, fast_augment
from .coarsen import CoarseningSpec, GridUnusableError, coarsen
from .codec import (
    UnfitVariableError,
    VariableSpec,
    featurize,
    fit_codec,
    load_codec,
    save_codec,
)
from .core import LabeledSequence
from .evaluate import (
    EvalReport,
    MetricSummary,
    UndefinedMetricError,
    average_precision,
    bootstrap,
    fgsm_prediction,
    invariance_gap,
    mae,
    pearson_correlation,
    rmse,
    roc_auc,
)
from .model import (
    CLASSIFICATION,
    REGRESSION,
    MreSettings,
    TrainConfig,
    TrainingDivergedError,
    load_model,
    save_model,
    train,
)
from .records import RecordError, read_records, write_records
from .synth import SynthConfig, generate


class DataError(ValueError):
    """Bad data content (as opposed to bad flags)."""


def _parse_interval(text: str | None) -> tuple[float, float] | None:
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 2:
        raise click.UsageError("--interval expects two comma-separated numbers, e.g. 0,24")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise click.UsageError(f"--interval: {exc}") from exc
    return lo, hi


def _parse_resolutions(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise click.UsageError(f"--resolutions: {exc}") from exc
    if not values:
        raise click.UsageError("--resolutions must list at least one value")
    return values


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{what} {path}: invalid JSON at line {exc.lineno}") from exc


@click.group()
def cli():
    """Temporal coarsening, augmentation, and multi-resolution ensembles."""


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
def synth(config_path, out_dir, seed):
    """Generate labeled synthetic train/val/test record files."""
    doc = _load_json(config_path, "config")
    known = {f.name for f in dataclasses.fields(SynthConfig)}
    unknown = set(doc) - known
    if unknown:
        raise DataError(f"config {config_path}: unknown keys {sorted(unknown)}")
    if seed is not None:
        doc["seed"] = seed
    if "seed" not in doc:
        raise click.UsageError("provide --seed or a 'seed' key in the config")
    try:
        config = SynthConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise DataError(f"config {config_path}: {exc}") from exc
    dataset = generate(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", dataset.train), ("val", dataset.val), ("test", dataset.test)):
        if split:
            write_records(out / f"{name}.jsonl", split)
            click.echo(f"{name}: {len(split)} sequences -> {out / f'{name}.jsonl'}")


@cli.command(name="coarsen")
@click.option("--mode", required=True, type=click.Choice(["grid", "cluster"]))
@click.option("--p", required=True, type=float)
@click.option("--interval", default=None, help="Observation window t_L,t_R (grid mode).")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def coarsen_cmd(mode, p, interval, in_path, out_path):
    """Apply one deterministic coarsening operator to every record."""
    try:
        spec = CoarseningSpec(mode=mode, p=p, interval=_parse_interval(interval))
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    items = read_records(in_path)
    out = []
    for i, item in enumerate(items, start=1):
        try:
            out.append(LabeledSequence(coarsen(item.sequence, spec), item.label))
        except (ValueError, GridUnusableError) as exc:
            raise DataError(f"record {i} ({item.sequence.id!r}): {exc}") from exc
    write_records(out_path, out)


@cli.command(name="augment")
@click.option("--p-high", required=True, type=float)
@click.option("--weighted", is_flag=True, default=False)
@click.option("--seed", required=True, type=int)
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def augment_cmd(p_high, weighted, seed, in_path, out_path):
    """One stochastic augmentation draw per record."""
    try:
        cfg = AugmentConfig(p_high=p_high, weighted=weighted, rng_seed=seed)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    rng = np.random.default_rng(seed)
    items = read_records(in_path)
    out = [LabeledSequence(fast_augment(item.sequence, cfg, rng), item.label) for item in items]
    write_records(out_path, out)


@cli.command(name="fit-codec")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def fit_codec_cmd(in_path, schema_path, out_path):
    """Fit a feature codec on training records."""
    doc = _load_json(schema_path, "schema")
    try:
        specs = [
            VariableSpec(
                kind=v["kind"],
                levels=tuple(v["levels"]) if v.get("levels") is not None else None,
            )
            for v in doc["variables"]
        ]
        time_bounds = tuple(doc["time_bins"]) if "time_bins" in doc else None
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"schema {schema_path}: {exc}") from exc
    items = read_records(in_path)
    kwargs = {} if time_bounds is None else {"time_bounds": time_bounds}
    codec = fit_codec(specs, (item.sequence for item in items), **kwargs)
    save_codec(codec, out_path)
    click.echo(f"fitted codec: r={codec.r}, d={codec.width}")


@cli.command(name="featurize")
@click.option("--codec", "codec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def featurize_cmd(codec_path, in_path, out_path):
    """Encode records to per-event feature rows (TSV)."""
    codec = load_codec(codec_path)
    items = read_records(in_path)
    with open(out_path, "w") as fh:
        header = ["id", "event"] + [f"f{j}" for j in range(codec.width)]
        fh.write("\t".join(header) + "\n")
        for i, item in enumerate(items, start=1):
            try:
                matrix = featurize(item.sequence, codec)
            except ValueError as exc:
                raise DataError(f"record {i} ({item.sequence.id!r}): {exc}") from exc
            for row_idx in range(matrix.shape[0]):
                cells = [item.sequence.id, str(row_idx)]
                cells += [repr(float(v)) for v in matrix[row_idx]]
                fh.write("\t".join(cells) + "\n")


@cli.command(name="train")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--codec", "codec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--augment", "augment_p_high", type=float, default=None,
              help="Enable per-epoch augmentation with this p_high.")
@click.option("--weighted", is_flag=True, default=False)
@click.option("--mre", "mre_mode", type=click.Choice(["grid", "cluster"]), default=None)
@click.option("--resolutions", default="1,0.5,0.25,0.125", show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--momentum", type=float, default=0.95, show_default=True)
@click.option("--batch-size", type=int, default=100, show_default=True)
@click.option("--hidden", type=int, default=64, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None)
@click.option("--figures", "figures_dir", type=click.Path(file_okay=False), default=None)
def train_cmd(in_dir, codec_path, augment_p_high, weighted, mre_mode, resolutions,
              seed, epochs, lr, momentum, batch_size, hidden, out_path, trace_path, figures_dir):
    """Train the reference predictor, optionally augmented and/or ensembled."""
    codec = load_codec(codec_path)
    train_file = Path(in_dir) / "train.jsonl"
    if not train_file.exists():
        raise DataError(f"no train.jsonl in {in_dir}")
    train_data = read_records(train_file)
    val_file = Path(in_dir) / "val.jsonl"
    val_data = read_records(val_file) if val_file.exists() else None

    task = _infer_task(train_data)
    augment_cfg = None
    if augment_p_high is not None:
        try:
            augment_cfg = AugmentConfig(p_high=augment_p_high, weighted=weighted, rng_seed=seed)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
    mre_settings = None
    if mre_mode is not None:
        mre_settings = MreSettings(mode=mre_mode, resolutions=_parse_resolutions(resolutions))
    config = TrainConfig(
        epochs=epochs, lr=lr, momentum=momentum, batch_size=batch_size,
        hidden=hidden, seed=seed, task=task, augment=augment_cfg, mre=mre_settings,
    )
    try:
        result = train(train_data, codec, config, val_data=val_data)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    save_model(result.model, out_path)
    click.echo(
        f"trained {task} model ({result.model.n_parameters()} parameters, "
        f"{epochs} epochs); final train loss {result.train_loss[-1]:.6f}"
    )
    if trace_path:
        with open(trace_path, "w") as fh:
            fh.write("epoch\ttrain_loss\tval_loss\n")
            for i, tl in enumerate(result.train_loss):
                vl = repr(result.val_loss[i]) if result.val_loss else ""
                fh.write(f"{i + 1}\t{tl!r}\t{vl}\n")
    if figures_dir:
        from .report import loss_curve_figure

        out = Path(figures_dir)
        out.mkdir(parents=True, exist_ok=True)
        loss_curve_figure(result.train_loss, result.val_loss, out / "loss_curve.png")


def _infer_task(data: list[LabeledSequence]) -> str:
    labels = [item.label for item in data if item.label is not None]
    if len(labels) != len(data):
        raise DataError("every training record needs a label")
    if all(isinstance(lb, float) for lb in labels):
        return REGRESSION
    return CLASSIFICATION


def _label_array(item: LabeledSequence, index: int) -> np.ndarray:
    if item.label is None:
        raise DataError(f"record {index} ({item.sequence.id!r}) has no label")
    return np.atleast_1d(np.asarray(item.label, dtype=np.float64))


@cli.command(name="evaluate")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--codec", "codec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--bootstrap", "bootstrap_runs", type=int, default=0,
              help="Bootstrap runs for mean/standard error (0 = off).")
@click.option("--fgsm", "fgsm_eps", type=float, multiple=True,
              help="Evaluate under an FGSM perturbation of this strength (repeatable).")
@click.option("--invariance-gap", "gap_spec", default=None,
              help="MODE,P: mean |prediction change| under that coarsening.")
@click.option("--seed", type=int, default=None, help="Required when bootstrapping.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Write report.txt, metrics.tsv, and figures here.")
def evaluate_cmd(model_path, codec_path, in_path, bootstrap_runs, fgsm_eps, gap_spec, seed, out_dir):
    """Score labeled records and report metrics (stdout + optional files)."""
    if bootstrap_runs < 0:
        raise click.UsageError("--bootstrap must be >= 0")
    if bootstrap_runs > 0 and seed is None:
        raise click.UsageError("--bootstrap needs an explicit --seed")
    model = load_model(model_path)
    codec = load_codec(codec_path)
    items = read_records(in_path)
    labels = np.stack([_label_array(item, i) for i, item in enumerate(items, start=1)])
    preds = np.stack([model.predict(item.sequence, codec) for item in items])
    if preds.shape[1] != labels.shape[1]:
        raise DataError(
            f"model emits {preds.shape[1]} outputs but labels have {labels.shape[1]}"
        )

    rng = np.random.default_rng(seed) if seed is not None else None
    metrics: dict[str, MetricSummary] = {}

    def add(name: str, fn, scores, targets):
        point = float(fn(scores, targets))
        if bootstrap_runs > 0:
            mean, se = bootstrap(fn, scores, targets, runs=bootstrap_runs, rng=rng)
            metrics[name] = MetricSummary(point, mean, se, bootstrap_runs)
        else:
            metrics[name] = MetricSummary(point, point, 0.0, 1)

    classification = model.task == CLASSIFICATION
    scores = preds[:, 0]
    targets = labels[:, 0]
    if classification:
        if labels.shape[1] > 1:
            raise DataError("evaluate supports single-output classification labels")
        try:
            add("roc_auc", roc_auc, scores, targets)
        except UndefinedMetricError as exc:
            raise DataError(str(exc)) from exc
        add("map", average_precision, scores, targets)
    else:
        add("mae", mae, scores, targets)
        add("rmse", rmse, scores, targets)
        try:
            add("correlation", pearson_correlation, scores, targets)
        except UndefinedMetricError as exc:
            raise DataError(str(exc)) from exc

    fgsm_curve = []
    if fgsm_eps:
        if not classification:
            raise DataError("--fgsm applies to classification models")
        for eps in fgsm_eps:
            if eps < 0:
                raise click.UsageError("--fgsm values must be >= 0")
            attacked = np.stack(
                [
                    fgsm_prediction(model, codec, item.sequence, labels[i], eps)
                    for i, item in enumerate(items)
                ]
            )
            name = f"roc_auc_fgsm_{eps:g}"
            add(name, roc_auc, attacked[:, 0], targets)
            fgsm_curve.append((eps, metrics[name].point))

    if gap_spec is not None:
        parts = gap_spec.split(",")
        if len(parts) != 2 or parts[0] not in ("grid", "cluster"):
            raise click.UsageError("--invariance-gap expects MODE,P (e.g. cluster,0.5)")
        try:
            gap_p = float(parts[1])
            spec = CoarseningSpec(mode=parts[0], p=gap_p)
        except ValueError as exc:
            raise click.UsageError(f"--invariance-gap: {exc}") from exc
        try:
            diffs = invariance_gap(
                lambda s: model.predict(s, codec),
                (item.sequence for item in items),
                lambda s: coarsen(s, spec),
            )
        except (ValueError, GridUnusableError) as exc:
            raise DataError(str(exc)) from exc
        name = f"invariance_gap_{parts[0]}_{parts[1]}"
        gap_point = float(diffs.mean())
        metrics[name] = MetricSummary(gap_point, gap_point, 0.0, 1)

    report = EvalReport(metrics=metrics)
    from .report import render_text

    click.echo(render_text(report), nl=False)
    if out_dir is not None:
        from . import report as report_mod

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_mod.write_report(report, out)
        if classification:
            report_mod.roc_curve_figure(scores, targets, out / "roc_curve.png")
            report_mod.pr_curve_figure(scores, targets, out / "pr_curve.png")
            if fgsm_curve:
                eps_axis = [0.0] + [e for e, _ in fgsm_curve]
                auc_axis = [metrics["roc_auc"].point] + [a for _, a in fgsm_curve]
                report_mod.fgsm_sweep_figure(eps_axis, auc_axis, out / "fgsm_sweep.png")
        else:
            report_mod.prediction_scatter_figure(scores, targets, out / "predictions.png")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (RecordError, DataError, GridUnusableError, UnfitVariableError, UndefinedMetricError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except (TrainingDivergedError, FloatingPointError) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
