"""Command-line interface for the digital-twin workbench."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import click

from . import pipeline, report as reportmod
from .models import ModelRegistry
from .pipeline import CampaignSpec, canonical_json, parse_trim
from .simcluster import (
    ClusterConfig,
    RegimeKey,
    WorkloadSpec,
    inject_anomalies,
    run_regime,
)
from .telemetry import TelemetryStore, read_ndjson, write_ndjson
from .whatif import PairingConfig


def _parse_levels(text: str) -> tuple:
    """'1-6' or '200,400,600' -> tuple of ints."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part and not part.startswith("-"):
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


@click.group()
def main():
    """Digital-twin workbench: simulate, refine, train, and what-if."""


@main.command()
@click.option("--users", required=True, type=int)
@click.option("--pods", required=True, type=int)
@click.option("--ticks", required=True, type=int)
@click.option("--tick-ms", default=20.0, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--service-time-ms", default=8.0, show_default=True)
@click.option("--service-cv", default=0.25, show_default=True)
@click.option("--think-time-ms", default=400.0, show_default=True)
@click.option("--anomaly-rate", default=0.0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def simulate(users, pods, ticks, tick_ms, seed, service_time_ms, service_cv,
             think_time_ms, anomaly_rate, out):
    """Simulate one regime and write line-delimited JSON telemetry."""
    records = run_regime(
        WorkloadSpec(users=users, think_time_ms=think_time_ms),
        ClusterConfig(pods=pods, service_time_ms=service_time_ms, service_cv=service_cv),
        ticks,
        tick_ms=tick_ms,
        seed=seed,
    )
    if anomaly_rate > 0:
        records = inject_anomalies(records, anomaly_rate, seed=seed)
    n = write_ndjson(records, out)
    click.echo(f"wrote {n} records to {out}")


@main.command()
@click.option("--in", "infile", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--store", required=True, type=click.Path(file_okay=False))
def ingest(infile, store):
    """Ingest an NDJSON telemetry file into a store."""
    summary = TelemetryStore.open(store).ingest(read_ndjson(infile))
    if summary.duplicate_batch:
        click.echo("duplicate batch, skipped")
    else:
        click.echo(f"accepted={summary.accepted} rejected={summary.rejected}")


@main.command()
@click.option("--store", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--users", type=int, default=None)
@click.option("--pods", type=int, default=None)
@click.option("--from", "t0", type=float, default=None)
@click.option("--to", "t1", type=float, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="write NDJSON here instead of stdout")
def query(store, users, pods, t0, t1, out):
    """Query records by regime and/or time window."""
    regime = None
    if users is not None or pods is not None:
        if users is None or pods is None:
            raise click.UsageError("--users and --pods must be given together")
        regime = RegimeKey(users, pods)
    window = None
    if t0 is not None or t1 is not None:
        window = (t0 if t0 is not None else 0.0, t1 if t1 is not None else float("inf"))
    records = TelemetryStore.open(store).query(regime=regime, window=window)
    if out:
        write_ndjson(records, out)
        click.echo(f"wrote {len(records)} records to {out}")
    else:
        for rec in records:
            click.echo(json.dumps(rec.to_dict(), sort_keys=True))


@main.command()
@click.option("--store", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def export(store, out):
    """Export the whole store as CSV."""
    rows = TelemetryStore.open(store).export_csv(out)
    click.echo(f"exported {rows} rows to {out}")


@main.command()
@click.option("--store", required=True, type=click.Path(file_okay=False))
@click.option("--users", default="200,400,600", show_default=True)
@click.option("--pods", default="1-6", show_default=True)
@click.option("--ticks", default=2000, show_default=True, type=int)
@click.option("--tick-ms", default=20.0, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--anomaly-rate", default=0.005, show_default=True)
def campaign(store, users, pods, ticks, tick_ms, seed, anomaly_rate):
    """Run the full measurement campaign grid and ingest it."""
    spec = CampaignSpec(
        user_levels=_parse_levels(users),
        pod_levels=_parse_levels(pods),
        ticks_per_regime=ticks,
        tick_ms=tick_ms,
        seed=seed,
        anomaly_rate=anomaly_rate,
    )
    result = pipeline.run_campaign(spec, TelemetryStore.open(store))
    click.echo(json.dumps(result))


@main.command("build-dataset")
@click.option("--store", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--train-users", default="200,400", show_default=True)
@click.option("--test-users", default="600", show_default=True)
@click.option("--pods", default="1-6", show_default=True)
@click.option("--test-pods", default=None, help="defaults to --pods")
@click.option("--trim", default="percentile:1,99", show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def build_dataset(store, train_users, test_users, pods, test_pods, trim, out):
    """Assemble trimmed, feature-engineered train/test CSV datasets."""
    result = pipeline.build_dataset(
        TelemetryStore.open(store),
        _parse_levels(train_users),
        _parse_levels(test_users),
        _parse_levels(pods),
        parse_trim(trim),
        out,
        test_pods=_parse_levels(test_pods) if test_pods else None,
    )
    click.echo(json.dumps(result))


@main.command()
@click.option("--kind", required=True, type=click.Choice(["gbt", "mlp"]))
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file of model hyperparameters")
@click.option("--registry", required=True, type=click.Path(file_okay=False))
@click.option("--model-id", required=True)
def train(kind, dataset, config, registry, model_id):
    """Train a model on a built dataset and register it."""
    cfg = json.loads(Path(config).read_text()) if config else {}
    result = pipeline.train_model(kind, dataset, ModelRegistry(registry), model_id, cfg)
    click.echo(json.dumps(result))


@main.command()
@click.option("--model-id", required=True)
@click.option("--registry", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--figures/--no-figures", default=True, show_default=True)
def evaluate(model_id, registry, dataset, report_path, figures):
    """Evaluate a registered model and write a JSON report, a per-regime CSV,
    and figures alongside it."""
    rep, y_true, y_pred = pipeline.evaluate_model(ModelRegistry(registry), model_id, dataset)
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(canonical_json(rep.to_dict()))
    csv_path = report_path.with_suffix(".per_regime.csv")
    with csv_path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["regime", "mae_ms", "r2"])
        for key, m in rep.per_regime.items():
            writer.writerow([key, m["mae_ms"], m["r2"]])
    msg = f"grade={rep.grade} mae_ms={rep.mae_ms:.3f} report={report_path}"
    if figures:
        paths = reportmod.render_eval_figures(rep, y_true, y_pred, report_path.parent)
        msg += f" figures={[str(p) for p in paths]}"
    click.echo(msg)


@main.command()
@click.option("--model-id", required=True)
@click.option("--registry", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--store", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--from-users", required=True, type=int)
@click.option("--from-pods", required=True, type=int)
@click.option("--action", required=True,
              help="pods+1 | pods-1 | users:N")
@click.option("--caliper", default=0.5, show_default=True)
@click.option("--min-pairs", default=30, show_default=True, type=int)
@click.option("--epsilon-tie-ms", default=0.5, show_default=True)
@click.option("--trim", default="percentile:1,99", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--figures/--no-figures", default=True, show_default=True)
def whatif(model_id, registry, store, from_users, from_pods, action, caliper,
           min_pairs, epsilon_tie_ms, trim, out, figures):
    """Run a counterfactual what-if and write the report JSON, the matched
    pairs CSV, and delta figures alongside it."""
    rep = pipeline.whatif_report(
        ModelRegistry(registry),
        model_id,
        TelemetryStore.open(store),
        from_users,
        from_pods,
        action,
        pairing=PairingConfig(
            caliper=caliper, min_pairs=min_pairs, epsilon_tie_ms=epsilon_tie_ms
        ),
        trim=parse_trim(trim),
    )
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(canonical_json(rep.to_dict()))
    csv_path = out.with_suffix(".pairs.csv")
    with csv_path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index_a", "index_b", "nuisance_distance", "delta_true_ms", "delta_pred_ms"])
        for pair, pred in zip(rep._pairs, rep._delta_pred):
            writer.writerow(
                [pair.index_a, pair.index_b, pair.nuisance_distance, pair.delta_true_ms, pred]
            )
    msg = (
        f"pairs={rep.n_pairs} Sa={rep.sign_agreement} sensitivity={rep.sensitivity} "
        f"grade={rep.deployment_grade} report={out}"
    )
    if figures:
        paths = reportmod.render_whatif_figures(rep, rep._delta_true, rep._delta_pred, out.parent)
        msg += f" figures={[str(p) for p in paths]}"
    click.echo(msg)


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="TOML or JSON service configuration")
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
def serve(config, host, port):
    """Start the HTTP service (and operator console, if built)."""
    import uvicorn

    from .service import ServiceConfig, create_app

    cfg = ServiceConfig.load(config)
    if host:
        cfg = cfg.with_overrides(host=host)
    if port:
        cfg = cfg.with_overrides(port=port)
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port)


if __name__ == "__main__":
    main()
