#!/usr/bin/env python3
"""
VPM SDK Command Line Interface

Runs single episodes, training, policy comparisons and trajectory analysis.
"""

import sys
from pathlib import Path
from typing import Optional

import click

from .core.config import VPMConfig, load_config
from .core.exceptions import ConfigurationError, VPMError
from .harness.analysis import detect_period, map_center, phase_difference, polar_series
from .harness.experiment import compare as run_compare
from .harness.images import emit_trail
from .harness.runner import load_log, run_policy, save_log
from .monitoring.metrics import MetricsCollector
from .planners.tspc import monitoring_tour
from .utils.logging import setup_logging, get_logger
from .world.maps import list_maps, resolve_map

logger = get_logger(__name__)


def _fail(message: str) -> None:
    click.echo(message, err=True)
    sys.exit(1)


def _revalidate(config: VPMConfig) -> None:
    try:
        config.validate()
    except ConfigurationError as e:
        _fail(f"Invalid option: {e}")


def _metrics(config: VPMConfig) -> Optional[MetricsCollector]:
    return MetricsCollector(config.monitoring) if config.monitoring.enable_metrics else None


def _write_metrics(metrics: Optional[MetricsCollector], path: Optional[str]) -> None:
    if metrics and path:
        Path(path).write_text(metrics.export_prometheus_metrics())
        click.echo(f"Metrics exported to {path}")


@click.group()
@click.option('--config', '-c', type=click.Path(exists=True), help='Configuration file path')
@click.option('--log-level', default=None, help='Logging level (default from configuration)')
@click.option('--structured-logs', is_flag=True, help='Use structured JSON logging')
@click.pass_context
def cli(ctx, config, log_level, structured_logs):
    """VPM SDK - visibility-based persistent monitoring."""

    ctx.ensure_object(dict)

    try:
        ctx.obj['config'] = load_config(config)
    except VPMError as e:
        _fail(f"Error loading configuration: {e}")

    monitoring = ctx.obj['config'].monitoring
    setup_logging(
        level=log_level or monitoring.log_level,
        structured=structured_logs or monitoring.structured_logging,
        log_file=monitoring.log_file,
    )


@cli.command()
@click.option('--map', 'map_name', help='Bundled map name or map file')
@click.option('--policy', default='gcs', show_default=True, help='random, gcs, tspc or net:<checkpoint>')
@click.option('--agents', type=int, help='Number of agents')
@click.option('--steps', type=int, help='Episode length')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--out', type=click.Path(), help='Write the trajectory log (JSON lines)')
@click.option('--dmin', type=float, help='GCS candidate suppression distance')
@click.option('--checkpoint', help='Checkpoint for the learned policy (implies --policy net)')
@click.option('--dump-obs', type=click.Path(), help='Directory for per-step observation PGMs')
@click.option('--trail', type=click.Path(), help='Write a PPM trail image')
@click.pass_context
def run(ctx, map_name, policy, agents, steps, seed, out, dmin, checkpoint, dump_obs, trail):
    """Run one episode and report its cumulative penalty."""

    config = ctx.obj['config']
    if dmin is not None:
        config.planner.d_min = dmin
    _revalidate(config)
    if checkpoint:
        policy = f"net:{checkpoint}"

    try:
        log, total = run_policy(
            config, policy, seed,
            map_name=map_name,
            n_agents=agents,
            steps=steps,
            dump_dir=dump_obs or config.observation.dump_dir,
            metrics=_metrics(config),
        )
        if out:
            save_log(log, out)
            click.echo(f"Trajectory log written to {out}")
        if trail:
            grid_map, _ = resolve_map(map_name or config.environment.map)
            emit_trail(log, grid_map, trail)
            click.echo(f"Trail image written to {trail}")
    except VPMError as e:
        _fail(f"VPM SDK error: {e}")

    meta = log.metadata
    click.echo(
        f"{meta['policy']} on {meta['map']} with {meta['n_agents']} agents, "
        f"{meta['steps']} steps, seed {seed}"
    )
    click.echo(f"Cumulative penalty: {total:.1f} ({total * 1e-6:.6f} x 1e6)")


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True), help='Configuration file path')
@click.option('--episodes', type=int, help='Override the number of training episodes')
@click.option('--seed', type=int, help='Override the training seed')
@click.option('--metrics-out', type=click.Path(), help='Write Prometheus metrics after training')
@click.pass_context
def train(ctx, config_path, episodes, seed, metrics_out):
    """Train the shared actor-critic with PPO."""

    from .learning.trainer import rolling_mean, train as run_training

    config = load_config(config_path) if config_path else ctx.obj['config']
    if episodes is not None:
        config.training.episodes = episodes
    _revalidate(config)
    metrics = _metrics(config)

    try:
        result = run_training(config, seed=seed, metrics=metrics)
    except VPMError as e:
        _fail(f"Training failed: {e}")

    window = rolling_mean(result.curve, config.training.rolling_window)
    click.echo(f"Trained {result.episodes} episodes")
    if result.episodes:
        click.echo(f"Final rolling mean penalty: {window[-1]:.1f}")
    click.echo(f"Last checkpoint: {result.last_checkpoint or 'none'}")
    _write_metrics(metrics, metrics_out)


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True), help='Configuration file path')
@click.option('--out-csv', type=click.Path(), help='CSV output path')
@click.option('--workers', type=int, help='Parallel worker processes')
@click.option('--metrics-out', type=click.Path(), help='Write Prometheus metrics after the grid')
@click.pass_context
def compare(ctx, config_path, out_csv, workers, metrics_out):
    """Compare policies over maps, agent counts and seeds."""

    config = load_config(config_path) if config_path else ctx.obj['config']
    if out_csv:
        config.experiment.out_csv = out_csv
    if workers:
        config.experiment.workers = workers
    _revalidate(config)
    metrics = _metrics(config)

    try:
        report = run_compare(config, metrics=metrics)
    except VPMError as e:
        _fail(f"Comparison failed: {e}")

    click.echo(report.format_table())
    if report.results['n_train'].nunique() > 1 or report.results['n_test'].nunique() > 1:
        click.echo("\nMean penalty (x 1e6), N_train rows by N_test columns:")
        click.echo(report.cross_table().to_string(float_format=lambda v: f"{v:.4f}"))
    if len(report.failures):
        click.echo(f"\n{len(report.failures)} run(s) failed", err=True)
    if config.experiment.out_csv:
        click.echo(f"Results written to {config.experiment.out_csv}")
    _write_metrics(metrics, metrics_out)


@cli.command()
@click.option('--log', 'log_path', type=click.Path(exists=True), required=True, help='Trajectory log')
@click.option('--period', is_flag=True, help='Detect the period of every agent')
@click.option('--phase', nargs=2, type=int, help='Phase offset between two agents')
@click.option('--polar', type=int, help='Analyse sin(theta) of one agent around the map center')
@click.option('--axis', type=click.Choice(['row', 'col']), default='row', show_default=True,
              help='Coordinate series used for --period and --phase')
@click.pass_context
def analyze(ctx, log_path, period, phase, polar, axis):
    """Look for periodic structure in a trajectory log."""

    config = ctx.obj['config']
    threshold = config.experiment.period_threshold
    axis_index = 0 if axis == 'row' else 1

    try:
        log = load_log(log_path)
        click.echo(f"{log.steps} steps, {log.n_agents} agents")

        if period:
            for agent in range(log.n_agents):
                found = detect_period(log.agent_series(agent, axis_index), threshold)
                click.echo(f"Agent {agent}: period {found if found is not None else 'none'}")

        if phase:
            a, b = phase
            series_a = log.agent_series(a, axis_index)
            found = detect_period(series_a, threshold)
            if found is None:
                click.echo(f"Agent {a} shows no period; phase is undefined")
            else:
                offset = phase_difference(series_a, log.agent_series(b, axis_index), found)
                click.echo(f"Agents {a} and {b}: period {found}, phase offset {offset}")

        if polar is not None:
            map_name = log.metadata.get('map', config.environment.map)
            grid_map, _ = resolve_map(map_name)
            series = polar_series(log, polar, map_center(grid_map))
            found = detect_period(series, threshold)
            click.echo(f"Agent {polar}: sin(theta) period {found if found is not None else 'none'}")
            click.echo(' '.join(f"{v:.3f}" for v in series))
    except VPMError as e:
        _fail(f"Analysis failed: {e}")


@cli.command('map-info')
@click.option('--map', 'map_name', help='Bundled map name or map file')
@click.option('--fov', type=int, help='Field of view used for the guard-point tour')
@click.pass_context
def map_info(ctx, map_name, fov):
    """Describe a map, or list the bundled maps."""

    config = ctx.obj['config']
    if not map_name:
        click.echo("Bundled maps:")
        for name in list_maps():
            click.echo(f"  {name}")
        return

    try:
        grid_map, starts = resolve_map(map_name)
        fov = fov or config.environment.fov
        tour = monitoring_tour(grid_map, fov)
    except VPMError as e:
        _fail(f"VPM SDK error: {e}")

    click.echo(f"Map: {grid_map.name}")
    click.echo(f"Size: {grid_map.height} x {grid_map.width}")
    click.echo(f"Free cells: {grid_map.free_count}")
    click.echo(f"Declared starts: {starts or 'none'}")
    click.echo(f"Guard points (L={fov}): {len(tour.points)}")
    click.echo(f"Tour cycle length: {tour.length} (nearest neighbour {tour.nearest_neighbor_length})")


@cli.command('init-config')
@click.argument('config_path', type=click.Path())
@click.option('--map', 'map_name', help='Map to configure')
@click.option('--agents', type=int, help='Number of agents')
def init_config(config_path, map_name, agents):
    """Initialize a new configuration file."""

    config = VPMConfig()
    if map_name:
        config.environment.map = map_name
    if agents:
        config.environment.n_agents = agents

    try:
        config.to_yaml(config_path)
    except OSError as e:
        _fail(f"Error creating configuration: {e}")
    click.echo(f"Configuration file created: {config_path}")
    click.echo("Edit the file to customize your settings.")


def main():
    """Main CLI entry point."""
    try:
        cli()
    except KeyboardInterrupt:
        click.echo("\nOperation cancelled by user.")
        sys.exit(0)


if __name__ == '__main__':
    main()
