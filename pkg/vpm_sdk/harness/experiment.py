"""
Policy comparison over a grid of policies, maps, agent counts and seeds.
"""

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union, TYPE_CHECKING

import numpy as np
import pandas as pd

from ..core.exceptions import VPMError
from ..utils.logging import get_logger, log_performance
from .runner import run_policy

if TYPE_CHECKING:
    from ..core.config import VPMConfig
    from ..monitoring.metrics import MetricsCollector

logger = get_logger(__name__)

KEY_COLUMNS = ['policy', 'map', 'n_train', 'n_test', 'seed']
COLUMNS = KEY_COLUMNS + ['cumulative_penalty', 'penalty_e6', 'error']
FLOAT_FORMAT = '%.6f'


@dataclass
class ExperimentReport:
    """One row per grid cell, sorted by policy, map, agent counts and seed."""

    results: pd.DataFrame

    @property
    def failures(self) -> pd.DataFrame:
        return self.results[self.results['error'] != '']

    def summary(self) -> pd.DataFrame:
        """Mean and standard deviation over seeds, raw and in units of 1e6."""
        ok = self.results[self.results['error'] == '']
        grouped = ok.groupby(['policy', 'map', 'n_train', 'n_test'], sort=True)['cumulative_penalty']
        table = grouped.agg(['mean', 'std', 'count']).reset_index()
        table['mean_e6'] = table['mean'] * 1e-6
        table['std_e6'] = table['std'] * 1e-6
        return table

    def cross_table(self, map_name: Optional[str] = None) -> pd.DataFrame:
        """Mean penalty (1e6 units) with (policy, N_train) rows and N_test columns."""
        table = self.summary()
        if map_name is not None:
            table = table[table['map'] == map_name]
        return table.pivot_table(
            index=['policy', 'n_train'], columns='n_test', values='mean_e6', aggfunc='mean'
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.results.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    def format_table(self) -> str:
        summary = self.summary()
        if summary.empty:
            return "(no successful runs)"
        return summary.to_string(index=False, float_format=lambda v: f"{v:.4f}")


def _run_cell(args: Tuple['VPMConfig', str, str, int, int]) -> Dict[str, Any]:
    config, policy, map_name, n_agents, seed = args
    row: Dict[str, Any] = {
        'policy': policy,
        'map': map_name,
        'n_train': n_agents,
        'n_test': n_agents,
        'seed': seed,
        'cumulative_penalty': np.nan,
        'penalty_e6': np.nan,
        'error': '',
    }
    try:
        log, total = run_policy(
            config, policy, seed,
            map_name=map_name,
            n_agents=n_agents,
            steps=config.experiment.steps,
        )
    except VPMError as e:
        row['error'] = f"{type(e).__name__}: {e.message}"
        return row
    except Exception as e:
        logger.error(f"Unexpected {type(e).__name__} in {policy}/{map_name}/N={n_agents}/seed={seed}: {e}")
        row['error'] = f"{type(e).__name__}: {e}"
        return row

    row['n_train'] = log.metadata.get('n_train') or n_agents
    row['cumulative_penalty'] = total
    row['penalty_e6'] = total * 1e-6
    return row


def grid_cells(config: 'VPMConfig') -> List[Tuple[str, str, int, int]]:
    experiment = config.experiment
    return list(itertools.product(
        experiment.policies, experiment.maps, experiment.n_agents, experiment.seeds
    ))


@log_performance
def compare(
    config: 'VPMConfig',
    metrics: Optional['MetricsCollector'] = None,
) -> ExperimentReport:
    """
    Run every (policy, map, N, seed) combination.

    A failing cell is logged and reported with an error message; the rest
    of the grid still runs. Rows are sorted, so the CSV does not depend on
    the worker count.
    """
    cells = [(config,) + cell for cell in grid_cells(config)]
    workers = config.experiment.workers
    logger.info(f"Comparing {len(cells)} runs with {workers} worker(s)")

    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(cell) for cell in cells]

    for row in rows:
        label = f"{row['policy']}/{row['map']}/N={row['n_test']}/seed={row['seed']}"
        if row['error']:
            logger.warning(f"Run {label} failed: {row['error']}")
            if metrics:
                metrics.record_compare_failure(label, row['error'])
        elif metrics:
            metrics.record_episode(row['policy'], row['cumulative_penalty'], config.experiment.steps)

    results = pd.DataFrame(rows, columns=COLUMNS)
    results = results.sort_values(KEY_COLUMNS, kind='mergesort').reset_index(drop=True)
    report = ExperimentReport(results)

    if config.experiment.out_csv:
        path = report.to_csv(config.experiment.out_csv)
        logger.info(f"Comparison written to {path}")
    return report
