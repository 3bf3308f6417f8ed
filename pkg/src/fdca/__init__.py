"""Gridless joint DoA-range estimation with frequency diverse coprime arrays."""

from .array_model import (CoprimeLayout, Target, TargetScene, build_coprime_layout, make_scene,
                          sample_covariance, simulate_snapshots, theoretical_covariance)
from .coarray import VirtualSignal, derive_virtual_signal, difference_set
from .crb import coarray_fim
from .crm import CrmConfig, solve_crm
from .danm import DanmConfig, solve_danm
from .harness import ScenarioConfig, load_config, run_monte_carlo, run_pipeline

__version__ = '0.1.0'

__all__ = [
    'CoprimeLayout', 'CrmConfig', 'DanmConfig', 'ScenarioConfig', 'Target', 'TargetScene',
    'VirtualSignal', 'build_coprime_layout', 'coarray_fim', 'derive_virtual_signal',
    'difference_set', 'load_config', 'make_scene', 'run_monte_carlo', 'run_pipeline',
    'sample_covariance', 'simulate_snapshots', 'solve_crm', 'solve_danm',
    'theoretical_covariance',
]
