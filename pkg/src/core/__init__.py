"""Core functionality package"""

from .topology import Topology, build_topology, validate_topology, relay_attachment
from .datagen import Dataset, PartitionPlan, load_datasets, partition_noniid
from .learner import ModelParams, ModelSpec, build_model_spec, init_model, local_sgd, evaluate
from .protocol import ROUND_ENGINES, EdgeState, RoundContext, RoundTrace, initial_state

__all__ = [
    'Topology',
    'build_topology',
    'validate_topology',
    'relay_attachment',
    'Dataset',
    'PartitionPlan',
    'load_datasets',
    'partition_noniid',
    'ModelParams',
    'ModelSpec',
    'build_model_spec',
    'init_model',
    'local_sgd',
    'evaluate',
    'ROUND_ENGINES',
    'EdgeState',
    'RoundContext',
    'RoundTrace',
    'initial_state',
]
