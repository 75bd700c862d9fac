"""Graph recurrent neural network for network-wide traffic prediction."""

__version__ = "0.1.0"

from grnn.errors import ContractError, NumericError, ParameterError, ValidationError
from grnn.graph import (
    LinkageNetwork,
    PropagationMatrix,
    RoadNetwork,
    build_propagation_matrix,
    load_road_network,
    sparse_view,
    transform,
)
from grnn.model import GradientSet, Params, backward, fd_gradient, forward, init_params
from grnn.online import RunState, TrainConfig, run_offline, step
