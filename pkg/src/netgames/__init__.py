"""Distributed equilibrium seeking and parameter learning on networked games."""

from . import (cli, errors, estimator, games, gnep, harness, inexact, oracle,
               qp, seeker, topology)
from .games import (BoxSet, GameInstance, TruthParams, make_nash_cournot,
                    make_scalar_lq, sample_instance)
from .harness import RunConfig, load_config, run_algorithm1
from .seeker import StepConfig, choose_rho, choose_taus, run_exact
from .topology import (AugmentedLayout, NetworkTopology, StructuralMaps,
                       build_layout, build_structural_maps, build_topology,
                       circle_with_chords)

__version__ = "0.1.0"

__all__ = [
    "AugmentedLayout", "BoxSet", "GameInstance", "NetworkTopology",
    "RunConfig", "StepConfig", "StructuralMaps", "TruthParams",
    "build_layout", "build_structural_maps", "build_topology",
    "choose_rho", "choose_taus", "circle_with_chords", "cli", "errors",
    "estimator", "games", "gnep", "harness", "inexact", "load_config",
    "make_nash_cournot", "make_scalar_lq", "oracle", "qp",
    "run_algorithm1", "run_exact", "sample_instance", "seeker", "topology",
]
