"""Discrete-event simulator for a hierarchical quantum-Internet architecture.

Modules, bottom up: :mod:`~hqnet.kernel` (statevector kernel),
:mod:`~hqnet.noise` (environment parameters), :mod:`~hqnet.topology`,
:mod:`~hqnet.control` (state matrices and reservation),
:mod:`~hqnet.routing`, :mod:`~hqnet.distribution`, :mod:`~hqnet.engine`
and :mod:`~hqnet.scenarios` with its command-line front end :mod:`~hqnet.cli`.
"""
from .engine import EngineConfig, Fault, run
from .noise import EnvParams
from .scenarios import ScenarioConfig, run_scenario
from .topology import (build_distributed_cellular, build_hierarchical_cellular,
                       build_parallel_chains)

__version__ = "0.1.0"

__all__ = ["EngineConfig", "EnvParams", "Fault", "ScenarioConfig", "build_distributed_cellular",
           "build_hierarchical_cellular", "build_parallel_chains", "run", "run_scenario"]
