"""Dynamics of edge counts in randomly evolving graphs.

Two model families are covered: rates modulated by an autonomous background
Markov chain (``edgedyn.regime``), and rates resampled at fixed epochs and
applied to every edge simultaneously (``edgedyn.resample``).  Exact moment
formulas, stationary and transient distributions, diffusion limits
(``edgedyn.diffusion``), large-deviations rate functions (``edgedyn.ldp``)
and exact stochastic simulation (``edgedyn.simulate``) are provided for
both, with a configuration-driven CLI (``edgedyn.cli``) on top.

Model-specific operations keep their module namespaces (the two families
deliberately share operation names such as ``stationary_mean``); the core
types are re-exported here.
"""

from .background import (
    ChainSummary,
    Generator,
    RegimePath,
    ResolventExpansion,
    chain_summary,
    deviation_matrix,
    resolvent_exact,
    resolvent_expansion,
    sample_regime_path,
    stationary_distribution,
    validate_generator,
)
from .diffusion import DiffusionSpec, build_diffusion_spec, fluctuation_variance
from .ldp import OccupationProfile, PathFunction
from .regime import FactorialMomentTable, JointStationaryDistribution, RegimeModel
from .report import MomentReport
from .resample import (
    ContinuousResampleSpec,
    RatePairLaw,
    ResampleModel,
    ScaledResampleLaw,
    TransitionLaw,
    Uniform,
)
from .simulate import EdgeCountPath, TrajectoryEnsemble, rng_stream

__all__ = [
    "ChainSummary",
    "ContinuousResampleSpec",
    "DiffusionSpec",
    "EdgeCountPath",
    "FactorialMomentTable",
    "Generator",
    "JointStationaryDistribution",
    "MomentReport",
    "OccupationProfile",
    "PathFunction",
    "RatePairLaw",
    "RegimeModel",
    "RegimePath",
    "ResampleModel",
    "ResolventExpansion",
    "ScaledResampleLaw",
    "TrajectoryEnsemble",
    "TransitionLaw",
    "Uniform",
    "build_diffusion_spec",
    "chain_summary",
    "deviation_matrix",
    "fluctuation_variance",
    "resolvent_exact",
    "resolvent_expansion",
    "rng_stream",
    "sample_regime_path",
    "stationary_distribution",
    "validate_generator",
]

__version__ = "0.1.0"
