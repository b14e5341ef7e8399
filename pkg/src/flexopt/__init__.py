"""Design and dispatch optimization of an industrial multi-energy system.

The package builds a solver-agnostic MILP for synthesis, sizing and hourly
operation of a site with electricity, heat, cooling, hydrogen and vehicle
batteries, runs the flexibility scenario study, and evaluates price- and
emission-based demand response.
"""

from flexopt.core_types import (
    BevGroup,
    ContextConfig,
    FuelParams,
    GridParams,
    HeatLevel,
    HPParams,
    ScenarioConfig,
    TechParams,
    TimeSeries,
    Well,
    annuity_factor,
    carnot_cop,
)

__version__ = "0.1.0"

__all__ = [
    "BevGroup",
    "ContextConfig",
    "FuelParams",
    "GridParams",
    "HeatLevel",
    "HPParams",
    "ScenarioConfig",
    "TechParams",
    "TimeSeries",
    "Well",
    "annuity_factor",
    "carnot_cop",
]
