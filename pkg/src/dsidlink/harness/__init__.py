from .federation import CenterSpec, Federation, FederationSettings, default_centers
from .runner import ScenarioReport, run
from .scenario import Scenario, ScenarioInvalid, load_scenario, parse_scenario

__all__ = [
    "CenterSpec",
    "Federation",
    "FederationSettings",
    "Scenario",
    "ScenarioInvalid",
    "ScenarioReport",
    "default_centers",
    "load_scenario",
    "parse_scenario",
    "run",
]
