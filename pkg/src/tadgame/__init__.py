"""Target-attacker-defender engagement simulation and escape-zone analysis."""

__version__ = "0.1.0"

from .config import ScenarioConfig, load_scenario  # noqa: E402
from .simulation import Outcome, compare, compute_metrics, run_simulation  # noqa: E402

__all__ = ["ScenarioConfig", "load_scenario", "run_simulation", "compute_metrics", "compare",
           "Outcome", "__version__"]
