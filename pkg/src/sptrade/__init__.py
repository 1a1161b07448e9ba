"""Energy-efficient spectrum-power trading between a small cell and a macro cell.

Joint MU selection, bandwidth allocation and power allocation maximizing the
small cell's energy efficiency (bit/J), with the baselines and scenario
generator used to compare schemes.
"""

from .allocator import (
    DinkelbachState,
    DualState,
    closed_form_primal,
    dinkelbach_solve,
    dual_subgradient,
    max_rate_solve,
    solve_duals,
)
from .lambertw import LambertDomainError, lambert_w0
from .model import (
    Allocation,
    ChannelState,
    ConvergenceError,
    EEOutcome,
    InfeasibleError,
    ModelError,
    SystemParams,
    best_su_map,
    check_feasible,
    mu_rate,
    su_rate_own,
    total_power,
    total_rate,
)
from .scenario import ChannelConfig, GeometryConfig, generate_scenario, monte_carlo
from .selection import (
    SelectionResult,
    TradingEEResult,
    exhaustive_select,
    greedy_select,
    non_spt_solve,
    theorem3_predicate,
    throughput_max_solve,
    trading_ee,
)

__version__ = "0.1.0"
