"""Mean-field games with singular controls.

Càdlàg paths and parametrisations, WM1 distances, Marcus-type SDEs,
minimal jump costs, reward functionals, time changes and a bounded-velocity
equilibrium solver, plus named reproduction experiments.
"""
from .errors import (AlignmentError, CapabilityError, ConfigError, ContractError, CoverageError, DomainError,
                     InvariantError, NumericError, OrderError, ParameterError, RangeError, SingMFGError)
from .flow import EmpiricalMeasureFlow, Marginal, flow_residual, wasserstein2_empirical
from .jumpcost import JumpCostProblem, JumpCostResult, linear_interp_cost, min_jump_cost
from .marcus import (CoefficientSpec, NoisePath, SampleBox, build_coefficients, check_jump_monotonicity,
                     check_path_independence, jump_map_psi, marcus_integrate, marcus_integrate_ensemble,
                     simulate_parametrised, simulate_parametrised_ensemble, simulation_grid)
from .mfg import (BoundedVelocityPolicy, EquilibriumResult, LatticeSpec, MFGProblem, best_response_bounded,
                  k_ladder, picard_fixed_point)
from .paths import (CadlagPath, ParametrisedPath, TimeScalePair, apply_S, check_domain_S, dumps_path,
                    generalized_inverse, loads_path)
from .reparam import (LipschitzBudget, arctan_time_change, lipschitz_reparametrise, parametrise_with_timescale,
                      perturb_timescale, truncate_control)
from .reward import NEG_INF, RewardSpec, build_reward, reward_continuous, reward_parametrised, reward_singular
from .wm1 import canonical_parametrisation, thick_graph_membership, wm1_distance

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "CapabilityError",
    "ConfigError",
    "ContractError",
    "CoverageError",
    "DomainError",
    "InvariantError",
    "NumericError",
    "OrderError",
    "ParameterError",
    "RangeError",
    "SingMFGError",
    "EmpiricalMeasureFlow",
    "Marginal",
    "flow_residual",
    "wasserstein2_empirical",
    "JumpCostProblem",
    "JumpCostResult",
    "linear_interp_cost",
    "min_jump_cost",
    "CoefficientSpec",
    "NoisePath",
    "SampleBox",
    "build_coefficients",
    "check_jump_monotonicity",
    "check_path_independence",
    "jump_map_psi",
    "marcus_integrate",
    "marcus_integrate_ensemble",
    "simulation_grid",
    "simulate_parametrised",
    "simulate_parametrised_ensemble",
    "BoundedVelocityPolicy",
    "EquilibriumResult",
    "LatticeSpec",
    "MFGProblem",
    "best_response_bounded",
    "k_ladder",
    "picard_fixed_point",
    "CadlagPath",
    "ParametrisedPath",
    "TimeScalePair",
    "apply_S",
    "check_domain_S",
    "dumps_path",
    "generalized_inverse",
    "loads_path",
    "LipschitzBudget",
    "arctan_time_change",
    "lipschitz_reparametrise",
    "parametrise_with_timescale",
    "perturb_timescale",
    "truncate_control",
    "NEG_INF",
    "RewardSpec",
    "build_reward",
    "reward_continuous",
    "reward_parametrised",
    "reward_singular",
    "canonical_parametrisation",
    "thick_graph_membership",
    "wm1_distance",
]
