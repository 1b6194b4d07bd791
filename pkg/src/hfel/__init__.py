"""Edge association and resource allocation for hierarchical federated edge learning."""

from .allocation import (AllocationSolution, ConstantsTable, GroupConstants, build_constants, closed_form_beta,
                         grid_oracle, kkt_residuals, reduced_objective, solve_allocation, solve_bandwidth,
                         solve_constants, solve_frequencies)
from .association import (AssociationCaps, AssociationResult, AssociationStrategy, HistoryCache, run_association,
                          stability_audit, try_exchange, try_transfer)
from .baselines import SCHEMES, SchemeResult, run_scheme
from .errors import (AvailabilityError, ConstraintViolation, DegenerateInput, HFELError, ScenarioError,
                     SolverError, StepSizeError, StructuralError)
from .experiments import PRESETS, run_experiment, results_csv
from .model import (CostBreakdown, DeviceProfile, EdgeServerProfile, GroupAllocation, SystemConfig, World,
                    global_cost, group_cost)
from .scenario import ScenarioParams, generate_scenario, read_scenario, write_scenario

__version__ = "0.1.0"
