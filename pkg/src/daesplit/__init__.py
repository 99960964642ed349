"""Operator splitting for coupled index-1 DAEs and port-Hamiltonian DAEs."""
from .dae import (CoupledDae, CoupledDaeWithConstraint, CouplingFlags, Partition, State, Trajectory,
                  check_index1, consistent_init, lift_constraint_model, reduce_to_ode, reduced_model)
from .errors import *  # noqa: F401,F403
from .harness import observed_order, reference_solution, run_convergence, run_eps_study
from .integrators import IntegratorKind, SolverStats, StepConfig, dae_step, integrate
from .models import (CircuitParams, InputSignal, LcParams, lc_oscillator, load_model,
                     phs_circuit_example, scalar_decay, synthetic_phs_dae)
from .phs import (PhsDae, RegularizedPhs, dissipativity_check, explicit_form, hamiltonian,
                  phs_integrate, regularize, validate_structure)
from .splitting import (SchemeKind, SplitKind, compose, differential_coupling_split, doubled_split,
                        lagrangian_split, splitting_integrate)

__version__ = "0.1.0"
