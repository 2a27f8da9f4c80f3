"""Time-optimal quantum control under normalized one- and two-body
Pauli interactions: a monotonic alternating-sweep solver, sweep and
recycling machinery over the total time, diagnostics for the structure
of optimal solutions, and fits that estimate minimal gate times."""

from .diagnostics import (
    ConstancyReport,
    GradedReport,
    SymmetryReport,
    costate_commutator_residual,
    costate_overlap,
    graded_residual,
    lambda_constancy,
    one_qubit_constancy,
    time_reversal_residual,
    time_reverse_solution,
)
from .exceptions import (
    DecompositionInconsistencyError,
    DegenerateCostateError,
    DegenerateRecordError,
    FitConvergenceError,
    InsufficientDataError,
)
from .fitting import (
    DEFAULT_WINDOW,
    FitResult,
    estimate_time_complexity,
    fit_exp2,
    fit_linear,
    fit_power,
)
from .krotov import (
    ConvergenceCriteria,
    IterationReport,
    KrotovState,
    SolveResult,
    backward_sweep,
    control_from_costate,
    evaluate_field,
    forward_sweep,
    seed_random_field,
    solve,
    terminal_costate,
)
from .pauli import (
    BASIS_ORDERING_VERSION,
    GeneratorIndex,
    GeneratorTable,
    PauliExpansion,
    basis_size,
    enumerate_basis,
    expand_traceless,
    parity_of,
)
from .propagation import (
    ControlField,
    TimeGrid,
    UnitaryTrajectory,
    assemble_hamiltonian,
    default_slices,
    normalize_field,
    propagate_backward,
    propagate_forward,
    step_propagator,
    trace_fidelity,
)
from .sweep import (
    BranchRecord,
    Envelope,
    EnvelopePoint,
    SweepBranch,
    SweepPlan,
    envelope_of,
    recycle_field,
    refine_field,
    resample_field,
    run_sweep,
    write_envelope_csv,
)
from .targets import (
    GateSpec,
    TargetUnitary,
    asym_unitary,
    compile_sequence,
    gate_matrix,
    qft_gate_sequence,
    qft_time_upper_bound,
    qft_unitary,
    sequence_time_cost,
    target_by_name,
    two_qubit_optimal_time,
)
from .units import OMEGA, T2MAX

__version__ = "0.1.0"
