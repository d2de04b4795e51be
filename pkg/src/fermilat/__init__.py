"""Equilibrium charge transport for free lattice fermions on finite boxes.

Builds one-particle Anderson-type Hamiltonians on centered cubic boxes,
evaluates equilibrium correlation functions in the grand-canonical state, and
provides the transport stack on top: bond currents, paramagnetic and
diamagnetic conductivity coefficients, the conductivity measure and its
admittance limits, driven (Peierls) dynamics with energy bookkeeping, and
linear-response current maps with their duality structure.
"""

from ._errors import (
    BoxSizeError,
    ConfigError,
    DomainError,
    FermilatError,
    GridError,
    OutsideDomainError,
    ShapeError,
    SingularKernelError,
    StageDependencyError,
)
from .lattice import (
    FieldProfile,
    HermitianOperator,
    LatticeBox,
    Potential,
    build_hamiltonian,
    build_magnetic_hamiltonian,
    integrated_field,
    make_box,
    sample_potential,
)
from .spectral import (
    DensityMatrix,
    EigenSystem,
    QuadraticObservable,
    complex_time_correlation,
    duhamel_inner_product,
    duhamel_time_series,
    eigendecompose,
    expectation_quadratic,
    fermi_symbol,
    generator_coefficient,
    heisenberg_coefficient,
)
from .transport import (
    BondCoefficient,
    TransportKernel,
    adjacency_operator,
    current_operator,
    sigma_dia,
    sigma_para,
    viscosity,
    xi_dia,
    xi_para,
    xi_para_commutator_route,
)
from .measure import (
    SpectralMeasure,
    admittance_limit,
    build_measure,
    cesaro_mean,
    duhamel_mass_matrix,
    eval_xi_from_measure,
    full_conductivity_measure,
    moment_bound_report,
    moment_norms,
    nontriviality_check,
    reconstruct_from_viscosity,
    static_admittance,
)
from .dynamics import (
    DrivenRun,
    DrivenState,
    EnergyLedger,
    Propagator,
    continuity_residual,
    energy_increments,
    evolve_propagator,
    evolve_state,
    evolve_trajectory,
    nonlinear_currents,
    ohm_joule_scaling_check,
    potential_energy_observable,
)
from .response import (
    ACField,
    ACFieldSpace,
    CausalKernel,
    QuadraticFormQ,
    ResistivityResult,
    conductivity_map,
    dual_pairing,
    fourier_ohm_current,
    heat_form,
    hilbert_grid,
    hilbert_transform,
    linear_currents,
    out_of_phase_current,
    resistivity_map,
    sigma_kernel,
)

__version__ = "0.1.0"
