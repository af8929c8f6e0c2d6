"""Conformal-Killing 2-forms: fields, operators, transport, Killing fields and the bracket."""

from .fields import FormField, VecField, combine_forms, combine_vec, constant_form, constant_vec
from .killing import (
    KillingError,
    S2ECorrespondence,
    codiff_ratios,
    d_parallel_residual,
    flat_ck_form,
    hamiltonian_residual,
    hpn_ck_family,
    hpn_ck_form,
    killing_field,
    killing_fields_hpn,
    killing_to_ck,
    penrose_section,
    s2e_correspondence,
    sp_basis,
    sp_structure_constants,
)
from .operators import (
    CKResidual,
    KillingReport,
    PenroseError,
    PenroseResult,
    ck_residual,
    codiff_field,
    codifferential,
    d_formula_residual,
    exterior_derivative,
    killing_check,
    lie_derivative,
    penrose,
    twistor_residual,
    vector_bracket,
)
from .transport import (
    HolonomyReport,
    PathSpec,
    ProlongSection,
    TransportError,
    holonomy_dimension,
    integrate_segments,
    prolong_transport,
    transport_along,
    transported_fields,
)
from .bracket import (
    BracketError,
    Expansion,
    bracket_codiff_residual,
    bracket_hw_residual,
    ck_bracket,
    form_structure_constants,
    jacobi_residual,
    vector_structure_constants,
)
