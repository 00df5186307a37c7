"""Complete-positivity criterion for quadratic quantum master equations."""

from .model import (
    BathSpec,
    SystemSpec,
    Tolerances,
    coupling_matrices,
    load_spec,
    spec_from_dict,
    symplectic_form,
)
from .propagators import Convention, closed_form_sbeta, real_propagator, wick_propagator
from .cptp import (
    Verdict,
    analyze,
    decompose,
    effective_hamiltonian,
    gauge_transform,
    lindblad_decomposition,
    xi_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "BathSpec",
    "SystemSpec",
    "Tolerances",
    "coupling_matrices",
    "load_spec",
    "spec_from_dict",
    "symplectic_form",
    "Convention",
    "closed_form_sbeta",
    "real_propagator",
    "wick_propagator",
    "Verdict",
    "analyze",
    "decompose",
    "effective_hamiltonian",
    "gauge_transform",
    "lindblad_decomposition",
    "xi_matrix",
]
