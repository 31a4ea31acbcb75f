"""Loss-aware DC dispatch toolkit.

Models transmission losses inside linearized dispatch problems three ways
(reference-point loss factors, a convex quadratic program, and a lazy linear
outer approximation), wraps them in a security-constrained economic dispatch,
and checks the resulting dispatches with an AC power flow.
"""

from .network import (
    Branch,
    Bus,
    BusKind,
    CaseError,
    CaseSemanticError,
    CaseSyntaxError,
    CostCurve,
    Generator,
    PowerNetwork,
    net_injection_bounds,
    parse_case,
    parse_json,
    validate_connectivity,
)

__version__ = "0.1.0"
