"""Approximate competitive equilibria for dividing chores.

The main entry points are re-exported here; see the submodules for the rest.
"""

from .disutility import ProfileMap, make_oracle
from .equilibrium import (EquilibriumCertificate, VerifyReport, check_ef, check_po, ef_po_round,
                          from_kkt_general, from_kkt_linear, verify_ceei)
from .errors import ChoreEqError, InputError, SolverError
from .extensions import classify_mixed, solve_mixed, solve_weighted
from .instance import (CES, Instance, Linear, Mode, linear_instance, parse_instance,
                       serialize_instance)
from .solver import KktCertificate, SolverParams, solve_kkt_general, solve_kkt_linear

__version__ = "0.1.0"

__all__ = [
    "CES", "ChoreEqError", "EquilibriumCertificate", "InputError", "Instance", "KktCertificate",
    "Linear", "Mode", "ProfileMap", "SolverError", "SolverParams", "VerifyReport", "check_ef",
    "check_po", "classify_mixed", "ef_po_round", "from_kkt_general", "from_kkt_linear",
    "linear_instance", "make_oracle", "parse_instance", "serialize_instance", "solve_kkt_general",
    "solve_kkt_linear", "solve_mixed", "solve_weighted", "verify_ceei",
]
