"""Symbolic-numeric controllability analysis for mechanical control systems.

Subpackages
-----------
expr           expression kernel (parse, differentiate, simplify, evaluate)
geometry       metric, connection, symmetric product, Lie bracket
accessibility  product closures, rank tests, sufficient conditions
basis_search   input-basis construction / non-controllability certificates
simulator      forced geodesic integration and series expansion
cli            system-file loader and command-line interface
"""

from .expr import Point, parse_expr
from .tape import backend_name

__version__ = "0.1.0"

__all__ = ["Point", "parse_expr", "backend_name", "__version__"]
