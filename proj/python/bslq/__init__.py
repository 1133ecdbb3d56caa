"""Indefinite backward stochastic LQ: Riccati, auxiliary BSDE, closed loop and oracles."""

from ._bslq import *  # noqa: F401,F403
from ._bslq import Error, IoError, NumericalError, ValidationError  # noqa: F401
