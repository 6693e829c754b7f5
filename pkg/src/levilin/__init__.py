"""levilin: linewidth metrology for a levitated nanoparticle in a Paul trap.

Submodules
----------
trapphys   closed-form trap/gas physics and the force-noise budget
simulate   Langevin, quadrature and full-Mathieu motion synthesis
demod      numerical lock-in, amplitude quadrature, Rayleigh statistics
specfit    Welch PSDs, linewidth and susceptibility fits, pressure sweeps
collapse   dCSL / dDP rates and exclusion maps
levt       binary/CSV time-series containers
cli        batch pipeline (simulate / analyze / sweep / bounds)
"""

__version__ = "0.1.0"

from . import collapse, demod, levt, simulate, specfit, trapphys  # noqa: F401
from .series import QuadratureSeries, TimeSeries  # noqa: F401
