"""Finite difference and finite volume schemes for convection-diffusion problems.

Subpackages and modules:

* :mod:`cdlab.core_grid`, :mod:`cdlab.fields`: grids, norms and coefficients
* :mod:`cdlab.fd_operators`, :mod:`cdlab.monotone_fd`: grid operators and monotone schemes
* :mod:`cdlab.unstructured_fvm`: Delaunay/Voronoi finite volumes
* :mod:`cdlab.time_schemes`, :mod:`cdlab.stability_lab`: time integration and its certification
* :mod:`cdlab.exponential_schemes`: exponentially fitted operators
* :mod:`cdlab.verify`: manufactured solutions and order estimates
* :mod:`cdlab.cli_io`: the ``cdlab`` command
"""

from .errors import CdlabError

__version__ = "0.1.0"

__all__ = ["CdlabError", "__version__"]
