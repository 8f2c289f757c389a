"""Numerical laboratory for blow-up of the radial semilinear heat equation.

Modules
-------
core_model
    Nonlinearities, domains and similarity variables.
profile
    Self-similar profiles by shooting, the alpha scan and singular profiles.
mehler
    The Hermite semigroup by Mehler quadrature, shifted Gaussian norms and the
    perturbed semigroup with an inverse-square potential.
evolve
    Method-of-lines blow-up runs, rate fits and the similarity frame.
verify
    Checks on runs and synthetic fields.
harness
    Configuration, artifacts, suites and the ``blowup-lab`` command.
"""

__version__ = "0.1.0"

from .core_model import DomainSpec, Nonlinearity  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "DomainSpec", "Nonlinearity", "__version__"]
