"""Problem definition shared by every other module.

The physical problem is the radial semilinear heat equation
``u_t = Δu + f(u)`` on a ball of radius ``R`` in ``R^N`` with zero Dirichlet
data.  Two reaction terms are supported: ``f(u) = e^u`` and ``f(u) = u^p``.

Similarity variables::

    s = -log(T - t),  y = r / sqrt(T - t)
    w = log(T - t) + u                (exponential)
    w = (T - t)**(1/(p-1)) * u        (power)

Internally the distance to blow-up ``tau = T - t`` is what gets stored, since
``s`` needs the digits of ``tau`` rather than those of ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised for inputs outside the domain of an operation (e.g. t >= T)."""


class InvalidParameter(ValueError):
    """Raised for a parameter that violates its documented constraint."""


EXPONENTIAL = "Exponential"
POWER = "Power"


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term ``f``; ``kind`` is ``"Exponential"`` or ``"Power"``.

    Power nonlinearities act on ``u >= 0``; for negative arguments the odd
    extension ``|u|^(p-1) u`` is used so that numerical excursions stay finite.
    """

    kind: str = EXPONENTIAL
    p: float | None = None

    def __post_init__(self):
        if self.kind == EXPONENTIAL:
            if self.p is not None:
                raise InvalidParameter("Exponential nonlinearity takes no exponent")
        elif self.kind == POWER:
            if self.p is None or not np.isfinite(self.p) or self.p <= 1.0:
                raise InvalidParameter("Power nonlinearity requires p > 1")
            object.__setattr__(self, "p", float(self.p))
        else:
            raise InvalidParameter(f"unknown nonlinearity kind {self.kind!r}")

    @classmethod
    def exponential(cls) -> "Nonlinearity":
        return cls(EXPONENTIAL)

    @classmethod
    def power(cls, p: float) -> "Nonlinearity":
        return cls(POWER, p)

    @property
    def is_exponential(self) -> bool:
        return self.kind == EXPONENTIAL

    @property
    def kernel_code(self) -> int:
        """Integer tag understood by the compiled kernels."""
        return 0 if self.is_exponential else 1

    def f(self, u):
        if self.is_exponential:
            return np.exp(u)
        return np.sign(u) * np.abs(u) ** self.p

    def fprime(self, u):
        if self.is_exponential:
            return np.exp(u)
        return self.p * np.abs(u) ** (self.p - 1.0)

    def kappa(self) -> float:
        """Constant self-similar level ``(1/(p-1))**(1/(p-1))`` (Power only)."""
        if self.is_exponential:
            raise InvalidParameter("kappa is defined only for Power nonlinearities")
        e = 1.0 / (self.p - 1.0)
        return e ** e

    def scaling_exponent(self) -> float:
        """Exponent ``k`` of the tail ``phi ~ C r^(-k)``; 0 stands for the log tail."""
        return 0.0 if self.is_exponential else 2.0 / (self.p - 1.0)

    def profile_g(self, phi):
        """Zeroth-order term ``g`` of the stationary equation."""
        if self.is_exponential:
            return np.expm1(phi)
        return -phi / (self.p - 1.0) + np.sign(phi) * np.abs(phi) ** self.p

    def singular_constant(self, N: int) -> float:
        """Tail constant of the explicit singular steady profile.

        ``log(2(N-2))`` for the exponential, ``L`` with
        ``L^(p-1) = 2/(p-1) * (N - 2 - 2/(p-1))`` for the power.
        """
        if self.is_exponential:
            if N <= 2:
                raise InvalidParameter("singular exponential profile needs N >= 3")
            return math.log(2.0 * (N - 2))
        k = 2.0 / (self.p - 1.0)
        lp = k * (N - 2.0 - k)
        if lp <= 0.0:
            raise InvalidParameter(f"L^(p-1) = {lp} <= 0 for N={N}, p={self.p}")
        return lp ** (1.0 / (self.p - 1.0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "Nonlinearity":
        return cls(d["kind"], d.get("p"))

    def __str__(self):
        return "exp" if self.is_exponential else f"pow{self.p:g}"


@dataclass(frozen=True)
class DomainSpec:
    """Ball ``B_R`` in ``R^N``."""

    N: int
    R: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameter("N must be an integer >= 1")
        if not self.R > 0:
            raise InvalidParameter("R must be positive")

    @property
    def supercritical(self) -> bool:
        """True in the dimension range 3..9 used for exponential profile scans."""
        return 3 <= self.N <= 9


@dataclass(frozen=True)
class SimilarityFrame:
    """Point of the similarity frame; ``tau = T - t`` is kept explicitly."""

    T: float
    tau: float

    @property
    def s(self) -> float:
        return -math.log(self.tau)

    @property
    def t(self) -> float:
        return self.T - self.tau

    def y(self, r):
        return np.asarray(r) / math.sqrt(self.tau)


def _check_T(T):
    if not T > 0:
        raise InvalidParameter("blow-up time T must be positive")


def to_similarity(r, t, T, u_value, nl: Nonlinearity, tau=None):
    """Map ``(r, t, u)`` to similarity variables ``(y, s, w)``.

    Parameters
    ----------
    r, t, u_value : float or array
        Physical radius, time and solution value.
    T : float
        Blow-up time.
    nl : Nonlinearity
    tau : float, optional
        ``T - t`` if known more accurately than the difference.
    """
    _check_T(T)
    if tau is None:
        if np.any(np.asarray(t) >= T):
            raise DomainError("post-blow-up time")
        tau = T - np.asarray(t, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("post-blow-up time")
    if np.any(np.asarray(r) < 0):
        raise DomainError("negative radius")
    y = np.asarray(r, dtype=float) / np.sqrt(tau)
    s = -np.log(tau)
    if nl.is_exponential:
        w = np.log(tau) + u_value
    else:
        w = tau ** (1.0 / (nl.p - 1.0)) * u_value
    return _scalarize(y), _scalarize(s), _scalarize(w)


def from_similarity(y, s, w, T, nl: Nonlinearity):
    """Inverse of :func:`to_similarity`; returns ``(r, t, u_value)``."""
    _check_T(T)
    for v in (y, s, w):
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite similarity coordinates")
    tau = np.exp(-np.asarray(s, dtype=float))
    r = np.asarray(y, dtype=float) * np.sqrt(tau)
    t = T - tau
    if nl.is_exponential:
        u = np.asarray(w, dtype=float) + np.asarray(s, dtype=float)
    else:
        u = np.asarray(w, dtype=float) * tau ** (-1.0 / (nl.p - 1.0))
    return _scalarize(r), _scalarize(t), _scalarize(u)


def refined_scale(t, T, m: int, tau=None):
    """Intermediate length scale near blow-up.

    ``lambda = |log tau| * sqrt(tau)`` for ``m = 2`` and ``tau**(1/m)`` for
    ``m > 2``, with ``tau = T - t``.
    """
    if int(m) != m or m < 2:
        raise InvalidParameter("m must be an integer >= 2")
    _check_T(T)
    if tau is None:
        tau = T - np.asarray(t, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0) or np.any(tau >= T):
        raise DomainError("refined_scale needs 0 < t < T")
    if m == 2:
        lam = np.abs(np.log(tau)) * np.sqrt(tau)
    else:
        lam = tau ** (1.0 / m)
    return _scalarize(lam)


def _scalarize(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x
