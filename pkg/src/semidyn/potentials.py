"""Potential models for one-dimensional dynamics.

A :class:`PotentialModel` bundles the potential energy with the particle
mass and the value of hbar, so that the same classical system can be swept
through the semiclassical regime by changing ``hbar`` alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

FREE = "free"
HARMONIC = "harmonic"
WELL = "well"
POLYNOMIAL = "polynomial"

KINDS = (FREE, HARMONIC, WELL, POLYNOMIAL)


class WallError(ValueError):
    """Raised when a potential is evaluated outside the open interval (0, L)."""


@dataclass(frozen=True)
class PotentialModel:
    """Immutable description of a 1D Hamiltonian H = p^2/2m + V(x).

    Use the constructors :meth:`free`, :meth:`harmonic`, :meth:`infinite_well`
    and :meth:`polynomial` rather than building instances by hand.
    """

    kind: str
    mass: float = 1.0
    hbar: float = 1.0
    omega: float | None = None
    length: float | None = None
    coefficients: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if self.kind == HARMONIC and not (self.omega is not None and self.omega > 0):
            raise ValueError("harmonic oscillator needs omega > 0")
        if self.kind == WELL and not (self.length is not None and self.length > 0):
            raise ValueError("infinite well needs length > 0")
        if self.kind == POLYNOMIAL:
            object.__setattr__(self, "coefficients",
                               tuple(float(c) for c in self.coefficients))

    @classmethod
    def free(cls, mass=1.0, hbar=1.0):
        return cls(FREE, mass=mass, hbar=hbar)

    @classmethod
    def harmonic(cls, omega, mass=1.0, hbar=1.0):
        return cls(HARMONIC, mass=mass, hbar=hbar, omega=omega)

    @classmethod
    def infinite_well(cls, length, mass=1.0, hbar=1.0):
        return cls(WELL, mass=mass, hbar=hbar, length=length)

    @classmethod
    def polynomial(cls, coefficients, mass=1.0, hbar=1.0):
        """V(x) = sum_n coefficients[n] * x**n."""
        return cls(POLYNOMIAL, mass=mass, hbar=hbar, coefficients=tuple(coefficients))

    def with_hbar(self, hbar):
        return replace(self, hbar=hbar)

    @property
    def is_well(self):
        return self.kind == WELL

    @property
    def is_smooth(self):
        return self.kind != WELL

    @property
    def is_quadratic(self):
        """True when the Hamiltonian is at most quadratic (Van Vleck is exact)."""
        if self.kind in (FREE, HARMONIC):
            return True
        if self.kind == POLYNOMIAL:
            return all(c == 0 for c in self.coefficients[3:])
        return False

    def _check_domain(self, x):
        if self.kind == WELL:
            x = np.asarray(x)
            if np.any((x <= 0) | (x >= self.length)):
                raise WallError(f"position outside the well (0, {self.length})")

    def evaluate(self, x):
        """Potential energy V(x); accepts scalars or arrays."""
        self._check_domain(x)
        x = np.asarray(x, dtype=float)
        if self.kind in (FREE, WELL):
            v = np.zeros_like(x)
        elif self.kind == HARMONIC:
            v = 0.5 * self.mass * self.omega**2 * x**2
        else:
            v = np.polynomial.polynomial.polyval(x, self.coefficients) if self.coefficients \
                else np.zeros_like(x)
        return v if v.ndim else float(v)

    def gradient(self, x):
        """dV/dx."""
        self._check_domain(x)
        x = np.asarray(x, dtype=float)
        if self.kind in (FREE, WELL):
            g = np.zeros_like(x)
        elif self.kind == HARMONIC:
            g = self.mass * self.omega**2 * x
        else:
            d = np.polynomial.polynomial.polyder(self.coefficients) \
                if len(self.coefficients) > 1 else ()
            g = np.polynomial.polynomial.polyval(x, d) if len(d) else np.zeros_like(x)
        return g if g.ndim else float(g)

    def curvature(self, x):
        """d^2V/dx^2, used by the tangent (variational) equations."""
        self._check_domain(x)
        x = np.asarray(x, dtype=float)
        if self.kind in (FREE, WELL):
            h = np.zeros_like(x)
        elif self.kind == HARMONIC:
            h = np.full_like(x, self.mass * self.omega**2)
        else:
            d = np.polynomial.polynomial.polyder(self.coefficients, 2) \
                if len(self.coefficients) > 2 else ()
            h = np.polynomial.polynomial.polyval(x, d) if len(d) else np.zeros_like(x)
        return h if h.ndim else float(h)

    def energy(self, x, p):
        return np.asarray(p) ** 2 / (2 * self.mass) + self.evaluate(x)

    def to_dict(self):
        d = {"kind": self.kind, "mass": self.mass, "hbar": self.hbar}
        if self.omega is not None:
            d["omega"] = self.omega
        if self.length is not None:
            d["length"] = self.length
        if self.coefficients:
            d["coefficients"] = list(self.coefficients)
        return d


def evaluate(model: PotentialModel, x):
    return model.evaluate(x)


def gradient(model: PotentialModel, x):
    return model.gradient(x)
