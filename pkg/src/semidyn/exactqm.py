"""Exact grid propagation and the hydrodynamic fields of a wavefunction.

Smooth potentials use second-order split-step (Strang) spectral propagation on
a periodic grid.  The infinite well uses its sine eigenbasis, which evolves
exactly; its grid is ``x_j = j L / n`` with the wall value ``psi(0) = 0``
stored at ``j = 0`` (the other wall ``x = L`` is implicit).

Derivatives are spectral (FFT on periodic grids, sine/cosine series in the
well) except for the second derivative of the amplitude, which uses fourth
order differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from .potentials import PotentialModel

EPS_NODE = 1e-8
NORM_TOL = 1e-9
ALIAS_TOL = 1e-8


class AliasingError(RuntimeError):
    """Momentum content reaches the grid Nyquist limit."""


class GridMismatchError(ValueError):
    pass


class EmptyStateError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``n`` points, spacing (x_max - x_min) / n.

    ``boundary`` is ``"periodic"`` (split-step) or ``"dirichlet"`` (infinite
    well: x_min = 0 is a wall, x_max = L is the implicit other wall).
    """

    x_min: float
    x_max: float
    n: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two >= 16, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.boundary not in ("periodic", "dirichlet"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @classmethod
    def for_model(cls, model: PotentialModel, n, x_min=None, x_max=None):
        if model.is_well:
            return cls(0.0, model.length, n, "dirichlet")
        return cls(x_min, x_max, n, "periodic")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def k(self):
        """Angular wavenumbers of the periodic FFT."""
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.dx)

    def contains(self, x):
        x = np.asarray(x)
        return (x >= self.x_min) & (x <= self.x_max)


@dataclass(frozen=True)
class Wavefunction:
    grid: Grid
    values: np.ndarray = field(repr=False)
    time: float = 0.0
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise ValueError("values do not match the grid")
        object.__setattr__(self, "values", v)

    @property
    def x(self):
        return self.grid.x

    @property
    def density(self):
        return np.abs(self.values) ** 2

    def norm(self):
        return float(np.sqrt(np.sum(self.density) * self.grid.dx))

    def normalized(self):
        return replace(self, values=self.values / self.norm())

    def inner(self, other):
        """<self|other> by the trapezoid rule (plain sum on these grids)."""
        if other.grid != self.grid:
            raise GridMismatchError("wavefunctions live on different grids")
        return complex(np.sum(np.conj(self.values) * other.values) * self.grid.dx)

    def with_values(self, values, time=None):
        return replace(self, values=values, time=self.time if time is None else time)


# ---------------------------------------------------------------------------
# initial states

def gaussian(grid, model, center, momentum=0.0, sigma=1.0, normalize=True):
    """Gaussian packet exp(-(x-c)^2/4 sigma^2 + i p (x-c)/hbar); |psi|^2 has std sigma."""
    x = grid.x
    v = (2 * np.pi * sigma**2) ** -0.25 * np.exp(
        -((x - center) ** 2) / (4 * sigma**2) + 1j * momentum * (x - center) / model.hbar)
    if grid.boundary == "dirichlet":
        v[0] = 0.0
    psi = Wavefunction(grid, v, 0.0, model.mass, model.hbar)
    return psi.normalized() if normalize else psi


def coherent_state(grid, model, displacement, momentum=0.0):
    """Harmonic-oscillator coherent state: ground state displaced in phase space."""
    sigma = np.sqrt(model.hbar / (2 * model.mass * model.omega))
    return gaussian(grid, model, displacement, momentum, sigma)


def plane_wave(grid, model, momentum):
    """Unit-density plane wave (needs momentum * L / (2 pi hbar) integral on the grid)."""
    v = np.exp(1j * momentum * grid.x / model.hbar)
    return Wavefunction(grid, v, 0.0, model.mass, model.hbar)


def well_eigenstate(grid, model, n):
    """sqrt(2/L) sin(n pi x / L) sampled on the well grid."""
    L = model.length
    v = np.sqrt(2 / L) * np.sin(n * np.pi * grid.x / L)
    v[0] = 0.0
    return Wavefunction(grid, v.astype(complex), 0.0, model.mass, model.hbar)


def well_energy(model, n):
    return (model.hbar * np.pi * n / model.length) ** 2 / (2 * model.mass)


# ---------------------------------------------------------------------------
# spectral helpers

def _sine_coefficients(values):
    """b_k with psi_j = sum_k b_k sin(pi k j / n), k = 1..n-1."""
    n = values.size
    return sfft.dst(values[1:], type=1) / n


def _from_sine_coefficients(b):
    n = b.size + 1
    out = np.zeros(n, dtype=complex)
    out[1:] = sfft.idst(b * n, type=1)
    return out


def derivative(values, grid, include_end=False):
    """First derivative: FFT on periodic grids, sine series in the well.

    With ``include_end`` the well result has n + 1 entries, the last one
    being the slope at the far wall x = L.
    """
    if grid.boundary == "periodic":
        return sfft.ifft(1j * grid.k * sfft.fft(values))
    n = grid.n
    b = _sine_coefficients(values)
    kk = np.pi * np.arange(1, n) / (grid.x_max - grid.x_min)
    c = np.zeros(n + 1, dtype=complex)
    c[1:n] = b * kk
    # cosine series evaluated on j = 0..n via DCT-I
    d = sfft.dct(c, type=1) / 2
    return d if include_end else d[:n]


def second_difference(f, grid):
    """Fourth-order central second derivative.

    Periodic grids wrap; in the well ``f`` is treated as even about both
    walls with value ``f(L) = 0``, which suits the amplitude R = |psi|.
    """
    if grid.boundary == "periodic":
        fm2, fm1, fp1, fp2 = (np.roll(f, s) for s in (2, 1, -1, -2))
    else:
        ext = np.concatenate([f[2:0:-1], f, [0.0], f[-1:-2:-1]])
        fm2, fm1, fc, fp1, fp2 = (ext[i:i + f.size] for i in range(5))
    return (-fp2 + 16 * fp1 - 30 * f + 16 * fm1 - fm2) / (12 * grid.dx**2)


def momentum_tail_mass(psi: Wavefunction, fraction=0.25):
    """Probability in the outer ``fraction`` of the momentum grid."""
    if psi.grid.boundary == "periodic":
        amp = np.abs(sfft.fft(psi.values)) ** 2
        k = np.abs(psi.grid.k)
        kmax = np.pi / psi.grid.dx
    else:
        amp = np.abs(_sine_coefficients(psi.values)) ** 2
        k = np.arange(1, psi.grid.n)
        kmax = psi.grid.n
    total = amp.sum()
    return float(amp[k > (1 - fraction) * kmax].sum() / total) if total > 0 else 0.0


def _energy_scale(psi, model):
    """Largest energy carried by the state: kinetic at the edge of its momentum support
    plus the largest |V| where the density is non-negligible."""
    amp = np.abs(sfft.fft(psi.values)) ** 2
    amp /= amp.sum()
    k = psi.grid.k
    order = np.argsort(np.abs(k))
    cum = np.cumsum(amp[order])
    kmax = np.abs(k[order][min(np.searchsorted(cum, 1 - 1e-8), k.size - 1)])
    dens = psi.density
    support = dens > 1e-12 * dens.max()
    vmax = np.max(np.abs(model.evaluate(psi.x[support]))) if model.is_smooth else 0.0
    return (model.hbar * kmax) ** 2 / (2 * model.mass) + vmax


def propagate_exact(psi0: Wavefunction, model: PotentialModel, duration, dt, stride=1,
                    check_aliasing=True):
    """Frames of the exact evolution at times 0, stride*dt, 2*stride*dt, ...

    The last frame is always at ``duration``.
    """
    if abs(psi0.norm() - 1) > 1e-8:
        raise ValueError("initial state must be normalized")
    if not (duration > 0 and dt > 0):
        raise ValueError("duration and dt must be positive")
    if (model.is_well) != (psi0.grid.boundary == "dirichlet"):
        raise ValueError("grid boundary does not match the potential")
    n_steps = int(np.ceil(duration / dt - 1e-9))
    h = duration / n_steps
    frame_steps = list(range(0, n_steps, stride)) + [n_steps]
    if check_aliasing and momentum_tail_mass(psi0) > ALIAS_TOL:
        raise AliasingError("initial momentum content reaches the grid Nyquist limit")
    if model.is_well:
        frames = _propagate_well(psi0, model, [s * h for s in frame_steps])
    else:
        # free split-step is exact for any step
        if model.kind != "free" and h * _energy_scale(psi0, model) / model.hbar > 0.1:
            raise ValueError("dt too large: dt * E_max / hbar must stay below 0.1")
        frames = _propagate_split(psi0, model, h, frame_steps)
    for f in frames:
        if abs(f.norm() - 1) > NORM_TOL:
            raise RuntimeError(f"norm drift {abs(f.norm() - 1):.2e} at t = {f.time}")
    if check_aliasing and momentum_tail_mass(frames[-1]) > ALIAS_TOL:
        raise AliasingError("momentum content reached the grid Nyquist limit")
    return frames


def _propagate_split(psi0, model, h, frame_steps):
    grid = psi0.grid
    half_v = np.exp(-0.5j * model.evaluate(grid.x) * h / model.hbar)
    kin = np.exp(-0.5j * model.hbar * grid.k**2 * h / model.mass)
    psi = psi0.values.copy()
    frames = [psi0.with_values(psi.copy(), psi0.time)]
    step = 0
    for target in frame_steps[1:]:
        while step < target:
            psi = half_v * sfft.ifft(kin * sfft.fft(half_v * psi))
            step += 1
        frames.append(psi0.with_values(psi.copy(), psi0.time + step * h))
    return frames


def _propagate_well(psi0, model, times):
    n = psi0.grid.n
    b = _sine_coefficients(psi0.values)
    E = well_energy(model, np.arange(1, n))
    return [psi0.with_values(_from_sine_coefficients(b * np.exp(-1j * E * t / model.hbar)),
                             psi0.time + t) for t in times]


def evolve_well(psi0, model, t):
    """Single exact eigenbasis evolution of a well state to time ``t``."""
    return _propagate_well(psi0, model, [t])[0]


# ---------------------------------------------------------------------------
# hydrodynamic fields

@dataclass(frozen=True)
class PolarField:
    R: np.ndarray
    S: np.ndarray
    node_mask: np.ndarray
    hbar: float = 1.0

    def recompose(self):
        return self.R * np.exp(1j * self.S / self.hbar)


def node_mask(psi: Wavefunction, eps_node=EPS_NODE):
    R = np.abs(psi.values)
    return R < eps_node * R.max()


def polar_decompose(psi: Wavefunction, eps_node=EPS_NODE) -> PolarField:
    """R = |psi| and S = hbar * phase, unwrapped outward from the density maximum.

    Phase jumps across node regions take the branch of smallest |dS|; inside
    the node mask S is linearly interpolated and should not be trusted.
    """
    R = np.abs(psi.values)
    if not np.any(R > 0):
        raise EmptyStateError("wavefunction vanishes everywhere")
    mask = R < eps_node * R.max()
    good = np.flatnonzero(~mask)
    phase = np.angle(psi.values[good])
    anchor = int(np.searchsorted(good, int(np.argmax(R))))
    right = np.unwrap(phase[anchor:])
    left = np.unwrap(phase[anchor::-1])[::-1]
    unwrapped = np.concatenate([left[:-1], right])
    S = np.interp(np.arange(R.size), good, unwrapped) * psi.hbar
    return PolarField(R, S, mask, psi.hbar)


def current_density(psi: Wavefunction):
    """j = (hbar/m) Im(psi* dpsi/dx)."""
    d = derivative(psi.values, psi.grid)
    return psi.hbar / psi.mass * np.imag(np.conj(psi.values) * d)


def velocity_field(psi: Wavefunction):
    """j / |psi|^2 on the grid (NaN where the density is exactly zero)."""
    rho = psi.density
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rho > 0, current_density(psi) / rho, np.nan)


def quantum_potential(psi: Wavefunction, eps_node=EPS_NODE):
    """Q = -(hbar^2/2m) R''/R; NaN inside the node mask."""
    R = np.abs(psi.values)
    mask = R < eps_node * R.max()
    d2 = second_difference(R, psi.grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = -(psi.hbar**2) / (2 * psi.mass) * d2 / R
    return np.where(mask, np.nan, Q)


def _check_pair(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("frames live on different grids")
    h = b.time - a.time
    if not h > 0:
        raise ValueError("frames must be in increasing time order")
    return h


def continuity_residual(frame_a: Wavefunction, frame_b: Wavefunction):
    """Midpoint residual of d(R^2)/dt + d(R^2 dS/dx)/dx / m over a frame pair."""
    h = _check_pair(frame_a, frame_b)
    j_mid = 0.5 * (current_density(frame_a) + current_density(frame_b))
    div = np.real(derivative(j_mid, frame_a.grid))
    return (frame_b.density - frame_a.density) / h + div


def qhj_residual(frame_a: Wavefunction, frame_b: Wavefunction, model: PotentialModel,
                 eps_node=EPS_NODE):
    """Midpoint residual of dS/dt + (dS/dx)^2/2m + V + Q; NaN on nodes of either frame."""
    h = _check_pair(frame_a, frame_b)
    dS_dt = model.hbar * np.angle(frame_b.values * np.conj(frame_a.values)) / h
    mask = node_mask(frame_a, eps_node) | node_mask(frame_b, eps_node)
    if frame_a.grid.boundary == "dirichlet":
        mask = mask.copy()
        mask[0] = True
    V = np.zeros(frame_a.grid.n)
    V[~mask] = model.evaluate(frame_a.x[~mask])
    terms = []
    for f in (frame_a, frame_b):
        p = model.mass * velocity_field(f)
        terms.append(p**2 / (2 * model.mass) + quantum_potential(f, eps_node))
    r = dS_dt + 0.5 * (terms[0] + terms[1]) + V
    return np.where(mask, np.nan, r)


def residual_norm(field_values, grid):
    """L2 norm over the finite entries of a residual field."""
    f = np.asarray(field_values)
    ok = np.isfinite(f)
    return float(np.sqrt(np.sum(f[ok] ** 2) * grid.dx))


def autocorrelation(psi0: Wavefunction, frame: Wavefunction):
    """C(t) = |<psi0|psi(t)>|^2."""
    return abs(psi0.inner(frame)) ** 2


def l2_distance(a: Wavefunction, b: Wavefunction, mask=None):
    if a.grid != b.grid:
        raise GridMismatchError("wavefunctions live on different grids")
    d = np.abs(a.values - b.values) ** 2
    if mask is not None:
        d = d[~mask]
    return float(np.sqrt(np.sum(d) * a.grid.dx))


def fidelity(a: Wavefunction, b: Wavefunction):
    return abs(a.inner(b)) ** 2 / (a.norm() ** 2 * b.norm() ** 2)
