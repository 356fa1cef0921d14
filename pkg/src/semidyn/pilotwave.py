"""de Broglie-Bohm trajectories guided by exact wavefunction frames.

The velocity field is v = j / |psi|^2 = (hbar/m) Im(psi* psi') / |psi|^2.
Between grid points psi and psi' are interpolated with a local four-point
cubic; between frames they are interpolated linearly in the complex field.
On periodic grids a constant carrier exp(i k x) is divided out before
interpolating so that fast plane-wave factors do not limit the accuracy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classical import ClassicalTrajectory
from .exactqm import EPS_NODE, Wavefunction, current_density, derivative

logger = logging.getLogger(__name__)

NODE_SUBSTEP_FACTOR = 8


class DomainError(ValueError):
    """A trajectory left the grid (or the well)."""


def _lagrange_weights(s):
    """Four-point cubic weights for nodes -1, 0, 1, 2 at fractional offset s."""
    return (
        -s * (s - 1) * (s - 2) / 6,
        (s + 1) * (s - 1) * (s - 2) / 2,
        -(s + 1) * s * (s - 2) / 2,
        (s + 1) * s * (s - 1) / 6,
    )


class GuidingField:
    """Guiding velocity v(x, t) interpolated from a time-ordered list of frames.

    Parameters
    ----------
    frames : list of Wavefunction
        Frames on a common grid, increasing in time.
    eps_node : float
        Points where |psi| < eps_node * max|psi| count as node regions.
    v_max : float, optional
        Velocity cap applied in node regions, default 10 dx / (frame spacing).
        Faster flow elsewhere is left alone but flagged.
    demodulate : bool
        Divide out the mean-momentum carrier on periodic grids.
    """

    def __init__(self, frames, eps_node=EPS_NODE, v_max=None, demodulate=True):
        frames = list(frames)
        if not frames:
            raise ValueError("need at least one frame")
        grid = frames[0].grid
        if any(f.grid != grid for f in frames):
            raise ValueError("frames live on different grids")
        self.grid = grid
        self.mass = frames[0].mass
        self.hbar = frames[0].hbar
        self.times = np.array([f.time for f in frames], float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("frames must be in increasing time order")
        self.periodic = grid.boundary == "periodic"
        n, dx = grid.n, grid.dx
        self.kc = 0.0
        if self.periodic and demodulate:
            f0 = frames[0]
            p_mean = self.mass * np.sum(current_density(f0)) * dx / f0.norm() ** 2
            dk = 2 * np.pi / (grid.x_max - grid.x_min)
            self.kc = dk * np.round(p_mean / self.hbar / dk)
        x = grid.x
        carrier = np.exp(-1j * self.kc * x)
        phi, dphi = [], []
        for f in frames:
            if self.periodic:
                d = derivative(f.values, grid)
                a = f.values * carrier
                b = (d - 1j * self.kc * f.values) * carrier
                idx = np.arange(-1, n + 2) % n
                phi.append(a[idx])
                dphi.append(b[idx])
            else:
                d = derivative(f.values, grid, include_end=True)
                a = f.values
                # odd continuation of psi, even continuation of psi' about both walls
                phi.append(np.concatenate([[-a[1]], a, [0.0, -a[n - 1]]]))
                dphi.append(np.concatenate([[d[1]], d, [d[n - 1]]]))
        self._phi = np.array(phi)
        self._dphi = np.array(dphi)
        self.rho_floor = np.array([(eps_node * np.abs(f.values).max()) ** 2 for f in frames])
        spacing = np.min(np.diff(self.times)) if self.times.size > 1 else 1.0
        self.v_max = v_max if v_max is not None else 10 * dx / spacing

    def check_domain(self, x):
        g = self.grid
        x = np.asarray(x)
        if self.periodic:
            bad = (x < g.x_min) | (x >= g.x_max)
        else:
            bad = (x <= g.x_min) | (x >= g.x_max)
        if np.any(bad | ~np.isfinite(x)):
            raise DomainError("trajectory left the domain "
                              f"[{g.x_min}, {g.x_max}]")

    def _spatial(self, arr, j, w):
        return sum(wk * arr[..., j + k] for k, wk in enumerate(w))

    def evaluate(self, x, t):
        """Velocity and node flag at positions ``x`` and time ``t``."""
        x = np.asarray(x, float)
        self.check_domain(x)
        g = self.grid
        u = (x - g.x_min) / g.dx
        j = np.minimum(np.floor(u).astype(int), g.n - 1)
        w = _lagrange_weights(u - j)
        # padded index of grid node j is j + 1
        i = int(np.clip(np.searchsorted(self.times, t, "right") - 1, 0, max(self.times.size - 2, 0)))
        if self.times.size == 1:
            phi = self._spatial(self._phi[0], j, w)
            dphi = self._spatial(self._dphi[0], j, w)
            floor = self.rho_floor[0]
        else:
            a = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
            phi = (1 - a) * self._spatial(self._phi[i], j, w) + a * self._spatial(self._phi[i + 1], j, w)
            dphi = (1 - a) * self._spatial(self._dphi[i], j, w) + a * self._spatial(self._dphi[i + 1], j, w)
            floor = max(self.rho_floor[i], self.rho_floor[i + 1])
        rho = np.abs(phi) ** 2
        node = rho < floor
        with np.errstate(divide="ignore", invalid="ignore"):
            v = self.hbar / self.mass * (np.imag(np.conj(phi) * dphi) / rho + self.kc)
        v = np.where(np.isfinite(v), v, 0.0)
        # capped only inside node regions; fast flow elsewhere is flagged for substepping
        fast = np.abs(v) > self.v_max
        return np.where(node, np.clip(v, -self.v_max, self.v_max), v), node | fast


def guiding_velocity(psi: Wavefunction, x, eps_node=EPS_NODE, v_max=np.inf, return_flag=False):
    """Guiding velocity j/|psi|^2 of a single frame at positions ``x``.

    Raises
    ------
    DomainError
        If ``x`` lies outside the grid domain.
    """
    v, flag = GuidingField([psi], eps_node, v_max).evaluate(x, psi.time)
    if np.ndim(v) == 0:
        v, flag = float(v), bool(flag)
    return (v, flag) if return_flag else v


@dataclass
class BohmTrajectory:
    x0: float
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    flagged: int = 0

    @property
    def samples(self):
        return list(zip(self.t, self.x, self.v))

    def path_length(self):
        return float(np.sum(np.abs(np.diff(self.x))))

    def position_at(self, t):
        return np.interp(t, self.t, self.x)


@dataclass
class TrajectoryEnsemble:
    """Bohmian ensemble stored as arrays of shape (n_times, size)."""

    t: np.ndarray
    x: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    seed: int | None = None
    flagged: np.ndarray = field(repr=False, default=None)

    @property
    def size(self):
        return self.x.shape[1]

    @property
    def x0(self):
        return self.x[0]

    @property
    def trajectories(self):
        fl = self.flagged if self.flagged is not None else np.zeros(self.size, int)
        return [BohmTrajectory(self.x[0, i], self.t, self.x[:, i], self.v[:, i], int(fl[i]))
                for i in range(self.size)]

    def __getitem__(self, i):
        fl = 0 if self.flagged is None else int(self.flagged[i])
        return BohmTrajectory(self.x[0, i], self.t, self.x[:, i], self.v[:, i], fl)

    def positions_at(self, t):
        k = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no ensemble sample at t = {t}")
        return self.x[k]

    def crossing_violations(self):
        """Number of (time, neighbour pair) order inversions relative to t = 0."""
        order = np.argsort(self.x[0], kind="stable")
        xs = self.x[:, order]
        return int(np.sum(np.diff(xs, axis=1) < 0))

    def rows(self):
        """Rows (trajectory id, t, x, v) for CSV dumps."""
        n_t, n = self.x.shape
        ids = np.tile(np.arange(n), n_t)
        return np.column_stack([ids, np.repeat(self.t, n), self.x.ravel(), self.v.ravel()])


def _rk4_interval(field_, x, t0, t1, n_sub):
    h = (t1 - t0) / n_sub
    flagged = np.zeros(x.shape, dtype=bool)
    t = t0
    for _ in range(n_sub):
        k1, f1 = field_.evaluate(x, t)
        k2, f2 = field_.evaluate(x + 0.5 * h * k1, t + 0.5 * h)
        k3, f3 = field_.evaluate(x + 0.5 * h * k2, t + 0.5 * h)
        k4, f4 = field_.evaluate(x + h * k3, t + h)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        flagged |= f1 | f2 | f3 | f4
        t = t0 + (_ + 1) * h
    return x, flagged


def integrate_ensemble(frames, x0, substeps=4, eps_node=EPS_NODE, v_max=None, seed=None,
                       field_=None):
    """Integrate x' = v(x, t) for all starting points through the frame times.

    RK4 with ``substeps`` steps per frame interval; trajectories that touch a
    node region in an interval are redone with 8x more substeps.
    """
    field_ = field_ or GuidingField(frames, eps_node, v_max)
    x = np.atleast_1d(np.asarray(x0, float)).copy()
    field_.check_domain(x)
    times = field_.times
    xs = [x.copy()]
    vs = [field_.evaluate(x, times[0])[0]]
    n_flag = np.zeros(x.size, dtype=int)
    for i in range(times.size - 1):
        x_new, flagged = _rk4_interval(field_, x, times[i], times[i + 1], substeps)
        if flagged.any():
            idx = np.flatnonzero(flagged)
            n_flag[idx] += 1
            x_new[idx], _ = _rk4_interval(field_, x[idx], times[i], times[i + 1],
                                          substeps * NODE_SUBSTEP_FACTOR)
        x = x_new
        xs.append(x.copy())
        vs.append(field_.evaluate(x, times[i + 1])[0])
    if n_flag.any():
        logger.info("%d trajectories passed node regions", int((n_flag > 0).sum()))
    return TrajectoryEnsemble(times.copy(), np.array(xs), np.array(vs), seed, n_flag)


def integrate_bohm(frames, x0, substeps=4, eps_node=EPS_NODE, v_max=None) -> BohmTrajectory:
    """Single Bohmian trajectory from ``x0`` sampled at the frame times."""
    ens = integrate_ensemble(frames, [x0], substeps, eps_node, v_max)
    return ens[0]


def sample_initial(psi0: Wavefunction, n, seed=None):
    """``n`` i.i.d. positions from |psi0|^2 by inverse-CDF sampling."""
    if n < 1:
        raise ValueError("n must be at least 1")
    grid = psi0.grid
    x = np.append(grid.x, grid.x_max)
    rho = psi0.density
    rho = np.append(rho, rho[0] if grid.boundary == "periodic" else 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]))])
    cdf /= cdf[-1]
    u = np.random.default_rng(seed).random(n)
    out = np.interp(u, cdf, x)
    if grid.boundary == "periodic":
        out = np.minimum(out, np.nextafter(grid.x_max, grid.x_min))
    else:
        out = np.clip(out, np.nextafter(grid.x_min, grid.x_max), np.nextafter(grid.x_max, grid.x_min))
    return out


def run_ensemble(frames, n, seed=None, substeps=4, **kw):
    """Sample |psi_0|^2 and integrate the ensemble through the frames."""
    x0 = sample_initial(frames[0], n, seed)
    return integrate_ensemble(frames, x0, substeps, seed=seed, **kw)


def binned_distance(positions, frame: Wavefunction, bins=50, weights=None, q=1e-4):
    """Total-variation distance between binned samples and the binned |psi|^2.

    The bins split the central [q, 1 - q] quantile range of |psi|^2 evenly;
    samples and probability outside it go to the end bins.
    """
    grid = frame.grid
    x = np.append(grid.x, grid.x_max)
    rho = frame.density
    rho = np.append(rho, rho[0] if grid.boundary == "periodic" else 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]))])
    cdf /= cdf[-1]
    lo, hi = np.interp([q, 1 - q], cdf, x)
    edges = np.linspace(lo, hi, bins + 1)
    p_true = np.diff(np.interp(edges, x, cdf))
    p_true[0] += np.interp(lo, x, cdf)
    p_true[-1] += 1 - np.interp(hi, x, cdf)
    pos = np.clip(np.asarray(positions, float), lo, hi)
    w = None if weights is None else np.asarray(weights, float)
    counts, _ = np.histogram(pos, edges, weights=w)
    total = counts.sum()
    if total <= 0:
        return 1.0
    return float(0.5 * np.sum(np.abs(counts / total - p_true)))


def equivariance_distance(ensemble: TrajectoryEnsemble, frame: Wavefunction, bins=50):
    """TV distance between ensemble positions at ``frame.time`` and |psi|^2."""
    return binned_distance(ensemble.positions_at(frame.time), frame, bins)


@dataclass
class MismatchMetrics:
    sup_deviation: float
    bohm_path_length: float
    classical_path_length: float
    ratio: float

    def to_dict(self):
        return dict(self.__dict__)


def mismatch_report(bohm: BohmTrajectory, classical: ClassicalTrajectory) -> MismatchMetrics:
    """Sup-norm deviation and path lengths of a Bohmian and a classical path."""
    t0 = max(bohm.t[0], classical.t[0])
    t1 = min(bohm.t[-1], classical.t[-1])
    if t1 < t0:
        raise ValueError("trajectories share no time span")
    t = np.unique(np.concatenate([bohm.t, classical.t]))
    t = t[(t >= t0) & (t <= t1)]
    dev = np.abs(bohm.position_at(t) - classical.position_at(t))
    lb = bohm.path_length()
    lc = classical.path_length()
    ratio = lb / lc if lc > 0 else (0.0 if lb == 0 else np.inf)
    return MismatchMetrics(float(dev.max()), lb, lc, float(ratio))
