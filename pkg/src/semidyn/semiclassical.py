"""Van Vleck propagation and the branch decomposition psi = sum_k psi^k.

Two routes are provided.

``propagate_semiclassical(method="kernel")`` integrates the Van Vleck kernel

    K(x0, x, t) = sum_k (2 pi i hbar)^(-1/2) |J_k|^(-1/2) exp(i S_k / hbar + i phi_k)

against psi0 on the grid, with J_k = dx/dp0 and phi_k = -mu_k pi/2 - pi r_k.
It is exact for quadratic Hamiltonians and, through the image sum, for the
infinite well.

``branch_decompose`` is the stationary-phase form: each component of psi0
(a Lagrangian sheet A(x0) exp(i sigma(x0)/hbar)) launches trajectories with
p0 = sigma'(x0); at every final point the trajectories landing there give the
branch fields

    psi^k(x, t) = psi_s(x0^k) |dx/dx0|^(-1/2) exp(i S_k / hbar + i phi_k).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve

from .classical import (EPS_BVP, EPS_CAUSTIC, default_dt, find_paths, flow,
                        jacobi_determinant_factor, maslov_phase, solve_brackets)
from .exactqm import Grid, Wavefunction
from .potentials import PotentialModel

logger = logging.getLogger(__name__)


class EmptyPathWarning(UserWarning):
    """No classical path connects the two points inside the momentum window."""


class CausticMaskError(RuntimeError):
    """Too many grid points sit on caustics to trust the propagated state."""


@dataclass(frozen=True)
class BVPConfig:
    """Settings of the boundary-value searches behind the Van Vleck sum.

    ``p_window=None`` uses +-pi hbar / dx, the largest momentum the grid
    resolves; ``"spectral"`` sizes the window from the momentum content of the
    initial state (:func:`spectral_window`), which is cheaper but truncates the
    kernel more and so costs accuracy.  In the kernel quadrature path
    contributions are rolled off with a raised cosine over the outer ``taper``
    fraction of each half of the window, which suppresses the ringing of a
    hard momentum cutoff.
    ``support_eps`` drops initial points with |psi0| < support_eps * max|psi0|
    from the quadrature.
    """

    p_window: tuple | None = None
    p_samples: int = 64
    dt: float | None = None
    order: int = 4
    tol: float = EPS_BVP
    eps_caustic: float = EPS_CAUSTIC
    support_eps: float = 1e-10
    max_masked: float = 0.05
    taper: float = 0.25

    def window(self, psi0: Wavefunction):
        """Initial-momentum window for the path search around ``psi0``."""
        if self.p_window is None:
            pmax = math.pi * psi0.hbar / psi0.grid.dx
            return (-pmax, pmax)
        if self.p_window == "spectral":
            return spectral_window(psi0, self.taper)
        return tuple(self.p_window)

    def rolloff(self, p0, window):
        """Raised-cosine weight of initial momenta inside ``window``."""
        lo, hi = window
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        d = np.abs(np.asarray(p0, float) - mid)
        if self.taper <= 0:
            return np.where(d <= half, 1.0, 0.0)
        inner = half * (1 - self.taper)
        s = np.clip((d - inner) / (half - inner), 0.0, 1.0)
        return np.where(d <= half, 0.5 * (1 + np.cos(np.pi * s)), 0.0)


def spectral_window(psi0: Wavefunction, taper=0.25, rel=1e-8, pad=0.5):
    """Momentum interval holding the spectrum of psi0, padded for the roll-off.

    The spectrum is that of psi0 extended by zero (so well states are not
    mirrored); the support is where |psi~(p)| > rel * max.  The interval is
    widened by ``pad`` of its half-width and so that the tapered zone lies
    outside the support, then clipped to the grid's Nyquist momentum.
    """
    g = psi0.grid
    n = 2 * g.n
    spec = np.abs(sfft.fft(psi0.values, n))
    p = 2 * np.pi * psi0.hbar * sfft.fftfreq(n, d=g.dx)
    sel = spec > rel * spec.max()
    p_a, p_b = p[sel].min(), p[sel].max()
    res = math.pi * psi0.hbar / (g.x_max - g.x_min)
    half = 0.5 * (p_b - p_a) + 2 * res
    mid = 0.5 * (p_a + p_b)
    half_w = half * (1 + pad) / (1 - taper)
    pmax = math.pi * psi0.hbar / g.dx
    return (max(mid - half_w, -pmax), min(mid + half_w, pmax))


def _prefactor(hbar):
    # (2 pi i hbar)^(-1/2) on the principal branch
    return (2 * math.pi * hbar) ** -0.5 * np.exp(-0.25j * math.pi)


def van_vleck_kernel(model: PotentialModel, x0, x, duration, p_window=(-10.0, 10.0),
                     p_samples=256, dt=None, order=4, eps_caustic=EPS_CAUSTIC):
    """Semiclassical propagator K(x0, x, t) summed over classical paths.

    Raises
    ------
    CausticError
        If one of the contributing paths sits on a conjugate point.
    """
    paths = find_paths(model, x0, x, duration, p_window, p_samples, dt, order)
    if not paths:
        warnings.warn(f"no classical path from {x0} to {x} in window {p_window}",
                      EmptyPathWarning, stacklevel=2)
        return 0j
    total = 0j
    for traj in paths:
        amp = jacobi_determinant_factor(traj, eps=eps_caustic)
        phase = traj.action / model.hbar + maslov_phase(traj.maslov_index, traj.reflection_count)
        total += amp * np.exp(1j * phase)
    return complex(_prefactor(model.hbar) * total)


def recurrence_strength(A1, S1, A2, S2, hbar):
    """|A1 exp(i S1/hbar) + A2 exp(i S2/hbar)|^2."""
    return float(A1**2 + A2**2 + 2 * A1 * A2 * np.cos((S1 - S2) / hbar))


# ---------------------------------------------------------------------------
# kernel quadrature

def _support(psi0, eps):
    amp = np.abs(psi0.values)
    sup = amp > eps * amp.max()
    if psi0.grid.boundary == "dirichlet":
        sup[0] = False
    return np.flatnonzero(sup)


def _flat_ranges(lo, hi):
    """Concatenate arange(lo[i], hi[i]); also return the owner index i."""
    counts = np.maximum(hi - lo, 0)
    total = int(counts.sum())
    owner = np.repeat(np.arange(lo.size), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return owner, np.repeat(lo, counts) + offsets


def _well_kernel_sum(psi0, model, duration, cfg):
    """Image sum of free kernels integrated against psi0.

    On the uniform grid every image point 2nL +- x_j is itself a lattice
    point, so the quadrature for all final points and images is one discrete
    convolution of psi0 with the sampled free kernel on the unfolded line.
    """
    grid = psi0.grid
    L, m, hbar = model.length, model.mass, model.hbar
    N, dx = grid.n, grid.dx
    j0 = _support(psi0, cfg.support_eps)
    a, b = j0.min(), j0.max()
    c0 = psi0.values[a:b + 1] * dx
    window = cfg.window(psi0)
    k_lo = int(math.floor(window[0] * duration / (m * dx)))
    k_hi = int(math.ceil(window[1] * duration / (m * dx)))
    d = dx * np.arange(k_lo, k_hi + 1)
    kern = cfg.rolloff(m * d / duration, window) * np.exp(1j * m * d**2 / (2 * hbar * duration))
    F = fftconvolve(c0, kern)  # F[i] at unfolded lattice index a + k_lo + i
    base = a + k_lo
    j = np.arange(N)
    out = np.zeros(N, dtype=complex)
    n_lo = int(math.floor((base - N) / (2 * N))) - 1
    n_hi = int(math.ceil((base + F.size + N) / (2 * N))) + 1
    for n in range(n_lo, n_hi + 1):
        for idx, sgn in ((2 * n * N + j, 1.0), (2 * n * N - j, -1.0)):
            i = idx - base
            ok = (i >= 0) & (i < F.size)
            out[ok] += sgn * F[i[ok]]
    out *= _prefactor(hbar) * math.sqrt(m / duration)
    out[0] = 0.0
    return out, np.zeros(N, dtype=bool)


_CHUNK = 1 << 15


def _smooth_kernel_sum(psi0, model, duration, cfg):
    grid = psi0.grid
    hbar = model.hbar
    dt = cfg.dt if cfg.dt is not None else default_dt(model, duration)
    j0 = _support(psi0, cfg.support_eps)
    x0 = grid.x[j0]
    c0 = psi0.values[j0] * grid.dx
    xs = grid.x
    window = cfg.window(psi0)
    P = np.linspace(*window, cfg.p_samples)
    n0, npn = x0.size, P.size
    fan = flow(model, np.repeat(x0, npn), np.tile(P, n0), duration, dt, cfg.order,
               energy_tol=None)
    X = fan.x.reshape(n0, npn)
    a = np.minimum(X[:, :-1], X[:, 1:]).ravel()
    b = np.maximum(X[:, :-1], X[:, 1:]).ravel()
    seg, tgt = _flat_ranges(np.searchsorted(xs, a, "right"), np.searchsorted(xs, b, "right"))
    row, k = np.divmod(seg, npn - 1)
    out = np.zeros(grid.n, dtype=complex)
    masked = np.zeros(grid.n, dtype=bool)
    for c in range(0, row.size, _CHUNK):
        sl = slice(c, c + _CHUNK)
        r, kk, t = row[sl], k[sl], tgt[sl]
        p_root, S, J, mu, refl, ok = _solve_kernel_paths(
            model, duration, dt, cfg, x0[r], xs[t], P[kk], P[kk + 1],
            X[r, kk] - xs[t], X[r, kk + 1] - xs[t])
        caustic = np.abs(J) < cfg.eps_caustic * duration / model.mass
        masked[t[caustic | ~ok]] = True
        use = ok & ~caustic
        wgt = cfg.rolloff(p_root[use], window)
        terms = wgt * c0[r[use]] * np.abs(J[use]) ** -0.5 * np.exp(
            1j * (S[use] / hbar + maslov_phase(mu[use], refl[use])))
        out += np.bincount(t[use], terms.real, grid.n) + 1j * np.bincount(t[use], terms.imag, grid.n)
    out *= _prefactor(hbar)
    out[masked] = 0.0
    return out, masked


def _solve_kernel_paths(model, duration, dt, cfg, x0, target, lo, hi, flo, fhi):
    """Refine bracketed initial momenta; returns (p0, S, J, mu, refl, converged) at the roots."""
    n = x0.size
    last_u = np.full(n, np.nan)
    S, J = np.zeros(n), np.zeros(n)
    mu, refl = np.zeros(n, dtype=int), np.zeros(n, dtype=int)

    def store(idx, u, s):
        last_u[idx] = u
        S[idx] = s.S
        J[idx] = s.jacobi
        mu[idx] = s.mu
        refl[idx] = s.refl

    def evaluate(u, idx):
        s = flow(model, x0[idx], u, duration, dt, cfg.order, energy_tol=None)
        store(idx, u, s)
        return s.x - target[idx], s.jacobi

    roots, _, ok = solve_brackets(evaluate, lo, hi, flo, fhi, cfg.tol)
    stale = np.flatnonzero(ok & (last_u != roots))
    if stale.size:
        store(stale, roots[stale], flow(model, x0[stale], roots[stale], duration, dt,
                                        cfg.order, energy_tol=None))
    if not ok.all():
        logger.warning("%d of %d boundary problems did not converge", (~ok).sum(), ok.size)
    return roots, S, J, mu, refl, ok


@dataclass
class SemiclassicalResult:
    psi: Wavefunction
    masked: np.ndarray

    @property
    def masked_fraction(self):
        return float(self.masked.mean())


def propagate_semiclassical(psi0: Wavefunction, model: PotentialModel, duration,
                            config: BVPConfig | None = None, method="kernel",
                            components=None, return_mask=False):
    """Semiclassically propagated state at ``duration``.

    ``method="kernel"`` integrates the Van Vleck kernel over the initial grid;
    ``method="branches"`` assembles the stationary-phase branch fields (see
    :func:`branch_decompose`).  Grid points whose path search hit a caustic
    are set to zero and reported in the mask.

    Raises
    ------
    CausticMaskError
        When more than ``config.max_masked`` of the grid is masked.
    """
    cfg = config or BVPConfig()
    if not duration > 0:
        raise ValueError("duration must be positive")
    if method == "branches":
        state = branch_decompose(psi0, model, duration, cfg, components)
        values, masked = state.field(), state.masked
    elif method == "kernel":
        if model.is_well:
            values, masked = _well_kernel_sum(psi0, model, duration, cfg)
        else:
            values, masked = _smooth_kernel_sum(psi0, model, duration, cfg)
    else:
        raise ValueError(f"unknown method {method!r}")
    frac = masked.mean()
    if frac > cfg.max_masked:
        raise CausticMaskError(f"{100 * frac:.1f}% of grid points sit on caustics at t = {duration}")
    psi = psi0.with_values(values, psi0.time + duration)
    return SemiclassicalResult(psi, masked) if return_mask else psi


# ---------------------------------------------------------------------------
# Lagrangian sheets and branches

@dataclass
class _Run:
    sheet: int
    run: int
    nodes: np.ndarray
    amp: CubicSpline
    phase: CubicSpline


def _runs_from_component(psi: Wavefunction, sheet, eps, model):
    grid = psi.grid
    R = np.abs(psi.values)
    good = R > eps * R.max()
    if grid.boundary == "dirichlet":
        good[0] = False
    idx = np.flatnonzero(good)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1) + 1
    runs = []
    for r, chunk in enumerate(np.split(idx, breaks)):
        if chunk.size < 4:
            continue
        xs = grid.x[chunk]
        amp = CubicSpline(xs, R[chunk])
        phase = CubicSpline(xs, psi.hbar * np.unwrap(np.angle(psi.values[chunk])))
        nodes = xs
        if model.is_well:
            # let the sheet reach the walls: nodes just inside (0, L)
            edge = 1e-9 * model.length
            if chunk[0] == 1:
                nodes = np.concatenate([[edge], nodes])
            if chunk[-1] == grid.n - 1:
                nodes = np.concatenate([nodes, [model.length - edge]])
        runs.append(_Run(sheet, r, nodes, amp, phase))
    return runs


@dataclass
class Contributions:
    """Flat table of the classical contributions at a set of query points."""

    point: np.ndarray
    sheet: np.ndarray
    run: np.ndarray
    x0: np.ndarray
    p0: np.ndarray
    action: np.ndarray
    jacobian: np.ndarray
    maslov: np.ndarray
    reflections: np.ndarray
    weight: np.ndarray
    value: np.ndarray
    caustic: np.ndarray

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        zi = np.zeros(0, dtype=int)
        return cls(zi, zi, zi, z, z, z, z, zi, zi, z.astype(complex), z.astype(complex),
                   np.zeros(0, dtype=bool))

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if p.point.size]
        if not parts:
            return cls.empty()
        names = cls.__dataclass_fields__.keys()
        return cls(**{n: np.concatenate([getattr(p, n) for p in parts]) for n in names})

    def take(self, idx):
        names = self.__dataclass_fields__.keys()
        return Contributions(**{n: getattr(self, n)[idx] for n in names})

    def total(self, n_points):
        v = self.value
        return np.bincount(self.point, v.real, n_points) + 1j * np.bincount(self.point, v.imag, n_points)


class SheetPropagator:
    """Transports the sheets of an initial state and finds the contributions at any x."""

    def __init__(self, components, model: PotentialModel, config: BVPConfig | None = None):
        self.model = model
        self.config = config or BVPConfig()
        self.components = list(components)
        self.runs = []
        for s, comp in enumerate(self.components):
            self.runs.extend(_runs_from_component(comp, s, self.config.support_eps, model))
        if not self.runs:
            raise ValueError("initial state has no support")
        self._node_cache = {}

    def launch(self, run: _Run, x0, duration):
        """Flow of the sheet trajectories started at ``x0``."""
        x0 = np.asarray(x0, float)
        p0 = run.phase(x0, 1)
        curv = run.phase(x0, 2)
        dt = self.config.dt if self.config.dt is not None else default_dt(self.model, max(duration, 1e-300))
        return flow(self.model, x0, p0, duration, dt, self.config.order, tangent=(1.0, curv),
                    energy_tol=None)

    def _nodes(self, run, duration):
        key = (run.sheet, run.run, float(duration))
        if key not in self._node_cache:
            self._node_cache[key] = self.launch(run, run.nodes, duration)
        return self._node_cache[key]

    def _targets(self, xq, y_min, y_max):
        """Unfolded targets for physical query points (images in the well)."""
        if not self.model.is_well:
            sel = np.flatnonzero((xq >= y_min) & (xq <= y_max))
            return sel, xq[sel]
        L = self.model.length
        n_lo = int(math.floor((y_min - L) / (2 * L))) - 1
        n_hi = int(math.ceil((y_max + L) / (2 * L))) + 1
        pts, ys = [], []
        for n in range(n_lo, n_hi + 1):
            for sgn in (1, -1):
                y = 2 * n * L + sgn * xq
                sel = np.flatnonzero((y >= y_min) & (y <= y_max))
                pts.append(sel)
                ys.append(y[sel])
        return np.concatenate(pts), np.concatenate(ys)

    def contributions(self, xq, duration) -> Contributions:
        xq = np.atleast_1d(np.asarray(xq, float))
        parts = [self._run_contributions(run, xq, duration) for run in self.runs]
        return Contributions.concat(parts)

    def _run_contributions(self, run, xq, duration):
        cfg = self.config
        hbar = self.model.hbar
        nodes = self._nodes(run, duration)
        Y = nodes.y
        pts, ys = self._targets(xq, Y.min(), Y.max())
        if pts.size == 0:
            return Contributions.empty()
        order = np.argsort(ys)
        pts, ys = pts[order], ys[order]
        a = np.minimum(Y[:-1], Y[1:])
        b = np.maximum(Y[:-1], Y[1:])
        seg, tgt = _flat_ranges(np.searchsorted(ys, a, "right"), np.searchsorted(ys, b, "right"))
        # a target sitting exactly on the first node belongs to no half-open segment
        first = np.flatnonzero(ys == Y[0])
        if first.size:
            seg = np.concatenate([seg, np.zeros(first.size, dtype=int)])
            tgt = np.concatenate([tgt, first])
        if seg.size == 0:
            return Contributions.empty()
        x_nodes = run.nodes
        lo, hi = x_nodes[seg], x_nodes[seg + 1]
        flo, fhi = Y[seg] - ys[tgt], Y[seg + 1] - ys[tgt]
        n_br = seg.size
        res = {"u": np.full(n_br, np.nan)}
        for name in ("S", "jac", "p0"):
            res[name] = np.zeros(n_br)
        for name in ("mu", "refl"):
            res[name] = np.zeros(n_br, dtype=int)

        def store(idx, u, s):
            res["u"][idx] = u
            res["S"][idx] = s.S
            res["jac"][idx] = s.tangent_x
            res["mu"][idx] = s.mu
            res["refl"][idx] = s.refl
            res["p0"][idx] = run.phase(u, 1)

        def evaluate(u, idx):
            s = self.launch(run, u, duration)
            store(idx, u, s)
            return s.y - ys[tgt[idx]], s.tangent_x

        tol = cfg.tol * max(1.0, float(np.max(np.abs(ys))))
        roots, _, ok = solve_brackets(evaluate, lo, hi, flo, fhi, tol)
        stale = np.flatnonzero(ok & (res["u"] != roots))
        if stale.size:
            store(stale, roots[stale], self.launch(run, roots[stale], duration))
        if not ok.all():
            logger.warning("%d sheet roots did not converge", (~ok).sum())
        keep = np.flatnonzero(ok)
        # the same root may be bracketed twice when a target equals a node value
        key = np.round(roots[keep] / (1e-9 * max(1.0, np.ptp(x_nodes))))
        _, uniq = np.unique(np.stack([pts[tgt[keep]], key]), axis=1, return_index=True)
        keep = keep[np.sort(uniq)]
        x0 = roots[keep]
        jac = res["jac"][keep]
        # caustic contributions are kept as flagged zero entries
        caustic = np.abs(jac) < cfg.eps_caustic
        comp_val = run.amp(x0) * np.exp(1j * run.phase(x0) / hbar)
        with np.errstate(divide="ignore"):
            weight = np.where(caustic, 0.0, comp_val * np.abs(jac) ** -0.5)
        mu, refl = res["mu"][keep], res["refl"][keep]
        value = weight * np.exp(1j * (res["S"][keep] / hbar + maslov_phase(mu, refl)))
        n = keep.size
        return Contributions(
            point=pts[tgt[keep]], sheet=np.full(n, run.sheet), run=np.full(n, run.run),
            x0=x0, p0=res["p0"][keep], action=res["S"][keep], jacobian=jac, maslov=mu,
            reflections=refl, weight=weight, value=value, caustic=caustic)


@dataclass
class Branch:
    """One branch psi^k: a family of classical paths sharing sheet and labels.

    Arrays are indexed along the grid points where the branch is present.
    ``weight`` is psi_s(x0^k) |dx/dx0|^(-1/2); ``action`` is the classical
    action S_k accumulated along the path.
    """

    index: int
    sheet: int
    run: int
    reflections: int
    maslov: int
    grid_index: np.ndarray
    x: np.ndarray
    origin: np.ndarray
    p0: np.ndarray
    action: np.ndarray
    weight: np.ndarray
    values: np.ndarray

    @property
    def phase(self):
        """Maslov and wall phase phi_k."""
        return float(maslov_phase(self.maslov, self.reflections))

    @property
    def label(self):
        return (self.reflections, self.maslov)

    def field(self, n):
        out = np.zeros(n, dtype=complex)
        out[self.grid_index] = self.values
        return out

    def norm(self, dx):
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * dx))


@dataclass
class SemiclassicalState:
    branches: list
    grid: Grid
    time: float
    mass: float
    hbar: float
    propagator: SheetPropagator = field(repr=False, default=None)
    masked: np.ndarray = field(repr=False, default=None)
    ambiguities: list = field(default_factory=list)

    def field(self):
        out = np.zeros(self.grid.n, dtype=complex)
        for b in self.branches:
            out[b.grid_index] += b.values
        return out

    def wavefunction(self):
        return Wavefunction(self.grid, self.field(), self.time, self.mass, self.hbar)

    def contributions(self, x):
        """Contributions of every branch at arbitrary positions ``x``."""
        return self.propagator.contributions(x, self.time)

    def dominant(self, rel=1e-3):
        """Branches whose norm exceeds ``rel`` times the largest branch norm."""
        norms = np.array([b.norm(self.grid.dx) for b in self.branches])
        if norms.size == 0:
            return []
        return [b for b, n in zip(self.branches, norms) if n > rel * norms.max()]

    def table(self):
        """Rows (k, x, x0, p0, S, mu, reflections, Re w, Im w) for CSV dumps."""
        rows = []
        for b in self.branches:
            k = np.full(b.x.size, b.index)
            rows.append(np.column_stack([k, b.x, b.origin, b.p0, b.action,
                                         np.full(b.x.size, b.maslov),
                                         np.full(b.x.size, b.reflections),
                                         b.weight.real, b.weight.imag]))
        return np.vstack(rows) if rows else np.zeros((0, 9))


def _stitch(contrib: Contributions, grid: Grid, jump_factor=10.0):
    """Group contributions on the grid into global branches.

    Branch identity: (sheet, run, reflections, maslov), then the rank of the
    initial point among same-label contributions at a grid point.  Jumps of
    p0 between neighbouring grid points larger than ``jump_factor`` times the
    typical step are reported as stitching ambiguities.
    """
    ambiguities = []
    if contrib.point.size == 0:
        return [], ambiguities
    labels = np.stack([contrib.sheet, contrib.run, contrib.reflections, contrib.maslov], axis=1)
    order = np.lexsort((contrib.x0, contrib.point, *labels.T[::-1]))
    c = contrib.take(order)
    labels = labels[order]
    # rank among identical labels at the same grid point
    same = np.all(labels[1:] == labels[:-1], axis=1) & (c.point[1:] == c.point[:-1])
    rank = np.zeros(c.point.size, dtype=int)
    for i in np.flatnonzero(same) + 1:
        rank[i] = rank[i - 1] + 1
    keys = np.column_stack([labels, rank])
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    branches = []
    for k, key in enumerate(uniq):
        sel = np.flatnonzero(inverse == k)
        sel = sel[np.argsort(c.point[sel])]
        pts = c.point[sel]
        if rank[sel].max() > 0:
            ambiguities.extend((int(p), "repeated label") for p in pts)
        dp = np.abs(np.diff(c.p0[sel]))
        tol = jump_factor * (np.median(dp) if dp.size else 0.0) + 1e-6 * (1 + np.abs(c.p0[sel]).max())
        jumps = np.flatnonzero((np.diff(pts) == 1) & (dp > tol))
        ambiguities.extend((int(pts[j + 1]), "p0 jump") for j in jumps)
        branches.append(Branch(
            index=k, sheet=int(key[0]), run=int(key[1]), reflections=int(key[2]),
            maslov=int(key[3]), grid_index=pts, x=grid.x[pts], origin=c.x0[sel], p0=c.p0[sel],
            action=c.action[sel], weight=c.weight[sel], values=c.value[sel]))
    return branches, ambiguities


def branch_decompose(psi0: Wavefunction, model: PotentialModel, duration,
                     config: BVPConfig | None = None, components=None,
                     propagator: SheetPropagator | None = None) -> SemiclassicalState:
    """Branch fields psi^k(x, duration) on the grid of ``psi0``.

    ``components`` splits psi0 into sheets (their sum should be psi0); by
    default psi0 itself is the only sheet.  A prepared ``propagator`` can be
    passed to reuse its sheet data across output times.
    """
    cfg = config or BVPConfig()
    if propagator is None:
        propagator = SheetPropagator(components or [psi0], model, cfg)
    grid = psi0.grid
    xq = grid.x
    contrib = propagator.contributions(xq, duration)
    if grid.boundary == "dirichlet":
        contrib = contrib.take(np.flatnonzero(contrib.point != 0))
    masked = np.zeros(grid.n, dtype=bool)
    masked[contrib.point[contrib.caustic]] = True
    contrib = contrib.take(np.flatnonzero(~contrib.caustic))
    branches, ambiguities = _stitch(contrib, grid)
    return SemiclassicalState(branches, grid, psi0.time + duration, model.mass, model.hbar,
                              propagator, masked, ambiguities)


def branch_frames(psi0: Wavefunction, model: PotentialModel, times, config=None,
                  components=None):
    """Branch decompositions at several times sharing one sheet propagator."""
    propagator = SheetPropagator(components or [psi0], model, config)
    return [branch_decompose(psi0, model, t, config, propagator=propagator) for t in times]


def sign_split(psi: Wavefunction):
    """Split psi into its positive- and negative-momentum parts (two sheets)."""
    if psi.grid.boundary == "periodic":
        spec = sfft.fft(psi.values)
        k = psi.grid.k
        pos = sfft.ifft(np.where(k > 0, spec, np.where(k == 0, 0.5 * spec, 0)))
    else:
        # odd extension to a periodic grid of length 2L
        ext = np.concatenate([psi.values, [0.0], -psi.values[:0:-1]])
        spec = sfft.fft(ext)
        k = sfft.fftfreq(ext.size)
        pos = sfft.ifft(np.where(k > 0, spec, np.where(k == 0, 0.5 * spec, 0)))[:psi.grid.n]
    return [psi.with_values(pos), psi.with_values(psi.values - pos)]
