"""Branch-following solitons on top of the linear fields w^k = c psi^k.

A soliton is kinematic: a fixed even profile of width ``sigma`` whose centre
rides the classical trajectory of one branch k_b and whose peak is slaved to
the full interfering field at its own position,

    a(t) = a(0) |w(x_b, t)| / |w^{k_b}(x_b, t)|.

Nothing here derives the Born rule; :func:`soliton_ensemble_statistics`
measures how close the detection statistics come to |psi|^2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classical import PhasePoint, default_dt, flow, integrate_hamilton
from .exactqm import EPS_NODE, Wavefunction, autocorrelation
from .pilotwave import binned_distance, sample_initial
from .semiclassical import SemiclassicalState, recurrence_strength

logger = logging.getLogger(__name__)


class DeadZoneError(ValueError):
    """No branch carries amplitude at the requested starting point."""


class CarrierNodeError(ArithmeticError):
    """The carrier branch vanishes at the soliton position."""


class BranchTerminated(RuntimeError):
    """The carrier branch was lost (caustic) before the requested time."""


class NoCommonPeriodError(ValueError):
    """The orbits handed to the recurrence check do not share a period."""


@dataclass
class WField:
    """Linear field w = c psi_sc with its branch components w^k = c psi^k."""

    c: complex
    state: SemiclassicalState

    @property
    def time(self):
        return self.state.time

    @property
    def grid(self):
        return self.state.grid

    @property
    def components(self):
        n = self.grid.n
        return [self.c * b.field(n) for b in self.state.branches]

    @property
    def total(self):
        return self.c * self.state.field()

    def at(self, x):
        """Branch contributions (scaled by c) at arbitrary positions."""
        con = self.state.contributions(x)
        con.value = self.c * con.value
        con.weight = self.c * con.weight
        return con


def build_wfields(state: SemiclassicalState, c=1.0) -> WField:
    if not state.branches:
        raise ValueError("state has no branches")
    return WField(complex(c), state)


def gaussian_profile(s):
    return np.exp(-0.5 * s**2)


@dataclass
class SolitonBump:
    """Kinematic bump u0 riding branch ``branch_index``.

    ``sheet`` and ``origin`` identify the carrier: the classical path
    launched from ``origin`` on that sheet of the initial state.
    """

    branch_index: int
    sheet: int
    origin: float
    momentum: float
    center: float
    peak: float
    sigma: float
    time: float = 0.0
    profile: object = field(default=gaussian_profile, repr=False)

    def field(self, x):
        return self.peak * self.profile((np.asarray(x) - self.center) / self.sigma)

    def components(self, x, n_branches):
        """u0^k for every branch: zero except on the carrier (selection rule)."""
        out = [np.zeros(np.shape(x)) for _ in range(n_branches)]
        out[self.branch_index] = self.field(x)
        return out


def _branch_of(state: SemiclassicalState, sheet, x0_root, point_x):
    """Index of the branch holding the contribution (sheet, x0_root) at point_x."""
    j = int(np.argmin(np.abs(state.grid.x - point_x)))
    best, dist = None, np.inf
    for b in state.branches:
        if b.sheet != sheet:
            continue
        hit = np.flatnonzero(b.grid_index == j)
        if hit.size:
            d = abs(b.origin[hit[0]] - x0_root)
            if d < dist:
                best, dist = b.index, d
    return best if best is not None else -1


def attach_soliton(wfield: WField, x0, seed=None, sigma=None, rng=None) -> SolitonBump:
    """Attach a bump at ``x0`` to one of the branches passing there.

    When several branches start at ``x0`` the carrier is drawn with
    probability proportional to |w^k(x0, 0)|^2.
    """
    con = wfield.at([x0])
    amp = np.abs(con.value)
    ok = amp > EPS_NODE * np.abs(wfield.total).max()
    if not ok.any():
        raise DeadZoneError(f"no branch has support at x0 = {x0}")
    idx = np.flatnonzero(ok)
    rng = rng if rng is not None else np.random.default_rng(seed)
    prob = amp[idx] ** 2 / np.sum(amp[idx] ** 2)
    pick = idx[rng.choice(idx.size, p=prob)] if idx.size > 1 else idx[0]
    k_b = _branch_of(wfield.state, int(con.sheet[pick]), float(con.x0[pick]), x0)
    sigma = sigma if sigma is not None else 4 * wfield.grid.dx
    return SolitonBump(k_b, int(con.sheet[pick]), float(con.x0[pick]), float(con.p0[pick]),
                       float(x0), float(abs(con.value.sum())), sigma, wfield.time)


def _carrier_values(wfield: WField, x, sheet, origin, tol):
    """Total field and carrier field at positions x for carriers (sheet, origin)."""
    x = np.atleast_1d(x)
    sheet = np.broadcast_to(sheet, x.shape)
    origin = np.broadcast_to(origin, x.shape)
    con = wfield.at(x)
    n = x.size
    total = np.bincount(con.point, con.value.real, n) + 1j * np.bincount(con.point, con.value.imag, n)
    match = (con.sheet == sheet[con.point]) & (np.abs(con.x0 - origin[con.point]) < tol) & ~con.caustic
    carrier = np.zeros(n, dtype=complex)
    found = np.zeros(n, dtype=bool)
    carrier[con.point[match]] = con.value[match]
    found[con.point[match]] = True
    return total, carrier, found


def _match_tol(grid):
    return 1e-6 * (grid.x_max - grid.x_min)


def couple_amplitude(bump: SolitonBump, wfield: WField, t=None, a0=None):
    """Peak a(t) = a(0) |w(x_b)| / |w^{k_b}(x_b)| at the frame time.

    ``a0`` defaults to the bump's current peak taken as the initial one.
    """
    if t is not None and abs(t - wfield.time) > 1e-12 * max(1.0, abs(t)):
        raise ValueError("wfield frame does not match the requested time")
    total, carrier, found = _carrier_values(wfield, [bump.center], bump.sheet, bump.origin,
                                            _match_tol(wfield.grid))
    if not found[0]:
        raise BranchTerminated("carrier branch not found at the soliton position")
    floor = EPS_NODE * np.abs(wfield.total).max()
    if abs(carrier[0]) < floor:
        raise CarrierNodeError(f"carrier amplitude {abs(carrier[0]):.2e} below node threshold")
    a0 = bump.peak if a0 is None else a0
    return float(a0 * abs(total[0]) / abs(carrier[0]))


@dataclass
class SolitonHistory:
    """Time series (t, x_b, a) of one soliton; ``reason`` is set if truncated."""

    t: np.ndarray
    x: np.ndarray
    a: np.ndarray
    branch_index: int
    reason: str | None = None
    trajectory: object = field(default=None, repr=False)

    @property
    def truncated(self):
        return self.reason is not None

    def path_length(self):
        if self.trajectory is not None:
            return self.trajectory.path_length()
        return float(np.sum(np.abs(np.diff(self.x))))

    def rows(self, ident=0):
        """Rows (id, t, x_b, a, k_b) for CSV dumps."""
        n = self.t.size
        return np.column_stack([np.full(n, ident), self.t, self.x, self.a,
                                np.full(n, self.branch_index)])


def evolve_soliton(bump: SolitonBump, frames, duration=None, dt=None, order=4) -> SolitonHistory:
    """Move the bump along its carrier's classical path through the frames.

    The centre follows Hamilton's equations from (origin, p0 of the sheet);
    at each frame time the peak is recoupled to the interfering field.
    """
    frames = [f for f in frames if f.time >= bump.time - 1e-12]
    if not frames:
        raise ValueError("no frames at or after the bump time")
    model = frames[0].state.propagator.model
    t_end = frames[-1].time if duration is None else bump.time + duration
    frames = [f for f in frames if f.time <= t_end + 1e-12]
    times = np.array([f.time for f in frames])
    span = t_end - bump.time
    step = dt if dt is not None else default_dt(model, max(span, 1e-300))
    traj = None
    if span > 0:
        traj = integrate_hamilton(model, PhasePoint(bump.origin, bump.momentum), span, step, order,
                                  energy_tol=None)
    x = np.empty(times.size)
    for i, t in enumerate(times):
        x[i] = flow(model, bump.origin, bump.momentum, t - bump.time, step, order,
                    energy_tol=None).x if t > bump.time else bump.center
    a = np.full(times.size, np.nan)
    reason = None
    a0 = bump.peak
    for i, f in enumerate(frames):
        moved = SolitonBump(bump.branch_index, bump.sheet, bump.origin, bump.momentum,
                            float(x[i]), a0, bump.sigma, f.time, bump.profile)
        try:
            a[i] = couple_amplitude(moved, f, a0=a0)
        except (BranchTerminated, CarrierNodeError) as exc:
            if isinstance(exc, BranchTerminated):
                reason = f"branch terminated at t = {f.time}: {exc}"
                times, x, a = times[:i], x[:i], a[:i]
                break
            a[i] = 0.0
    return SolitonHistory(times, x, a, bump.branch_index, reason, traj)


@dataclass
class SolitonStatistics:
    tv_weighted: float
    tv_unweighted: float
    edges: np.ndarray
    histogram: np.ndarray
    branch_counts: dict
    errors: dict
    seed: int | None
    n: int

    def to_dict(self):
        return {
            "tv_weighted": self.tv_weighted,
            "tv_unweighted": self.tv_unweighted,
            "histogram": self.histogram.tolist(),
            "edges": self.edges.tolist(),
            "branch_counts": {str(k): int(v) for k, v in self.branch_counts.items()},
            "errors": dict(self.errors),
            "seed": self.seed,
            "n": self.n,
        }


def soliton_ensemble_statistics(frames, n, seed, detection_time, bins=50, exact=None,
                                psi0=None, order=4):
    """Detection statistics of ``n`` branch-following solitons at ``detection_time``.

    Parameters
    ----------
    frames : list of WField
        Must contain the initial frame and the detection frame.
    exact : Wavefunction
        |psi(x, t)|^2 reference at the detection time.
    psi0 : Wavefunction, optional
        Initial density to sample from; defaults to the t = 0 wfield total.

    Two conventions are reported: ``tv_weighted`` weights each detection by
    a(t)^2 (a bump that interferes away is not detected), ``tv_unweighted``
    counts every soliton once.
    """
    if n < 1000:
        raise ValueError("ensemble statistics need n >= 1000")
    if exact is None:
        raise ValueError("an exact reference frame is required")
    w0 = frames[0]
    wt = min(frames, key=lambda f: abs(f.time - detection_time))
    if abs(wt.time - detection_time) > 1e-9 * max(1.0, detection_time):
        raise ValueError(f"no wfield frame at t = {detection_time}")
    model = w0.state.propagator.model
    grid = w0.grid
    if psi0 is None:
        psi0 = Wavefunction(grid, w0.total / w0.c, w0.time, w0.state.mass, w0.state.hbar)
    ss_sample, ss_branch = np.random.SeedSequence(seed).spawn(2)
    x0 = sample_initial(psi0, n, np.random.default_rng(ss_sample))
    rng = np.random.default_rng(ss_branch)
    errors = {"dead_zone": 0, "terminated": 0, "carrier_node": 0}
    tol = _match_tol(grid)

    # attachment: pick a sheet contribution at every x0
    con = w0.at(x0)
    amp2 = np.abs(con.value) ** 2
    live = amp2 > (EPS_NODE * np.abs(w0.total).max()) ** 2
    con, amp2 = con.take(np.flatnonzero(live)), amp2[live]
    order_ = np.argsort(con.point, kind="stable")
    con, amp2 = con.take(order_), amp2[order_]
    starts = np.searchsorted(con.point, np.arange(n))
    ends = np.searchsorted(con.point, np.arange(n), "right")
    has = ends > starts
    errors["dead_zone"] = int((~has).sum())
    u = rng.random(n)
    pick = np.full(n, -1)
    cum = np.cumsum(amp2)
    base = np.where(starts > 0, cum[np.maximum(starts - 1, 0)], 0.0)
    tot = np.where(has, cum[np.maximum(ends - 1, 0)] - base, 1.0)
    target = base + u * tot
    pick[has] = np.minimum(np.searchsorted(cum, target[has], "right"), ends[has] - 1)
    ok = has.copy()
    sheet = np.where(ok, con.sheet[np.maximum(pick, 0)], -1)
    origin = np.where(ok, con.x0[np.maximum(pick, 0)], np.nan)
    p0 = np.where(ok, con.p0[np.maximum(pick, 0)], np.nan)
    a0 = np.where(ok, np.sqrt(np.bincount(con.point, con.value.real, n) ** 2
                              + np.bincount(con.point, con.value.imag, n) ** 2), 0.0)
    counts = {}
    for s in np.unique(sheet[ok]):
        counts[int(s)] = int(np.sum(sheet[ok] == s))

    # transport and recoupling
    span = wt.time - w0.time
    idx = np.flatnonzero(ok)
    if span > 0:
        dt = default_dt(model, span)
        xb = flow(model, origin[idx], p0[idx], span, dt, order, energy_tol=None).x
    else:
        xb = x0[idx]
    total, carrier, found = _carrier_values(wt, xb, sheet[idx], origin[idx], tol)
    errors["terminated"] = int((~found).sum())
    floor = EPS_NODE * np.abs(wt.total).max()
    node = found & (np.abs(carrier) < floor)
    errors["carrier_node"] = int(node.sum())
    good = found & ~node
    a = np.zeros(idx.size)
    a[good] = a0[idx][good] * np.abs(total[good]) / np.abs(carrier[good])
    w = (a / np.where(a0[idx] > 0, a0[idx], 1.0)) ** 2
    pos = xb[found]
    tv_w = binned_distance(pos, exact, bins, weights=w[found])
    tv_u = binned_distance(pos, exact, bins)
    hist, edges = np.histogram(pos, bins, weights=w[found])
    return SolitonStatistics(tv_w, tv_u, edges, hist, counts, errors,
                             None if seed is None else int(seed), n)


@dataclass
class RecurrenceCheck:
    predicted: float
    measured: float
    relative_error: float
    delta_action: float


def recurrence_consistency(frames, orbits, weights=(1.0, 1.0), hbar=None, rtol_period=1e-6):
    """Two-orbit recurrence formula against the exact autocorrelation.

    ``frames`` are exact frames starting with psi0 and containing the common
    period T; psi0 must be launched along the two orbits with amplitudes
    sqrt(A_k) on normalized packets.  The effective orbit amplitudes are
    A_k times the linearised return modulus, and the effective actions add
    hbar times the return phase to the principal action.
    """
    if len(orbits) != 2:
        raise ValueError("need exactly two orbits")
    o1, o2 = orbits
    T = o1.period
    if abs(o2.period - T) > rtol_period * T:
        raise NoCommonPeriodError(f"periods {o1.period} and {o2.period} differ")
    psi0 = frames[0]
    hbar = hbar if hbar is not None else psi0.hbar
    frame = min(frames, key=lambda f: abs(f.time - psi0.time - T))
    if abs(frame.time - psi0.time - T) > rtol_period * T:
        raise NoCommonPeriodError(f"no frame at the common period {T}")
    A1, A2 = weights
    S = []
    for o in orbits:
        principal = o.trajectory.action
        S.append(principal + hbar * o.return_phase)
    a1, a2 = A1 * o1.amplitude, A2 * o2.amplitude
    predicted = recurrence_strength(a1, S[0], a2, S[1], hbar) / (A1 + A2) ** 2
    measured = autocorrelation(psi0, frame) / psi0.norm() ** 4
    rel = abs(measured - predicted) / predicted if predicted > 0 else np.inf
    return RecurrenceCheck(predicted, measured, rel, S[0] - S[1])
