"""Classical trajectories, action, Jacobi fields and two-point boundary problems.

The integrator is a symmetric composition of kick-drift-kick leapfrog steps
(orders 2, 4 and 6).  Alongside (x, p) it carries

* the Lagrangian action  S = int (p^2/2m - V) dt, accumulated substep by
  substep so that S is the exact generating function of the discrete map;
* the 2x2 monodromy matrix d(x, p)/d(x0, p0) from the tangent equations;
* a count of zeros of the Jacobi field (conjugate points).

Hard walls of the infinite well are handled by folding the free drift, which
is exact for any step size.  The unfolded coordinate is kept as well; the
image method and the branch construction work in that coordinate.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .potentials import PotentialModel

logger = logging.getLogger(__name__)

# caustic threshold relative to the free-flight Jacobi field t/m
EPS_CAUSTIC = 1e-6
EPS_BVP = 1e-10
ENERGY_TOL = 1e-6


class IntegratorError(RuntimeError):
    """Energy drift above tolerance or a trajectory left its domain."""


class CausticError(ValueError):
    """The Jacobi field vanishes (conjugate point); Van Vleck amplitude diverges."""


class CausticDegeneracyError(CausticError):
    """A whole family of initial momenta reaches the same endpoint."""


@dataclass(frozen=True)
class PhasePoint:
    x: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.p)):
            raise ValueError("phase point must be finite")


def composition_weights(order):
    """Leapfrog substep weights of a symmetric triple-jump composition."""
    if order == 2:
        return [1.0]
    if order not in (4, 6):
        raise ValueError("order must be 2, 4 or 6")
    w = [1.0]
    for k in range(1, order // 2):
        g1 = 1.0 / (2.0 - 2.0 ** (1.0 / (2 * k + 1)))
        g0 = 1.0 - 2.0 * g1
        w = [g1 * c for c in w] + [g0 * c for c in w] + [g1 * c for c in w]
    return w


def default_dt(model: PotentialModel, duration):
    """Step size used when the caller does not give one."""
    if model.kind in ("free", "well"):
        # free drift (folded at walls) is exact for any step
        return duration
    if model.kind == "harmonic":
        return min(duration, 0.02 / model.omega)
    return min(duration, 1e-3)


@dataclass
class FlowState:
    """Vectorised state of a bundle of trajectories.

    ``y`` is the unfolded position (equal to ``x`` away from walls).  The
    monodromy entries are stored unfolded; the physical matrix is
    ``sign * M``.  ``tx, tp`` give the initial tangent whose position
    component is watched for conjugate points (``(0, 1)`` for the usual
    Jacobi field dx/dp0).
    """

    t: float
    x: np.ndarray
    p: np.ndarray
    y: np.ndarray
    S: np.ndarray
    mxx: np.ndarray
    mxp: np.ndarray
    mpx: np.ndarray
    mpp: np.ndarray
    sign: np.ndarray
    mu: np.ndarray
    refl: np.ndarray
    tx: np.ndarray
    tp: np.ndarray
    energy0: np.ndarray
    jx_prev: np.ndarray

    @classmethod
    def start(cls, model, x0, p0, tangent=(0.0, 1.0)):
        x0, p0 = np.broadcast_arrays(np.asarray(x0, float), np.asarray(p0, float))
        x0 = np.array(x0, dtype=float)
        p0 = np.array(p0, dtype=float)
        if model.is_well and np.any((x0 <= 0) | (x0 >= model.length)):
            raise IntegratorError("start point outside the well")
        shape = x0.shape
        tx, tp = np.broadcast_arrays(np.asarray(tangent[0], float), np.asarray(tangent[1], float))
        tx = np.broadcast_to(tx, shape).astype(float)
        tp = np.broadcast_to(tp, shape).astype(float)
        return cls(
            t=0.0, x=x0, p=p0, y=x0.copy(), S=np.zeros(shape),
            mxx=np.ones(shape), mxp=np.zeros(shape), mpx=np.zeros(shape), mpp=np.ones(shape),
            sign=np.ones(shape), mu=np.zeros(shape, dtype=int), refl=np.zeros(shape, dtype=int),
            tx=tx, tp=tp, energy0=np.asarray(model.energy(x0, p0), float), jx_prev=tx.copy(),
        )

    @property
    def jacobi(self):
        """Physical dx/dp0."""
        return self.sign * self.mxp

    @property
    def jacobi_p(self):
        """Physical dp/dp0."""
        return self.sign * self.mpp

    @property
    def tangent_x(self):
        """Unfolded position component of the watched tangent."""
        return self.tx * self.mxx + self.tp * self.mxp

    def energy(self, model):
        return np.asarray(model.energy(self.x, self.p), float)

    def take(self, idx):
        """Sub-bundle selected by an index or mask."""
        vals = {}
        for name in _ARRAY_FIELDS:
            vals[name] = getattr(self, name)[idx]
        return FlowState(t=self.t, **vals)

    def copy(self):
        return FlowState(t=self.t, **{k: np.copy(getattr(self, k)) for k in _ARRAY_FIELDS})


_ARRAY_FIELDS = ("x", "p", "y", "S", "mxx", "mxp", "mpx", "mpp", "sign", "mu", "refl",
                 "tx", "tp", "energy0", "jx_prev")


def _kick(model, s, tau):
    if not model.is_smooth or model.kind == "free":
        return
    s.S -= tau * model.evaluate(s.x)
    s.p = s.p - tau * model.gradient(s.x)
    k = tau * model.curvature(s.x)
    s.mpx = s.mpx - k * s.mxx
    s.mpp = s.mpp - k * s.mxp


def _drift(model, s, tau, events=None):
    m = model.mass
    s.S += tau * s.p**2 / (2 * m)
    s.mxx = s.mxx + tau * s.mpx / m
    s.mxp = s.mxp + tau * s.mpp / m
    if not model.is_well:
        s.x = s.x + tau * s.p / m
        s.y = s.x
        return
    L = model.length
    # unfolded momentum never flips: p_unfolded = sign * p
    s.y = s.y + tau * s.sign * s.p / m
    z = s.x + tau * s.p / m
    k = np.floor(z / L).astype(int)
    if events is not None and np.any(k != 0):
        # scalar recording path: locate each wall hit inside the substep
        x_start, p_start = float(s.x), float(s.p)
        lo, hi = sorted((x_start, float(z)))
        walls = [j * L for j in range(int(math.floor(lo / L)) + 1, int(math.ceil(hi / L)))]
        walls.sort(key=lambda w: abs(w - x_start))
        for n_hit, w in enumerate(walls, start=1):
            dt_hit = (w - x_start) * m / p_start
            pos = 0.0 if round(w / L) % 2 == 0 else L
            events.append((dt_hit, pos, p_start * (-1) ** n_hit, n_hit))
    odd = (k % 2) != 0
    s.x = np.where(odd, (k + 1) * L - z, z - k * L)
    flip = np.where(odd, -1.0, 1.0)
    s.p = s.p * flip
    s.sign = s.sign * flip
    s.refl = s.refl + np.abs(k)


def advance(model: PotentialModel, state: FlowState, duration, dt=None, order=4,
            energy_tol=ENERGY_TOL, record=None):
    """Integrate ``state`` forward (or backward) by ``duration``.

    The step is adjusted to ``duration / ceil(|duration| / dt)``.  When
    ``record`` is a list, per-step samples (and wall hits) are appended to
    it as ``(t, x, p, S, J, Jp, mu, refl, y)`` tuples; this is meant for a
    single trajectory.
    """
    if duration == 0:
        return state
    if dt is None:
        dt = default_dt(model, abs(duration))
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = max(1, int(math.ceil(abs(duration) / dt - 1e-9)))
    h = duration / n
    if model.kind in ("free", "well"):
        weights = [1.0]  # V = 0: a single drift per step is exact
    else:
        weights = composition_weights(order)
    for _ in range(n):
        events = [] if record is not None else None
        t_step = state.t
        mu_step, refl_step = state.mu, state.refl
        for w in weights:
            tau = w * h
            _kick(model, state, tau / 2)
            _drift(model, state, tau, events)
            _kick(model, state, tau / 2)
        # conjugate points are counted at step boundaries only: negative
        # substeps of the composition could otherwise count a zero twice
        jx_new = state.tangent_x
        state.mu = state.mu + ((state.jx_prev * jx_new) < 0).astype(int)
        state.jx_prev = jx_new
        state.t = t_step + h
        if record is not None:
            for dt_hit, pos, p_after, n_hit in events:
                record.append((t_step + dt_hit, pos, p_after, np.nan, np.nan, np.nan,
                               int(mu_step), int(refl_step) + n_hit, np.nan))
            record.append((state.t, float(state.x), float(state.p), float(state.S),
                           float(state.jacobi), float(state.jacobi_p), int(state.mu),
                           int(state.refl), float(state.y)))
        if not np.all(np.isfinite(state.x)):
            raise IntegratorError("trajectory left the finite domain")
    if energy_tol is not None:
        e = state.energy(model)
        # relative to |E0|, or to the kinetic energy when E0 is near zero
        kin = state.p**2 / (2 * model.mass)
        scale = np.maximum(np.abs(state.energy0), kin)
        drift = np.abs(e - state.energy0) / np.where(scale > 0, scale, 1.0)
        if np.any(drift > energy_tol):
            raise IntegratorError(
                f"energy drift {float(np.max(drift)):.3e} exceeds {energy_tol:.1e}; reduce dt")
    return state


def flow(model, x0, p0, duration, dt=None, order=4, tangent=(0.0, 1.0), energy_tol=ENERGY_TOL):
    """Endpoint state of a bundle of trajectories started at (x0, p0)."""
    state = FlowState.start(model, x0, p0, tangent)
    return advance(model, state, duration, dt, order, energy_tol)


@dataclass
class ClassicalTrajectory:
    """A sampled phase-space path with action and Jacobi field.

    Arrays are aligned on ``t``.  Wall hits appear as extra samples whose
    action and Jacobi entries are interpolated from their neighbours.
    """

    model: PotentialModel
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    S: np.ndarray
    J: np.ndarray
    Jp: np.ndarray
    mu: np.ndarray
    reflections: np.ndarray
    y: np.ndarray
    monodromy: np.ndarray
    monodromy_unfolded: np.ndarray = field(repr=False, default=None)
    wall_times: tuple = ()

    @property
    def start(self):
        return PhasePoint(float(self.x[0]), float(self.p[0]))

    @property
    def end(self):
        return PhasePoint(float(self.x[-1]), float(self.p[-1]))

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    @property
    def action(self):
        return float(self.S[-1])

    @property
    def maslov_index(self):
        return int(self.mu[-1])

    @property
    def reflection_count(self):
        return int(self.reflections[-1])

    @property
    def energy(self):
        return float(self.model.energy(self.x[0], self.p[0]))

    @property
    def samples(self):
        return np.column_stack([self.t, self.x, self.p])

    def path_length(self):
        return float(np.sum(np.abs(np.diff(self.x))))

    def position_at(self, t):
        """Piecewise-linear position (exact between wall hits for free motion)."""
        return np.interp(t, self.t, self.x)

    def jacobi_at(self, t):
        """Jacobi field at time ``t`` by cubic Hermite interpolation (dJ/dt = Jp/m)."""
        t = float(t)
        tt, J, Jp = _smooth_samples(self)
        if t <= tt[0]:
            return float(J[0])
        if t >= tt[-1]:
            return float(J[-1])
        i = int(np.searchsorted(tt, t)) - 1
        h = tt[i + 1] - tt[i]
        s = (t - tt[i]) / h
        d0 = Jp[i] / self.model.mass * h
        d1 = Jp[i + 1] / self.model.mass * h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return float(h00 * J[i] + h10 * d0 + h01 * J[i + 1] + h11 * d1)

    def to_rows(self):
        """Rows (t, x, p, S, J, mu) for CSV dumps."""
        return np.column_stack([self.t, self.x, self.p, self.S, self.J, self.mu])


def _smooth_samples(traj):
    keep = np.isfinite(traj.J)
    return traj.t[keep], traj.J[keep], traj.Jp[keep]


def integrate_hamilton(model: PotentialModel, start: PhasePoint, duration, dt,
                       order=4, energy_tol=ENERGY_TOL) -> ClassicalTrajectory:
    """Integrate Hamilton's equations from ``start`` and sample every step."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not dt > 0:
        raise ValueError("dt must be positive")
    state = FlowState.start(model, start.x, start.p)
    record = [(0.0, float(start.x), float(start.p), 0.0, 0.0, 1.0, 0, 0, float(start.x))]
    advance(model, state, duration, dt, order, energy_tol, record=record)
    rows = np.array(record, dtype=float)
    t, x, p, S, J, Jp, mu, refl, y = rows.T
    walls = tuple(t[np.isnan(S)])
    if walls:
        good = ~np.isnan(S)
        # free motion between hits: action and unfolded position are linear in t
        for arr in (S, y):
            arr[~good] = np.interp(t[~good], t[good], arr[good])
        # J flips sign at a wall and stays NaN on the hit samples
    mono = np.array([[state.mxx, state.mxp], [state.mpx, state.mpp]], dtype=float).reshape(2, 2)
    return ClassicalTrajectory(
        model=model, t=t, x=x, p=p, S=S, J=J, Jp=Jp, mu=mu.astype(int),
        reflections=refl.astype(int), y=y, monodromy=float(state.sign) * mono,
        monodromy_unfolded=mono, wall_times=walls,
    )


def jacobi_determinant_factor(traj: ClassicalTrajectory, t=None, eps=EPS_CAUSTIC):
    """Van Vleck amplitude factor |d2S/dx dx0|^(1/2) = |J(t)|^(-1/2).

    ``eps`` is relative to the free-flight value t/m.
    """
    t_eval = traj.t[-1] if t is None else t
    J = traj.J[-1] if t is None else traj.jacobi_at(t)
    if abs(J) < eps * (t_eval - traj.t[0]) / traj.model.mass:
        raise CausticError(f"Jacobi field {J:.3e} vanishes (conjugate point)")
    return abs(J) ** -0.5


def maslov_count(traj: ClassicalTrajectory):
    """(number of conjugate points on (0, t], number of wall reflections)."""
    return traj.maslov_index, traj.reflection_count


def maslov_phase(mu, reflections):
    """Phase -mu*pi/2 - reflections*pi attached to a path."""
    return -0.5 * np.pi * np.asarray(mu) - np.pi * np.asarray(reflections)


# ---------------------------------------------------------------------------
# root finding for two-point boundary problems

def solve_brackets(evaluate, lo, hi, flo, fhi, tol=EPS_BVP, maxiter=200):
    """Vectorised safeguarded Newton/bisection on sign-changing brackets.

    ``evaluate(u, idx)`` returns ``(f, dfdu)`` at parameters ``u`` for the
    bracket indices ``idx``.  Newton steps are taken when they stay inside
    the bracket, bisection otherwise.  Returns ``(u, f, converged)``.
    """
    lo = np.array(lo, float)
    hi = np.array(hi, float)
    flo = np.array(flo, float)
    fhi = np.array(fhi, float)
    n = lo.size
    u = np.where(flo == 0, lo, np.where(fhi == 0, hi, 0.0))
    denom = fhi - flo
    safe = np.where(denom != 0, denom, 1.0)
    guess = lo - flo * (hi - lo) / safe
    bad = (denom == 0) | ~np.isfinite(guess) | (guess <= np.minimum(lo, hi)) | (guess >= np.maximum(lo, hi))
    u = np.where((flo == 0) | (fhi == 0), u, np.where(bad, 0.5 * (lo + hi), guess))
    f = np.full(n, np.nan)
    converged = np.zeros(n, dtype=bool)
    active = np.arange(n)
    for _ in range(maxiter):
        if active.size == 0:
            break
        fa, da = evaluate(u[active], active)
        f[active] = fa
        done = np.abs(fa) < tol
        converged[active[done]] = True
        keep = ~done
        active, fa, da = active[keep], fa[keep], da[keep]
        if active.size == 0:
            break
        same = np.sign(fa) == np.sign(flo[active])
        lo[active] = np.where(same, u[active], lo[active])
        flo[active] = np.where(same, fa, flo[active])
        hi[active] = np.where(same, hi[active], u[active])
        fhi[active] = np.where(same, fhi[active], fa)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = u[active] - fa / da
        a, b = np.minimum(lo[active], hi[active]), np.maximum(lo[active], hi[active])
        ok = np.isfinite(newton) & (newton > a) & (newton < b)
        u[active] = np.where(ok, newton, 0.5 * (a + b))
        # bracket collapsed to round-off: accept
        tiny = (b - a) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(a))
        if np.any(tiny):
            converged[active[tiny]] = True
            active = active[~tiny]
    return u, f, converged


def image_momenta(model: PotentialModel, x0, x_target, duration, p_window):
    """Initial momenta of all well paths x0 -> x_target in the momentum window.

    Unfolded endpoints are y = 2nL + x_target (|2n| reflections) and
    y = 2nL - x_target (|2n-1| reflections); p0 = m (y - x0) / t.
    """
    L, m = model.length, model.mass
    p_lo, p_hi = p_window
    y_lo = x0 + p_lo * duration / m
    y_hi = x0 + p_hi * duration / m
    n_lo = int(math.floor((y_lo - L) / (2 * L))) - 1
    n_hi = int(math.ceil((y_hi + L) / (2 * L))) + 1
    out = []
    for n in range(n_lo, n_hi + 1):
        for y, refl in ((2 * n * L + x_target, abs(2 * n)), (2 * n * L - x_target, abs(2 * n - 1))):
            p0 = m * (y - x0) / duration
            if p_lo <= p0 <= p_hi:
                out.append((p0, refl))
    out.sort()
    return out


def find_paths(model: PotentialModel, x0, x_target, duration, p_window=(-10.0, 10.0),
               p_samples=256, dt=None, order=4, method="auto", tol=EPS_BVP,
               record_dt=None):
    """All classical paths from ``x0`` to ``x_target`` in time ``duration``.

    ``method`` is ``"images"`` (infinite well only), ``"shooting"`` or
    ``"auto"`` (images for the well, shooting otherwise).  Shooting scans
    ``p_samples`` initial momenta over ``p_window``, brackets sign changes of
    x(duration) - x_target and refines each root to ``|residual| < tol``.

    Raises
    ------
    CausticDegeneracyError
        If every sampled momentum lands on the same endpoint (focal point).
    """
    if p_samples < 2:
        raise ValueError("p_samples must be >= 2")
    if not duration > 0:
        raise ValueError("duration must be positive")
    if dt is None:
        dt = default_dt(model, duration)
    record_dt = record_dt or (dt if model.is_smooth else duration / 64)
    if method == "auto":
        method = "images" if model.is_well else "shooting"
    if method == "images":
        if not model.is_well:
            raise ValueError("image method needs an infinite well")
        p0s = [p for p, _ in image_momenta(model, x0, x_target, duration, p_window)]
    elif method == "shooting":
        p0s = shoot(model, x0, x_target, duration, p_window, p_samples, dt, order, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return [integrate_hamilton(model, PhasePoint(x0, p), duration, min(record_dt, dt), order)
            for p in p0s]


def shoot(model, x0, x_target, duration, p_window, p_samples=256, dt=None, order=4,
          tol=EPS_BVP):
    """Initial momenta solving x(duration; x0, p0) = x_target by shooting."""
    if dt is None:
        dt = default_dt(model, duration)
    P = np.linspace(p_window[0], p_window[1], p_samples)
    end = flow(model, np.full_like(P, x0), P, duration, dt, order, energy_tol=None)
    X = end.x
    if np.max(np.abs(end.jacobi)) < EPS_CAUSTIC * duration / model.mass:
        raise CausticDegeneracyError(
            f"all initial momenta reach x = {X[0]:.6g}: caustic degeneracy at t = {duration}")
    f = X - x_target
    k = np.flatnonzero((f[:-1] == 0) | (f[:-1] * f[1:] < 0))
    if f[-1] == 0:
        k = np.append(k, p_samples - 1)
        # a root exactly at the last sample has no right neighbour
    lo = P[np.minimum(k, p_samples - 1)]
    hi = P[np.minimum(k + 1, p_samples - 1)]
    flo = f[np.minimum(k, p_samples - 1)]
    fhi = f[np.minimum(k + 1, p_samples - 1)]

    def evaluate(u, idx):
        s = flow(model, np.full_like(u, x0), u, duration, dt, order, energy_tol=None)
        return s.x - x_target, s.jacobi

    roots, resid, ok = solve_brackets(evaluate, lo, hi, flo, fhi, tol)
    for r, good in zip(roots, ok):
        if not good:
            logger.warning("bracket near p0=%.6g did not converge", r)
    roots = np.sort(roots[ok])
    if roots.size > 1:
        keep = np.concatenate([[True], np.diff(roots) > 1e-9 * max(1.0, np.ptp(P))])
        roots = roots[keep]
    return list(roots)


# ---------------------------------------------------------------------------
# periodic orbits

@dataclass
class PeriodicOrbit:
    trajectory: ClassicalTrajectory
    period: float
    amplitude: float
    action: float
    repetitions: int = 1
    return_phase: float = 0.0  # linearised-overlap phase minus wall phases

    def __iter__(self):
        return iter((self.trajectory, self.period, self.amplitude, self.action))


def _primitive_period(model, x0, p0, t_max, dt, order):
    if model.is_well:
        return 2 * model.length * model.mass / abs(p0)
    if p0 != 0:
        def g(s):
            return s.x - x0
        direction = np.sign(p0)
    else:
        def g(s):
            return s.p
        direction = -np.sign(model.gradient(x0))
        if direction == 0:
            return None
    state = FlowState.start(model, x0, p0)
    g_prev = g(state)
    left = False
    while state.t < t_max:
        prev = state.copy()
        advance(model, state, dt, dt, order, energy_tol=None)
        g_new = g(state)
        if abs(g_new) > 1e-12 or left:
            left = True
        crossing = (np.sign(g_new) == direction) and (np.sign(g_prev) != direction) and left \
            and state.t > dt * 1.5
        if crossing:
            lo, hi = 0.0, dt
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                trial = prev.copy()
                advance(model, trial, mid, mid / 4, order, energy_tol=None)
                if np.sign(g(trial)) == direction:
                    hi = mid
                else:
                    lo = mid
            return float(prev.t + 0.5 * (lo + hi))
        g_prev = g_new
    return None


def gaussian_return_factor(monodromy, gamma):
    """Linearised overlap z = (M11 + M22 + i(gamma M12 - M21/gamma)) / 2.

    A Gaussian with ``exp(-gamma (x-q)^2 / (2 hbar))`` returns with overlap
    ``z**-0.5`` (branch followed continuously along the orbit).
    """
    M = np.asarray(monodromy)
    return 0.5 * (M[..., 0, 0] + M[..., 1, 1] + 1j * (gamma * M[..., 0, 1] - M[..., 1, 0] / gamma))


def find_periodic_orbits(model: PotentialModel, x0, period_window, energies, width=None,
                         dt=None, order=4):
    """Closed orbits through ``x0`` at the given energies with period in the window.

    Repetitions of a primitive orbit are returned when their total period
    falls in the window.  ``amplitude`` is the modulus of the linearised
    return overlap of a Gaussian of position spread ``width`` launched on the
    orbit; ``action`` is the reduced action (closed loop integral of p dx).
    """
    t_lo, t_hi = period_window
    if not (t_hi > t_lo and t_hi > 0):
        raise ValueError("empty period window")
    if model.kind == "free":
        return []
    energies = np.atleast_1d(np.asarray(energies, float))
    m = model.mass
    if dt is None:
        dt = default_dt(model, t_hi) if model.is_smooth else t_hi / 256
    orbits = []
    for E in energies:
        if model.is_well:
            V0 = 0.0
        else:
            V0 = float(model.evaluate(x0))
        if E < V0:
            continue
        pmag = math.sqrt(2 * m * (E - V0))
        for p0 in ((pmag, -pmag) if pmag > 0 else (0.0,)):
            if model.is_well and p0 == 0:
                continue
            T = _primitive_period(model, x0, p0, t_hi + dt, dt, order)
            if T is None:
                continue
            reps = range(max(1, int(math.ceil(t_lo / T - 1e-12))), int(math.floor(t_hi / T + 1e-12)) + 1)
            for r in reps:
                total = r * T
                if not (t_lo <= total <= t_hi):
                    continue
                step = min(dt, total / 256) if model.is_well else min(dt, total / 64)
                traj = integrate_hamilton(model, PhasePoint(x0, p0), total, step, order,
                                          energy_tol=None)
                sig = width if width is not None else _default_width(model, T)
                gamma = model.hbar / (2 * sig**2)
                z = gaussian_return_factor(_unfolded_monodromy_path(model, traj), gamma)
                arg = np.unwrap(np.angle(z))
                amp = float(np.abs(z[-1]) ** -0.5)
                phase = -0.5 * float(arg[-1]) - np.pi * traj.reflection_count
                reduced = traj.action + E * total
                orbits.append(PeriodicOrbit(traj, total, amp, reduced, r, phase))
    return orbits


def _default_width(model, period):
    if model.kind == "harmonic":
        return math.sqrt(model.hbar / (2 * model.mass * model.omega))
    return math.sqrt(model.hbar * period / (2 * model.mass))


def _unfolded_monodromy_path(model, traj):
    """Unfolded monodromy along the sampled orbit, for phase unwrapping."""
    state = FlowState.start(model, traj.x[0], traj.p[0])
    mats = [np.eye(2)]
    good = ~np.isnan(traj.J) if model.is_well else np.ones(traj.t.size, bool)
    times = traj.t[good]
    for t0, t1 in zip(times[:-1], times[1:]):
        h = t1 - t0
        if h <= 0:
            continue
        step = h if model.is_well else min(h, default_dt(model, h))
        advance(model, state, h, step, 4, energy_tol=None)
        mats.append(np.array([[float(state.mxx), float(state.mxp)],
                              [float(state.mpx), float(state.mpp)]]))
    return np.array(mats)
