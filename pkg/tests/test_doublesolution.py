import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from semidyn.classical import find_periodic_orbits
from semidyn.doublesolution import (DeadZoneError, NoCommonPeriodError, SolitonBump,
                                    attach_soliton, build_wfields, couple_amplitude,
                                    evolve_soliton, recurrence_consistency,
                                    soliton_ensemble_statistics)
from semidyn.exactqm import (Grid, coherent_state, evolve_well, gaussian, propagate_exact,
                             well_eigenstate)
from semidyn.pilotwave import integrate_bohm, mismatch_report
from semidyn.potentials import PotentialModel
from semidyn.semiclassical import branch_decompose, branch_frames, sign_split

FREE = PotentialModel.free()
HO = PotentialModel.harmonic(1.0)
WELL = PotentialModel.infinite_well(1.0)
K5 = 5 * np.pi


@pytest.fixture(scope="module")
def free_w():
    g = Grid(-30, 30, 1024)
    psi = gaussian(g, FREE, 0.0, 2.0, 3.0)
    return psi, [build_wfields(s) for s in branch_frames(psi, FREE, [0.0, 0.5, 1.0])]


@pytest.fixture(scope="module")
def eigen_w():
    g = Grid(0, 1, 512, "dirichlet")
    psi = well_eigenstate(g, WELL, 5)
    T = 2 / K5
    states = branch_frames(psi, WELL, np.linspace(0, T, 11), components=sign_split(psi))
    return psi, [build_wfields(s, 2j) for s in states]


def test_wfield_identity_scaling(free_w):
    psi, W = free_w
    np.testing.assert_array_equal(W[1].total, W[1].state.field())
    # the initial frame drops only the support tails below the cutoff
    np.testing.assert_allclose(W[0].total, psi.values, atol=1e-10)
    np.testing.assert_allclose(W[0].components[0], W[0].total, atol=0)


def test_wfield_modulus_scaling(eigen_w):
    _, W = eigen_w
    w = W[4]
    sc = w.state.field()
    np.testing.assert_allclose(np.abs(w.total), 2 * np.abs(sc), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(sum(w.components), w.total, atol=1e-12)


def test_wfield_standing_wave(eigen_w):
    psi, W = eigen_w
    w = W[3]
    ref = evolve_well(psi, WELL, w.time)
    np.testing.assert_allclose(w.total, 2j * ref.values, atol=1e-8)


def test_build_rejects_empty_state():
    g = Grid(-20, 20, 256)
    psi = gaussian(g, FREE, 0.0, 0.0, 1.0)
    state = branch_decompose(psi, FREE, 1.0)
    state.branches = []
    with pytest.raises(ValueError):
        build_wfields(state)


def test_attach_single_branch(free_w):
    psi, W = free_w
    for x0 in (-2.0, 0.0, 3.3):
        b = attach_soliton(W[0], x0, seed=5)
        assert b.branch_index == 0
        assert b.center == x0
        assert b.momentum == pytest.approx(2.0, abs=1e-9)
        assert b.peak == pytest.approx(abs(oracles.free_gaussian(x0, 0.0, 0.0, 2.0, 3.0)),
                                       rel=1e-6)


def test_attach_two_sheets_frequency(eigen_w):
    _, W = eigen_w
    n = 400
    sheets = np.array([attach_soliton(W[0], 0.33, seed=s).sheet for s in range(n)])
    assert set(np.unique(sheets)) == {0, 1}
    assert abs(sheets.mean() - 0.5) <= 3 / np.sqrt(n)


def test_attach_dead_zone(free_w):
    _, W = free_w
    with pytest.raises(DeadZoneError):
        attach_soliton(W[0], 29.0, seed=0)


def test_selection_rule(free_w):
    _, W = free_w
    b = attach_soliton(W[0], 0.5, seed=0)
    x = W[0].grid.x
    comps = b.components(x, 3)
    assert all(np.all(c == 0) for k, c in enumerate(comps) if k != b.branch_index)
    np.testing.assert_array_equal(sum(comps), b.field(x))


def test_evolve_free_straight_line(free_w):
    _, W = free_w
    b = attach_soliton(W[0], 0.7, seed=0)
    h = evolve_soliton(b, W)
    np.testing.assert_allclose(h.x, 0.7 + 2 * h.t, atol=1e-12)
    # single branch: the coupling leaves the peak alone
    np.testing.assert_allclose(h.a, b.peak, rtol=1e-12)
    assert not h.truncated


def test_evolve_well_bounce_vs_static_bohm(eigen_w):
    psi, W = eigen_w
    b = attach_soliton(W[0], 0.33, seed=0)
    h = evolve_soliton(b, W)
    T = 2 / K5
    ref = [oracles_billiard(0.33, b.momentum, t) for t in h.t]
    np.testing.assert_allclose(h.x, ref, atol=1e-9)
    assert h.path_length() == pytest.approx(2.0, abs=1e-9)
    frames = propagate_exact(psi, WELL, T, T / 200)
    bohm = integrate_bohm(frames, 0.33)
    mm = mismatch_report(bohm, h.trajectory)
    assert mm.classical_path_length == pytest.approx(2.0, abs=1e-9)
    assert mm.bohm_path_length < 1e-9


def oracles_billiard(x0, p, t, L=1.0):
    y = (x0 + p * t) % (2 * L)
    return y if y <= L else 2 * L - y


def test_evolve_harmonic_sinusoid():
    g = Grid(-10, 10, 512)
    psi = coherent_state(g, HO, 2.0, 0.5)
    times = np.linspace(0, 3.0, 7)
    W = [build_wfields(s) for s in branch_frames(psi, HO, times)]
    b = attach_soliton(W[0], 1.5, seed=0)
    h = evolve_soliton(b, W, dt=1e-3)
    assert b.momentum == pytest.approx(0.5, abs=1e-9)
    np.testing.assert_allclose(h.x, 1.5 * np.cos(h.t) + 0.5 * np.sin(h.t), atol=1e-9)


def test_evolve_truncates_at_caustic():
    g = Grid(-10, 10, 512)
    psi = coherent_state(g, HO, 2.0)
    # the flat initial phase focuses every ray at x = 0 after a quarter period
    with pytest.raises(ValueError):
        build_wfields(branch_decompose(psi, HO, np.pi / 2))
    # just before the focus the sheet is too compressed to resolve the carrier
    W = [build_wfields(s) for s in branch_frames(psi, HO, [0.0, 1.0, np.pi / 2 - 1e-3])]
    h = evolve_soliton(attach_soliton(W[0], 2.0, seed=0), W, dt=1e-3)
    assert h.truncated and "terminated" in h.reason
    assert h.t.size == 2


def test_single_branch_soliton_matches_bohm():
    # wide packet: the branch velocity field and the guiding field coincide up to spreading
    g = Grid(-200, 200, 2048)
    sigma = 20.0
    psi = gaussian(g, FREE, 0.0, 1.5, sigma)
    times = np.linspace(0, 2.0, 41)
    W = [build_wfields(s) for s in branch_frames(psi, FREE, times)]
    frames = propagate_exact(psi, FREE, 2.0, 0.05)
    x0 = 3.0
    h = evolve_soliton(attach_soliton(W[0], x0, seed=0), W)
    bohm = integrate_bohm(frames, x0)
    spread = x0 * (oracles.free_width(times, sigma) / sigma - 1)
    assert np.max(np.abs(h.x - bohm.x) - spread) < 2e-5


def test_couple_single_branch_is_identity(free_w):
    _, W = free_w
    b = attach_soliton(W[0], 1.0, seed=0)
    b.center = 1.0 + 2 * W[2].time
    assert couple_amplitude(b, W[2], a0=0.3) == pytest.approx(0.3, rel=1e-12)


def test_couple_constructive_and_node(eigen_w):
    _, W = eigen_w
    w0 = W[0]
    # sheets e^{ikx} and -e^{-ikx}: equal moduli everywhere, aligned at sin(kx) = +-1
    b = attach_soliton(w0, 0.1, seed=0)
    assert couple_amplitude(b, w0, a0=1.0) == pytest.approx(2.0, rel=1e-6)
    b = attach_soliton(w0, 0.2, seed=0)
    assert couple_amplitude(b, w0, a0=1.0) < 1e-6
    # a carrier launched next to a node runs through it later on
    psi = _psi5()
    b = attach_soliton(w0, 0.21, seed=0)
    node = 0.2 if b.momentum < 0 else 0.4
    t_cross = abs((node - 0.21) / b.momentum)
    w = build_wfields(branch_decompose(psi, WELL, t_cross, components=sign_split(psi)), 2j)
    b.center, b.time = node, t_cross
    assert couple_amplitude(b, w, a0=1.0) < 1e-6


def _psi5():
    return well_eigenstate(Grid(0, 1, 512, "dirichlet"), WELL, 5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100), st.floats(0, 2 * np.pi), st.floats(0.05, 0.95))
def test_couple_invariant_under_c(mod, arg, x):
    st_ = _eigen_state()
    w1 = build_wfields(st_, 1.0)
    wc = build_wfields(st_, mod * np.exp(1j * arg))
    b = attach_soliton(w1, x, seed=1)
    ref = couple_amplitude(b, w1, a0=1.0)
    assert couple_amplitude(b, wc, a0=1.0) == pytest.approx(ref, rel=1e-9)


_STATE = {}


def _eigen_state():
    if "s" not in _STATE:
        g = Grid(0, 1, 256, "dirichlet")
        psi = well_eigenstate(g, WELL, 3)
        _STATE["s"] = branch_decompose(psi, WELL, 0.05, components=sign_split(psi))
    return _STATE["s"]


def test_couple_rejects_wrong_time(free_w):
    _, W = free_w
    b = attach_soliton(W[0], 0.0, seed=0)
    with pytest.raises(ValueError):
        couple_amplitude(b, W[1], t=0.7)


def test_statistics_free_drift(free_w):
    psi, W = free_w
    ex = propagate_exact(psi, FREE, 1.0, 0.01)[-1]
    s = soliton_ensemble_statistics([W[0], W[2]], 10**4, 7, 1.0, exact=ex)
    assert s.tv_weighted < 0.05
    assert s.branch_counts == {0: 10**4}
    assert sum(s.errors.values()) == 0


def test_statistics_initial_floor(free_w):
    psi, W = free_w
    n, bins = 10**4, 50
    s = soliton_ensemble_statistics([W[0]], n, 3, 0.0, bins, exact=psi)
    assert s.tv_weighted < 2 * np.sqrt(bins / n)
    assert s.tv_unweighted == s.tv_weighted


def test_statistics_deterministic(eigen_w):
    psi, W = eigen_w
    ex = evolve_well(psi, WELL, W[5].time)
    a = soliton_ensemble_statistics([W[0], W[5]], 2000, 11, W[5].time, exact=ex)
    b = soliton_ensemble_statistics([W[0], W[5]], 2000, 11, W[5].time, exact=ex)
    assert a.to_dict() == b.to_dict()
    assert set(a.branch_counts) == {0, 1}


def test_statistics_preconditions(free_w):
    psi, W = free_w
    with pytest.raises(ValueError):
        soliton_ensemble_statistics(W, 10, 0, 1.0, exact=psi)
    with pytest.raises(ValueError):
        soliton_ensemble_statistics(W, 1000, 0, 0.77, exact=psi)


HB = 1e-2
WELL_HB = WELL.with_hbar(HB)
GRID = Grid(0, 1, 1024, "dirichlet")


def _two_orbit(p1, weights, sigma=0.1):
    T = 2 / p1
    a = gaussian(GRID, WELL_HB, 0.5, p1, sigma)
    b = gaussian(GRID, WELL_HB, 0.5, 2 * p1, sigma)
    psi = a.with_values(np.sqrt(weights[0]) * a.values + np.sqrt(weights[1]) * b.values)
    psi = psi.normalized()
    orbits = find_periodic_orbits(WELL_HB, 0.5, (0.99 * T, 1.01 * T),
                                  [p1**2 / 2, 2 * p1**2], width=sigma)
    return [psi, evolve_well(psi, WELL_HB, T)], [o for o in orbits if o.trajectory.p[0] > 0]


def test_recurrence_identical_orbits():
    psi = gaussian(GRID, WELL_HB, 0.5, 1.0, 0.1)
    frames = [psi, evolve_well(psi, WELL_HB, 2.0)]
    orbit = [o for o in find_periodic_orbits(WELL_HB, 0.5, (1.98, 2.02), [0.5], width=0.1)
             if o.trajectory.p[0] > 0][0]
    r = recurrence_consistency(frames, [orbit, orbit])
    assert r.delta_action == 0.0
    # the identical pair collapses to the single-orbit amplitude
    assert r.predicted == pytest.approx(orbit.amplitude ** 2, rel=1e-12)
    assert r.relative_error < 1e-3


def test_recurrence_two_orbits_agree():
    frames, orbits = _two_orbit(1.0, (1.0, 0.5))
    assert len(orbits) == 2
    assert recurrence_consistency(frames, orbits, (1.0, 0.5)).relative_error < 1e-3


def test_recurrence_destructive_pair():
    _, orbits = _two_orbit(1.0, (1.0, 1.0))
    probe = recurrence_consistency(_two_orbit(1.0, (1.0, 1.0))[0], orbits, (1.0, 1.0))
    # the effective action difference moves by -3 dp for this pair; shift it onto pi
    frac = (probe.delta_action / (np.pi * HB)) % 2
    p1 = 1.0 + (frac - 1) * np.pi * HB / 3
    frames, orbits = _two_orbit(p1, (1.0, 1.0))
    r = recurrence_consistency(frames, orbits, (1.0, 1.0))
    assert (r.delta_action / (np.pi * HB)) % 2 == pytest.approx(1.0, abs=1e-6)
    assert r.predicted < 0.01
    assert r.measured < 0.01


def test_recurrence_no_common_period():
    psi = gaussian(GRID, WELL_HB, 0.5, 1.0, 0.1)
    orbits = find_periodic_orbits(WELL_HB, 0.5, (1.0, 2.5), [0.5, 1.0], width=0.1)
    periods = sorted({round(o.period, 9) for o in orbits})
    assert len(periods) == 2
    o1 = next(o for o in orbits if abs(o.period - periods[0]) < 1e-6)
    o2 = next(o for o in orbits if abs(o.period - periods[1]) < 1e-6)
    with pytest.raises(NoCommonPeriodError):
        recurrence_consistency([psi, psi], [o1, o2])
    with pytest.raises(NoCommonPeriodError):
        recurrence_consistency([psi, psi], [o1, o1])


def test_bump_profile_even_and_peaked():
    b = SolitonBump(0, 0, 0.0, 1.0, 0.4, 2.0, 0.1)
    s = np.linspace(0, 0.5, 11)
    np.testing.assert_allclose(b.field(0.4 + s), b.field(0.4 - s))
    assert b.field(0.4) == 2.0
