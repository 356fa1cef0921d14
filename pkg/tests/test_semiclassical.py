import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from semidyn.exactqm import (Grid, coherent_state, current_density, evolve_well, fidelity,
                             gaussian, l2_distance, propagate_exact, well_eigenstate)
from semidyn.potentials import PotentialModel
from semidyn.semiclassical import (BVPConfig, CausticMaskError, EmptyPathWarning,
                                   branch_decompose, branch_frames, propagate_semiclassical,
                                   recurrence_strength, sign_split, spectral_window,
                                   van_vleck_kernel)

FREE = PotentialModel.free()
HO = PotentialModel.harmonic(1.0)
WELL = PotentialModel.infinite_well(1.0)


def test_free_kernel_closed_form():
    k = van_vleck_kernel(FREE, 0.0, 1.0, 1.0)
    assert k == pytest.approx((2j * np.pi) ** -0.5 * np.exp(0.5j), abs=1e-14)


@pytest.mark.parametrize("x0,x,t", [(0.0, 1.0, np.pi / 2), (0.4, -1.3, 1.1), (-1.0, 0.5, 2.5)])
def test_harmonic_kernel_mehler(x0, x, t):
    k = van_vleck_kernel(HO, x0, x, t, p_window=(-10, 10), dt=1e-3)
    assert k == pytest.approx(oracles.mehler_kernel(x0, x, t), abs=1e-10)


def test_harmonic_kernel_past_caustic_carries_maslov_phase():
    # for pi < t < 2 pi the exact kernel is the Mehler form on the branch with arg(sin) = pi
    t = 1.3 * np.pi
    k = van_vleck_kernel(HO, 0.2, 0.9, t, dt=1e-3)
    s, c = np.sin(t), np.cos(t)
    ref = (2 * np.pi * abs(s)) ** -0.5 * np.exp(-0.25j * np.pi - 0.5j * np.pi) \
        * np.exp(1j * ((0.2**2 + 0.9**2) * c - 2 * 0.2 * 0.9) / (2 * s))
    assert k == pytest.approx(ref, abs=1e-9)


def test_well_image_sum_equals_eigenbasis_kernel():
    # at complex time both series converge; this pins the (-1)^reflections sign rule
    tau = 0.3 - 0.01j
    for x0, x in [(0.25, 0.75), (0.1, 0.2), (0.6, 0.95)]:
        assert oracles.well_kernel_images(x0, x, tau) == pytest.approx(
            oracles.well_kernel_eigen(x0, x, tau), rel=1e-9)


def test_well_kernel_three_images():
    p = oracles.well_image_momenta(0.25, 0.75, 1.0, p_max=1.2)
    assert p.size == 3
    k = van_vleck_kernel(WELL, 0.25, 0.75, 1.0, p_window=(-1.2, 1.2))
    ref = sum(s * oracles.free_kernel(0.25, y, 1.0) for s, y in [(1, 0.75), (-1, 1.25), (-1, -0.75)])
    assert k == pytest.approx(ref, abs=1e-12)


def test_kernel_without_paths_warns():
    with pytest.warns(EmptyPathWarning):
        assert van_vleck_kernel(FREE, 0.0, 50.0, 1.0) == 0


def test_free_propagation_exact():
    g = Grid(-20, 20, 1024)
    psi = gaussian(g, FREE, 0.0, 2.0, 1.0)
    for t in (0.5, 1.7):
        sc = propagate_semiclassical(psi, FREE, t)
        assert np.sqrt(np.sum(np.abs(sc.values - oracles.free_gaussian(g.x, t, 0, 2)) ** 2)
                       * g.dx) < 1e-8


def test_harmonic_propagation_quarter_period():
    g = Grid(-10, 10, 512)
    psi = coherent_state(g, HO, 2.0)
    sc = propagate_semiclassical(psi, HO, np.pi / 4)
    ref = psi.with_values(oracles.coherent_state(g.x, np.pi / 4, 2.0))
    assert l2_distance(sc, ref) < 1e-6


def test_harmonic_at_caustic_masks_and_fails():
    g = Grid(-10, 10, 512)
    with pytest.raises(CausticMaskError):
        propagate_semiclassical(coherent_state(g, HO, 2.0), HO, np.pi)


def test_well_packet_quarter_bounce():
    model = WELL.with_hbar(0.01)
    g = Grid(0, 1, 1024, "dirichlet")
    psi = gaussian(g, model, 0.4, 1.0, 0.04)
    T = 2.0 * model.length * model.mass / 1.0
    t = T / 4
    assert model.hbar / (1.0**2 * t / 2) <= 0.05
    sc = propagate_semiclassical(psi, model, t)
    assert fidelity(sc, evolve_well(psi, model, t)) >= 0.99


def test_spectral_window_covers_spectrum():
    g = Grid(-20, 20, 1024)
    lo, hi = spectral_window(gaussian(g, FREE, 0.0, 2.0, 1.0))
    assert lo < 2.0 - 3.0 and hi > 2.0 + 3.0
    assert hi <= np.pi / g.dx
    cfg = BVPConfig(p_window="spectral")
    assert cfg.window(gaussian(g, FREE, 0.0, 2.0, 1.0)) == (lo, hi)


def test_rolloff_shape():
    cfg = BVPConfig(taper=0.25)
    w = cfg.rolloff(np.array([0.0, 0.7, 0.875, 1.0, 1.1]), (-1.0, 1.0))
    np.testing.assert_allclose(w, [1.0, 1.0, 0.5, 0.0, 0.0], atol=1e-12)


def test_free_gaussian_single_branch():
    g = Grid(-20, 20, 1024)
    psi = gaussian(g, FREE, 0.0, 2.0, 1.0)
    state = branch_decompose(psi, FREE, 1.0)
    assert len(state.branches) == 1
    assert state.branches[0].label == (0, 0)
    assert not state.ambiguities


def test_well_packet_two_dominant_branches():
    model = WELL.with_hbar(0.01)
    g = Grid(0, 1, 1024, "dirichlet")
    psi = gaussian(g, model, 0.4, 1.0, 0.04)
    # the packet centre reaches the wall at t = 0.6
    state = branch_decompose(psi, model, 0.6)
    assert sorted(b.label for b in state.dominant()) == [(0, 0), (1, 0)]


def test_eigenstate_counter_propagating_branches():
    g = Grid(0, 1, 512, "dirichlet")
    psi = well_eigenstate(g, WELL, 5)
    sheets = sign_split(psi)
    np.testing.assert_allclose(sheets[0].values + sheets[1].values, psi.values, atol=1e-14)
    state = branch_decompose(psi, WELL, 0.1, components=sheets)
    con = state.contributions(g.x[1:])
    p_final = con.p0 * (-1.0) ** con.reflections
    for j in (10, 100, 300):
        here = con.point == j
        # one right-mover and one left-mover at every point
        assert here.sum() == 2
        assert np.prod(np.sign(p_final[here])) < 0
    field = state.wavefunction()
    scale = np.max(np.abs(psi.values)) ** 2 * 5 * np.pi
    assert np.max(np.abs(current_density(field))) < 1e-7 * scale
    assert np.max(np.abs(field.values - evolve_well(psi, WELL, 0.1).values)) < 1e-8


@pytest.mark.parametrize("model,grid,state,t", [
    (FREE, Grid(-20, 20, 1024), lambda g, m: gaussian(g, m, 0, 2, 1), 1.0),
    (HO, Grid(-10, 10, 512), lambda g, m: coherent_state(g, m, 2.0), np.pi / 4),
    (WELL.with_hbar(0.01), Grid(0, 1, 1024, "dirichlet"),
     lambda g, m: gaussian(g, m, 0.4, 1.0, 0.04), 0.6),
])
def test_branch_sum_identity(model, grid, state, t):
    psi = state(grid, model)
    st_ = branch_decompose(psi, model, t)
    total = sum(b.field(grid.n) for b in st_.branches)
    sc = propagate_semiclassical(psi, model, t, method="branches")
    assert np.sqrt(np.sum(np.abs(total - sc.values) ** 2) * grid.dx) <= 1e-12


def test_branch_table_columns():
    g = Grid(-20, 20, 1024)
    state = branch_decompose(gaussian(g, FREE, 0.0, 2.0, 1.0), FREE, 1.0)
    rows = state.table()
    assert rows.shape[1] == 9
    b = state.branches[0]
    np.testing.assert_allclose(rows[:, 1], b.x)
    np.testing.assert_allclose(rows[:, 3], b.p0)


def test_branch_frames_share_propagator():
    g = Grid(-20, 20, 1024)
    psi = gaussian(g, FREE, 0.0, 2.0, 1.0)
    states = branch_frames(psi, FREE, [0.5, 1.0])
    assert states[0].propagator is states[1].propagator
    assert [s.time for s in states] == [0.5, 1.0]


def test_recurrence_strength_examples():
    assert recurrence_strength(1, 0.3, 1, 0.3, 0.1) == pytest.approx(4.0)
    assert recurrence_strength(1, np.pi * 0.1, 1, 0.0, 0.1) == pytest.approx(0.0, abs=1e-14)
    assert recurrence_strength(2, np.pi * 0.05, 1, 0.0, 0.1) == pytest.approx(5.0)


finite = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), finite, st.floats(0, 5), finite, st.floats(1e-3, 2), finite)
def test_recurrence_strength_symmetry_and_shift(A1, S1, A2, S2, hbar, c):
    r = recurrence_strength(A1, S1, A2, S2, hbar)
    assert r >= -1e-12
    assert r == pytest.approx(recurrence_strength(A2, S2, A1, S1, hbar), abs=1e-9)
    assert r == pytest.approx(recurrence_strength(A1, S1 + c, A2, S2 + c, hbar),
                              abs=1e-6 * (1 + (A1 + A2) ** 2))
    assert r <= (A1 + A2) ** 2 + 1e-9


def test_kernel_and_exact_agree_through_split_step():
    g = Grid(-10, 10, 512)
    psi = coherent_state(g, HO, 2.0)
    ex = propagate_exact(psi, HO, 0.5, 1e-3)[-1]
    sc = propagate_semiclassical(psi, HO, 0.5)
    assert fidelity(sc, ex) > 1 - 1e-10
