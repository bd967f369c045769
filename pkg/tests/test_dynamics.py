"""Built-in systems: map values, conserved/dissipated quantities, sampling, CSV format."""

import io
import math

import numpy as np
import pytest

from specrkhs.dynamics import (
    DynamicsError,
    GridPoints,
    RandomBox,
    SnapshotSet,
    SystemSpec,
    Trajectory,
    chebyshev_nodes,
    concat_snapshots,
    duffing_hamiltonian,
    generate_snapshots,
    load_snapshots,
    save_snapshots,
    step,
    transition_gram_row_exact,
    transition_row,
)
from specrkhs.kernels import poincare_distance


# -- step ------------------------------------------------------------------------

def test_gauss_map_fixed_point_at_left_endpoint():
    spec = SystemSpec("gauss-map")
    assert step(spec, -1.0)[0] == pytest.approx(-1.0, abs=1e-15)


def test_gauss_map_value():
    spec = SystemSpec("gauss-map")
    x = -0.5
    expect = math.exp(-2 * x * x) - 1 - math.exp(-2)
    assert step(spec, x)[0] == pytest.approx(expect, abs=1e-15)


def test_gauss_map_domain_violation():
    spec = SystemSpec("gauss-map")
    with pytest.raises(DynamicsError):
        step(spec, 0.5)


def test_gauss_map_rejects_non_invariant_parameters():
    with pytest.raises(DynamicsError):
        SystemSpec("gauss-map", {"alpha": 2.0, "beta": 5.0})


def test_lorenz_equilibrium():
    spec = SystemSpec("lorenz", timestep=0.01)
    assert np.allclose(step(spec, [0.0, 0.0, 0.0]), 0.0)


def test_mobius_rotation_fixes_origin():
    spec = SystemSpec("mobius", {"a": np.exp(1j * np.pi / 6), "b": 0.0})
    assert step(spec, 0j)[0] == 0


def test_mobius_rotation_acts_as_rotation():
    # a = e^{i theta/2}, b = 0 rotates by theta
    theta = np.pi / 3
    spec = SystemSpec("mobius", {"a": np.exp(1j * theta / 2), "b": 0.0})
    z = 0.4 - 0.2j
    assert step(spec, z)[0] == pytest.approx(z * np.exp(1j * theta), abs=1e-14)


def test_mobius_normalization_enforced():
    with pytest.raises(DynamicsError):
        SystemSpec("mobius", {"a": 1.0, "b": 0.5})


def test_stochastic_step_requires_rng():
    spec = SystemSpec("random-walk")
    with pytest.raises(DynamicsError):
        step(spec, 0.0)


def test_identity_and_custom_map():
    ident = SystemSpec("identity", {"d": 3})
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(step(ident, x), x)
    doubler = SystemSpec("custom-map", {"fn": lambda v: 2 * v})
    assert np.array_equal(step(doubler, x), 2 * x)


# -- Duffing Hamiltonian ----------------------------------------------------------

def test_duffing_hamiltonian_two_sided_decay():
    spec = SystemSpec("duffing", {"alpha": 1.0, "beta": 1.0, "delta": 0.2}, timestep=0.01)
    assert spec.timestep < 1 / (4 * 0.2)
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.uniform(-1, 1, 2)
        h_prev = duffing_hamiltonian(spec, x)
        for _ in range(200):
            x = step(spec, x)
            h = duffing_hamiltonian(spec, x)
            assert h <= h_prev + 1e-8
            assert h >= 0.5 * h_prev - 1e-8
            h_prev = h


def test_duffing_timestep_guard():
    with pytest.raises(DynamicsError):
        SystemSpec("duffing", {"alpha": 1.0, "beta": 1.0, "delta": 0.2}, timestep=2.0)


# -- Mobius isometry ---------------------------------------------------------------

def test_mobius_preserves_hyperbolic_distance():
    a = np.sqrt(2) * np.exp(1j * np.pi * np.sqrt(3))
    b = np.exp(1j * np.pi * 9 / 7)
    spec = SystemSpec("mobius", {"a": a, "b": b})
    rng = np.random.default_rng(2)
    r = rng.uniform(0, 0.95, 1000)
    th = rng.uniform(0, 2 * np.pi, 1000)
    z = r * np.exp(1j * th)
    w = np.roll(z, 1)
    tz = np.array([step(spec, zi)[0] for zi in z])
    tw = np.array([step(spec, wi)[0] for wi in w])
    d0 = poincare_distance(z, w)
    d1 = poincare_distance(tz, tw)
    assert np.abs(d0 - d1).max() <= 1e-12


# -- sampling ----------------------------------------------------------------------

def test_trajectory_sampling_structure():
    spec = SystemSpec("gauss-map")
    snaps = generate_snapshots(spec, Trajectory(x0=-0.5, count=3))
    x = np.array([-0.5])
    iterates = [x]
    for _ in range(3):
        iterates.append(step(spec, iterates[-1]))
    assert np.allclose(snaps.X.ravel(), [it[0] for it in iterates[:3]])
    assert np.allclose(snaps.Y.ravel(), [it[0] for it in iterates[1:]])


def test_identity_snapshots_have_equal_columns():
    spec = SystemSpec("identity", {"d": 2})
    snaps = generate_snapshots(spec, RandomBox(bounds=[(-1, 1), (-1, 1)], count=10, seed=3))
    assert np.array_equal(snaps.X, snaps.Y)


def test_seeded_generation_is_bit_identical():
    spec = SystemSpec("random-walk", seed=99)
    pts = np.arange(-5, 6).reshape(-1, 1)
    s1 = generate_snapshots(spec, GridPoints(points=pts), samples_per_state=20)
    s2 = generate_snapshots(spec, GridPoints(points=pts), samples_per_state=20)
    assert np.array_equal(s1.Y_samples, s2.Y_samples)


def test_random_walk_empirical_frequencies():
    spec = SystemSpec("random-walk", seed=1234)
    S = 100_000
    snaps = generate_snapshots(spec, GridPoints(points=np.array([[0.0]])),
                               samples_per_state=S)
    vals = snaps.Y_samples.ravel()
    p = 1 / 3
    tol = 3 * math.sqrt(p * (1 - p) / S)
    for target in (-1.0, 0.0, 1.0):
        freq = np.mean(vals == target)
        assert abs(freq - p) <= tol


def test_duplicate_states_rejected():
    X = np.array([[0.1], [0.2], [0.1 + 5e-15]])
    with pytest.raises(DynamicsError):
        SnapshotSet(X=X, Y=X)


def test_samples_per_state_guard():
    ident = SystemSpec("identity", {"d": 1})
    with pytest.raises(DynamicsError):
        generate_snapshots(ident, GridPoints(points=np.array([[0.0]])), samples_per_state=3)


def test_chebyshev_nodes_strictly_interior():
    pts = chebyshev_nodes(201, -1.0, 0.0)
    assert pts.min() > -1.0 and pts.max() < 0.0
    assert len(np.unique(pts)) == 201


# -- Markov transition rows ---------------------------------------------------------

def test_p1_transition_row():
    spec = SystemSpec("random-walk")
    row = transition_gram_row_exact(spec, 0, [-1, 0, 1])
    assert np.allclose(row, [1 / 3, 1 / 3, 1 / 3])
    assert np.allclose(transition_gram_row_exact(spec, 0, [5, 6]), [0.0, 0.0])


def test_perturbed_row_at_zero_perturbation():
    spec = SystemSpec("random-walk-perturbed", seed=0)
    spec.params["perturbation"][:] = 0.0
    row = transition_gram_row_exact(spec, 0, [-1, 0, 1])
    assert np.allclose(row, [0.25, 0.5, 0.25])
    # outside the perturbed window the base chain is p1
    row_far = transition_gram_row_exact(spec, 100, [99, 100, 101])
    assert np.allclose(row_far, [1 / 3, 1 / 3, 1 / 3])


@pytest.mark.parametrize("seed", range(5))
def test_markov_rows_are_probability_vectors(seed):
    for spec in (SystemSpec("random-walk", seed=seed),
                 SystemSpec("random-walk-perturbed", seed=seed)):
        for state in range(-6, 7):
            _, probs = transition_row(spec, state)
            assert probs.min() >= 0
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)


# -- snapshot CSV ---------------------------------------------------------------------

def test_snapshot_csv_roundtrip_deterministic():
    spec = SystemSpec("duffing", {"alpha": 1.0, "beta": 1.0, "delta": 0.2}, timestep=0.01)
    snaps = generate_snapshots(spec, RandomBox(bounds=[(-1, 1), (-1, 1)], count=7, seed=1))
    buf = io.StringIO()
    save_snapshots(snaps, buf)
    buf.seek(0)
    assert buf.readline().strip() == "d=2,s=1"
    buf.seek(0)
    back = load_snapshots(buf)
    assert np.array_equal(back.X, snaps.X)
    assert np.array_equal(back.Y, snaps.Y)


def test_snapshot_csv_roundtrip_complex():
    z = np.array([[0.1 + 0.2j], [-0.3 - 0.4j], [0.5 + 0j]])
    snaps = SnapshotSet(X=z, Y=z * np.exp(1j * 0.7))
    buf = io.StringIO()
    save_snapshots(snaps, buf)
    back = load_snapshots(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.X, snaps.X)
    assert np.array_equal(back.Y, snaps.Y)


def test_snapshot_csv_roundtrip_stochastic():
    spec = SystemSpec("random-walk", seed=4)
    snaps = generate_snapshots(spec, GridPoints(points=np.arange(-2, 3).reshape(-1, 1)),
                               samples_per_state=4)
    buf = io.StringIO()
    save_snapshots(snaps, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "d=1,s=4"
    back = load_snapshots(io.StringIO(text))
    assert np.array_equal(back.Y_samples, snaps.Y_samples)


def test_concat_snapshots():
    spec = SystemSpec("gauss-map")
    a = generate_snapshots(spec, Trajectory(x0=-0.5, count=3))
    b = generate_snapshots(spec, Trajectory(x0=-0.8, count=2))
    both = concat_snapshots([a, b])
    assert both.N == 5
    assert np.array_equal(both.X[:3], a.X)
