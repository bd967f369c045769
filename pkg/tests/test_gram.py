"""Gram assembly, compression, u-basis conversion, serialization."""

import numpy as np
import pytest

from specrkhs.dynamics import GridPoints, SnapshotSet, SystemSpec, chebyshev_nodes, generate_snapshots
from specrkhs.gram import (
    GramError,
    GramTriple,
    build_gram,
    build_gram_markov_exact,
    compress,
    load_gram,
    save_gram,
    stochastic_A,
    to_u_basis,
)
from specrkhs.kernels import KernelSpec, eval_kernel


@pytest.fixture()
def gauss_gram():
    spec = SystemSpec("gauss-map")
    ker = KernelSpec("sobolev-h1-interval", {"a": -1.0, "b": 0.0})
    snaps = generate_snapshots(spec, GridPoints(points=chebyshev_nodes(12, -1, 0)))
    return build_gram(snaps, ker), snaps, ker


def test_identity_dynamics_collapses_triple():
    ident = SystemSpec("identity", {"d": 2})
    rng = np.random.default_rng(0)
    snaps = generate_snapshots(ident, GridPoints(points=rng.uniform(-1, 1, (8, 2))))
    for fam, params in [("gaussian-rbf", {"d": 2, "sigma": 1.0}),
                        ("matern", {"d": 2, "n": 3, "sigma": 2.0})]:
        gt = build_gram(snaps, KernelSpec(fam, params))
        assert np.array_equal(gt.A, gt.G)
        assert np.array_equal(gt.R, gt.G)


def test_gauss_map_hand_evaluation():
    spec = SystemSpec("gauss-map")
    ker = KernelSpec("sobolev-h1-interval", {"a": -1.0, "b": 0.0})
    snaps = generate_snapshots(spec, GridPoints(points=np.array([-0.75, -0.25])))
    gt = build_gram(snaps, ker)
    X, Y = snaps.X.ravel(), snaps.Y.ravel()
    for j in range(2):
        for k in range(2):
            assert gt.G[j, k] == pytest.approx(eval_kernel(ker, X[k], X[j]), abs=1e-15)
            assert gt.A[j, k] == pytest.approx(eval_kernel(ker, Y[k], X[j]), abs=1e-15)
            assert gt.R[j, k] == pytest.approx(eval_kernel(ker, Y[k], Y[j]), abs=1e-15)


def test_hermiticity_and_psd(gauss_gram):
    gt, _, _ = gauss_gram
    assert np.array_equal(gt.G, gt.G.conj().T)
    assert np.array_equal(gt.R, gt.R.conj().T)
    for M in (gt.G, gt.R):
        ev = np.linalg.eigvalsh(M)
        assert ev[0] >= -1e-10 * ev[-1]


def test_markov_exact_reproduces_tridiagonal_structure():
    chain = SystemSpec("random-walk")
    ker = KernelSpec("discrete-delta", {})
    states = np.arange(-4, 5)
    gt = build_gram_markov_exact(chain, states, ker)
    n = len(states)
    assert np.array_equal(gt.G, np.eye(n))
    # A_jk = p(x_k, x_j): tridiagonal, symmetric, Toeplitz with value 1/3
    expect = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if abs(i - j) <= 1:
                expect[i, j] = 1 / 3
    assert np.allclose(gt.A, expect, atol=1e-15)
    # R = P P^T restricted: overlap counts / 9
    assert gt.R[0, 0] == pytest.approx(1 / 3)
    assert gt.R[0, 1] == pytest.approx(2 / 9)
    assert gt.R[0, 2] == pytest.approx(1 / 9)
    assert gt.R[0, 3] == 0.0


def test_markov_exact_with_generic_kernel_matches_sum():
    chain = SystemSpec("random-walk")
    ker = KernelSpec("gaussian-rbf", {"d": 1, "sigma": 0.4})
    states = np.arange(-3, 4)
    gt = build_gram_markov_exact(chain, states, ker)
    # A_jk = sum_y p(x_k, y) k(y, x_j), summed by hand over the tridiagonal support
    for j in range(len(states)):
        for k in range(len(states)):
            acc = sum((1 / 3) * eval_kernel(ker, float(states[k] + dlt), float(states[j]))
                      for dlt in (-1, 0, 1))
            assert gt.A[j, k] == pytest.approx(acc, rel=1e-12)


def test_stochastic_A_converges_like_sqrt_S():
    chain = SystemSpec("random-walk", seed=77)
    ker = KernelSpec("discrete-delta", {})
    states = np.arange(-4, 5).reshape(-1, 1)
    exact = build_gram_markov_exact(chain, states[:, 0], ker).A
    errs = []
    sizes = [100, 1000, 10000]
    for S in sizes:
        snaps = generate_snapshots(chain, GridPoints(points=states), samples_per_state=S)
        A = stochastic_A(snaps, ker)
        errs.append(np.abs(A - exact).max())
    slope = np.polyfit(np.log(sizes), np.log(errs), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.15)


def test_stochastic_R_matches_exact_for_large_S():
    chain = SystemSpec("random-walk", seed=3)
    ker = KernelSpec("discrete-delta", {})
    states = np.arange(-3, 4).reshape(-1, 1)
    exact = build_gram_markov_exact(chain, states[:, 0], ker)
    snaps = generate_snapshots(chain, GridPoints(points=states), samples_per_state=400)
    gt = build_gram(snaps, ker)
    # Monte-Carlo R approaches the exact product estimator (bias + noise ~ S^-1/2)
    assert np.abs(gt.R - exact.R).max() < 0.08
    assert np.abs(gt.A - exact.A).max() < 0.08


def test_nan_kernel_values_rejected():
    X = np.array([[0.0], [1.0]])
    bad = np.array([[1.0, np.nan], [np.nan, 1.0]])
    with pytest.raises(GramError):
        GramTriple(G=bad, A=np.eye(2), R=np.eye(2))


# -- compression -------------------------------------------------------------------

def test_compress_orthonormality(gauss_gram):
    gt, _, _ = gauss_gram
    basis = compress(gt)
    C = basis.C
    assert np.abs(C.conj().T @ gt.G @ C - np.eye(basis.r)).max() <= 1e-10


def test_compress_identity_gram():
    n = 6
    rng = np.random.default_rng(1)
    A = rng.normal(size=(n, n))
    gt = GramTriple(G=np.eye(n), A=A, R=np.eye(n))
    basis = compress(gt, r=n)
    assert np.allclose(basis.sigma_r, 1.0)
    # khat is a compression of A directly: same spectrum
    assert np.allclose(np.sort_complex(np.linalg.eigvals(basis.khat)),
                       np.sort_complex(np.linalg.eigvals(A)), atol=1e-10)


def test_full_rank_compression_matches_pencil_spectrum():
    rng = np.random.default_rng(8)
    n = 8
    S = rng.normal(size=(n, n))
    G = S @ S.T + n * np.eye(n)
    A = rng.normal(size=(n, n))
    gt = GramTriple(G=G, A=A, R=np.eye(n))
    basis = compress(gt, r=n)
    ev1 = np.sort_complex(np.linalg.eigvals(basis.khat))
    ev2 = np.sort_complex(np.linalg.eigvals(np.linalg.solve(G, A)))
    assert np.abs(ev1 - ev2).max() <= 1e-8


def test_rank_one_gram_keeps_single_direction():
    v = np.array([1.0, 2.0, 3.0])
    G = np.outer(v, v)
    gt = GramTriple(G=G, A=G, R=G)
    basis = compress(gt, threshold=1e-12)
    assert basis.r == 1


def test_compress_rejects_zero_rank():
    gt = GramTriple(G=np.zeros((3, 3)), A=np.zeros((3, 3)), R=np.zeros((3, 3)))
    with pytest.raises(GramError):
        compress(gt)


# -- u-basis conversion ----------------------------------------------------------

def test_to_u_basis_zero(gauss_gram):
    gt, _, _ = gauss_gram
    basis = compress(gt)
    assert np.allclose(to_u_basis(np.zeros(gt.N), basis, gt), 0.0)


def test_to_u_basis_scalar_case():
    g11 = 2.5
    gt = GramTriple(G=np.array([[g11]]), A=np.array([[g11]]), R=np.array([[g11]]))
    basis = compress(gt)
    gu = to_u_basis(np.array([1.0]), basis, gt)
    assert abs(gu[0]) == pytest.approx(np.sqrt(g11), rel=1e-14)


def test_to_u_basis_preserves_norm_at_full_rank():
    rng = np.random.default_rng(4)
    n = 6
    S = rng.normal(size=(n, n))
    G = S @ S.T + n * np.eye(n)
    gt = GramTriple(G=G, A=G, R=G)
    basis = compress(gt, r=n)
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    gu = to_u_basis(c, basis, gt)
    assert np.vdot(gu, gu).real == pytest.approx(np.vdot(c, G @ c).real, abs=1e-10)


def test_to_u_basis_length_mismatch(gauss_gram):
    gt, _, _ = gauss_gram
    basis = compress(gt)
    with pytest.raises(GramError):
        to_u_basis(np.zeros(gt.N + 1), basis, gt)


# -- serialization -----------------------------------------------------------------

def test_container_roundtrip_real(tmp_path, gauss_gram):
    gt, _, _ = gauss_gram
    p = tmp_path / "g.bin"
    save_gram(p, gt)
    raw = p.read_bytes()
    assert raw[:16] == b"SPECRKHS-GRAM\x00\x00\x00"
    assert raw[24] == 0  # real flag
    back = load_gram(p)
    assert np.array_equal(back.G, gt.G)
    assert np.array_equal(back.A, gt.A)
    assert np.array_equal(back.R, gt.R)
    assert back.provenance == gt.provenance


def test_container_roundtrip_complex(tmp_path):
    rng = np.random.default_rng(2)
    n = 4
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    G = M @ M.conj().T + n * np.eye(n)
    gt = GramTriple(G=G, A=M, R=G, provenance={"kernel": "test"})
    p = tmp_path / "g.bin"
    save_gram(p, gt)
    assert p.read_bytes()[24] == 1
    back = load_gram(p)
    assert np.array_equal(back.A, gt.A)


def test_container_rejects_other_files(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"NOT-A-GRAM-FILE!" * 4)
    with pytest.raises(GramError):
        load_gram(p)


def test_prefix_subtriple(gauss_gram):
    gt, _, _ = gauss_gram
    sub = gt.prefix(5)
    assert sub.N == 5
    assert np.array_equal(sub.G, gt.G[:5, :5])
    with pytest.raises(GramError):
        gt.prefix(0)
