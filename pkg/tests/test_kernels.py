"""Kernel families: closed-form values, symmetry/PSD, Wendland construction, Lipschitz bounds."""

import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import gamma, kv

from specrkhs.kernels import (
    KernelError,
    KernelSpec,
    eval_kernel,
    kernel_lipschitz_constant,
    kernel_matrix,
    parse_complex,
    parse_kernel_spec,
    poincare_distance,
    wendland_polynomial,
)

RNG = np.random.default_rng(20240801)


def sample_family(spec, n, rng):
    """Random admissible points for a kernel family."""
    fam = spec.family
    if fam == "sobolev-h1-interval":
        a, b = spec.params["a"], spec.params["b"]
        return rng.uniform(a, b, (n, 1))
    if fam == "hyperbolic-gaussian":
        r = rng.uniform(0, 0.95, n)
        th = rng.uniform(0, 2 * np.pi, n)
        return (r * np.exp(1j * th)).reshape(-1, 1)
    if fam in ("discrete-delta", "weighted-sequence"):
        lo = 1 if fam == "weighted-sequence" else -50
        return rng.integers(lo, 50, (n, 1)).astype(float)
    return rng.uniform(-2, 2, (n, spec.dim))


ALL_SPECS = [
    KernelSpec("gaussian-rbf", {"d": 2, "sigma": 1.3}),
    KernelSpec("matern", {"d": 2, "n": 3, "sigma": 2.0}),
    KernelSpec("matern", {"d": 1, "n": 1, "sigma": 1.0}),
    KernelSpec("wendland", {"d": 3, "k": 0, "sigma": 0.5}),
    KernelSpec("wendland", {"d": 2, "k": 1, "sigma": 1.0}),
    KernelSpec("sobolev-h1-interval", {"a": -1.0, "b": 0.0}),
    KernelSpec("hyperbolic-gaussian", {"sigma": 2.0}),
    KernelSpec("polynomial", {"d": 2, "degree": 3, "c": 1.0}),
    KernelSpec("discrete-delta", {}),
    KernelSpec("weighted-sequence", {"r": 0.75}),
]


# -- closed-form example values ------------------------------------------------

def test_h1_interval_corner_value():
    spec = KernelSpec("sobolev-h1-interval", {"a": -1.0, "b": 0.0})
    expect = math.cosh(1.0) / math.sinh(1.0)
    assert eval_kernel(spec, -1.0, -1.0) == pytest.approx(expect, abs=1e-14)
    # interior pair, both orderings of the piecewise formula
    x, y = -0.75, -0.25
    expect = math.cosh(x + 1) * math.cosh(-y) / math.sinh(1.0)
    assert eval_kernel(spec, x, y) == pytest.approx(expect, abs=1e-14)
    assert eval_kernel(spec, y, x) == pytest.approx(expect, abs=1e-14)


def test_gaussian_rbf_diagonal_is_one():
    spec = KernelSpec("gaussian-rbf", {"d": 3, "sigma": 2.5})
    x = RNG.normal(size=3)
    assert eval_kernel(spec, x, x) == 1.0


def test_matern_half_integer_example():
    spec = KernelSpec("matern", {"d": 1, "n": 1, "sigma": 2.0})  # nu = 1/2
    assert eval_kernel(spec, 0.0, 1.0) == pytest.approx(math.exp(-2.0), rel=1e-12)


def test_matern_diagonal_normalized():
    for (d, n) in [(2, 2), (2, 3), (2, 4), (3, 2), (1, 2)]:
        spec = KernelSpec("matern", {"d": d, "n": n, "sigma": 6.0})
        x = RNG.normal(size=d)
        assert eval_kernel(spec, x, x) == 1.0
        # continuity at the origin: deviation is O(sigma * ||delta||) at worst (nu = 1/2)
        y = x + 1e-9
        assert eval_kernel(spec, x, y) == pytest.approx(1.0, abs=1e-7)


def test_matern_requires_supercritical_smoothness():
    with pytest.raises(KernelError):
        KernelSpec("matern", {"d": 2, "n": 1, "sigma": 1.0})


def test_sigma_must_be_positive():
    with pytest.raises(KernelError):
        KernelSpec("gaussian-rbf", {"d": 1, "sigma": -1.0})


def test_dimension_mismatch_raises():
    spec = KernelSpec("gaussian-rbf", {"d": 2, "sigma": 1.0})
    with pytest.raises(KernelError):
        eval_kernel(spec, np.zeros(3), np.zeros(3))


# -- Wendland construction ------------------------------------------------------

def test_wendland_d3_k0_is_squared_hat():
    poly = wendland_polynomial(3, 0)
    assert poly.coeffs == (Fraction(1), Fraction(-2), Fraction(1))  # (1-r)^2
    assert poly.degree == 3 // 2 + 0 + 1


def test_wendland_d1_k1_symbolic_integration_oracle():
    sympy = pytest.importorskip("sympy")
    t, r = sympy.symbols("t r")
    # one application of (I p)(r) = int_r^1 t (1-t)^2 dt
    expect = sympy.Poly(sympy.integrate(t * (1 - t) ** 2, (t, r, 1)), r)
    poly = wendland_polynomial(1, 1)
    got = sympy.Poly(sum(sympy.Rational(c.numerator, c.denominator) * r**j
                         for j, c in enumerate(poly.coeffs)), r)
    assert sympy.simplify(expect - got) == 0
    # closed form (1-r)^3 (3r+1) / 12
    closed = sympy.Poly(sympy.expand((1 - r) ** 3 * (3 * r + 1) / 12), r)
    assert sympy.simplify(closed - got) == 0


def test_wendland_d3_k1_symbolic_integration_oracle():
    sympy = pytest.importorskip("sympy")
    t, r = sympy.symbols("t r")
    expect = sympy.Poly(sympy.integrate(t * (1 - t) ** 3, (t, r, 1)), r)
    poly = wendland_polynomial(3, 1)
    got = sympy.Poly(sum(sympy.Rational(c.numerator, c.denominator) * r**j
                         for j, c in enumerate(poly.coeffs)), r)
    assert sympy.simplify(expect - got) == 0


@pytest.mark.parametrize("d,k", [(1, 1), (2, 1), (3, 1), (3, 2), (2, 3)])
def test_wendland_degree_formula(d, k):
    assert wendland_polynomial(d, k).degree == d // 2 + 3 * k + 1


@pytest.mark.parametrize("k", [1, 2, 3])
def test_wendland_smoothness_at_support_boundary(k):
    # first 2k derivatives of p at r=1 vanish exactly (rational arithmetic)
    poly = wendland_polynomial(2, k)
    p = poly
    for order in range(1, 2 * k + 1):
        p = p.derivative()
        assert p.eval_exact(Fraction(1)) == 0, f"derivative {order} nonzero at r=1"


def test_wendland_compact_support():
    spec = KernelSpec("wendland", {"d": 3, "k": 0, "sigma": 1.0})
    assert eval_kernel(spec, np.zeros(3), np.array([1.5, 0, 0])) == 0.0
    poly = wendland_polynomial(3, 1)
    assert np.all(poly(np.array([1.3, 2.0, 100.0])) == 0.0)  # exact beyond support
    assert poly.eval_exact(Fraction(1)) == 0                 # exact at the boundary
    assert abs(poly(np.array([1.0]))[0]) < 1e-15             # float Horner round-off


def test_wendland_invalid_combination():
    with pytest.raises(KernelError):
        wendland_polynomial(1, 0)  # k=0 needs d>=3


def test_lorenz_kernel_matches_scaled_profile():
    # phi_{3,0}(||x-y||/10) = (1 - ||x-y||/10)^2 within the support
    spec = KernelSpec("wendland", {"d": 3, "k": 0, "sigma": 0.1})
    x = np.array([1.0, 2.0, 3.0])
    y = np.array([4.0, 5.0, 6.0])
    r = np.linalg.norm(x - y) / 10
    assert eval_kernel(spec, x, y) == pytest.approx((1 - r) ** 2, rel=1e-14)


# -- invariants -----------------------------------------------------------------

@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: str(s))
def test_conjugate_symmetry(spec):
    rng = np.random.default_rng(7)
    X = sample_family(spec, 1000, rng)
    Y = sample_family(spec, 1000, rng)
    K_xy = np.array([kernel_matrix(spec, X[i: i + 1], Y[i: i + 1])[0, 0] for i in range(50)])
    K_yx = np.array([kernel_matrix(spec, Y[i: i + 1], X[i: i + 1])[0, 0] for i in range(50)])
    assert np.abs(K_xy - np.conj(K_yx)).max() <= 1e-12
    # and in matrix form over the full 1000 pairs
    M1 = kernel_matrix(spec, X, Y)
    M2 = kernel_matrix(spec, Y, X)
    assert np.abs(M1 - np.conj(M2).T).max() <= 1e-12


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: str(s))
def test_positive_semidefinite(spec):
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(2, 31))
        X = sample_family(spec, n, rng)
        # duplicate points are fine for PSD but confound the delta families
        X = np.unique(X, axis=0)
        K = kernel_matrix(spec, X, X)
        evals = np.linalg.eigvalsh(0.5 * (K + K.conj().T))
        assert evals[0] >= -1e-10 * max(evals[-1], 1e-300)


def test_matern_half_integer_closed_forms_validate_bessel():
    # the generic Bessel branch must reproduce the half-integer closed forms
    u = np.linspace(1e-3, 8.0, 500)
    for nu, closed in [(0.5, np.exp(-u)),
                       (1.5, (1 + u) * np.exp(-u)),
                       (2.5, (1 + u + u**2 / 3) * np.exp(-u))]:
        generic = (2 ** (1 - nu) / gamma(nu)) * u**nu * kv(nu, u)
        assert np.abs(generic / closed - 1).max() <= 1e-10


@pytest.mark.parametrize("spec,has_constant", [
    (KernelSpec("wendland", {"d": 3, "k": 0, "sigma": 0.7}), True),
    (KernelSpec("wendland", {"d": 2, "k": 2, "sigma": 1.2}), True),
    (KernelSpec("gaussian-rbf", {"d": 2, "sigma": 1.5}), True),
    (KernelSpec("matern", {"d": 2, "n": 3, "sigma": 2.0}), True),
    (KernelSpec("discrete-delta", {}), False),
])
def test_lipschitz_bound_holds(spec, has_constant):
    C = kernel_lipschitz_constant(spec)
    if not has_constant:
        assert C is None
        return
    rng = np.random.default_rng(3)
    d = spec.dim
    X = rng.uniform(-2, 2, (10_000, d))
    Y = rng.uniform(-2, 2, (10_000, d))
    Xp = X + rng.normal(scale=0.05, size=X.shape)
    Yp = Y + rng.normal(scale=0.05, size=Y.shape)

    def diag_eval(P, Q):
        out = np.empty(len(P))
        for i0 in range(0, len(P), 500):
            out[i0: i0 + 500] = np.diag(kernel_matrix(spec, P[i0: i0 + 500], Q[i0: i0 + 500]))
        return out
    lhs = np.abs(diag_eval(X, Y) - diag_eval(Xp, Yp))
    rhs = C * (np.linalg.norm(X - Xp, axis=1) + np.linalg.norm(Y - Yp, axis=1))
    assert np.all(lhs <= rhs + 1e-12)


def test_gaussian_lipschitz_value():
    spec = KernelSpec("gaussian-rbf", {"d": 1, "sigma": 1.0})
    assert kernel_lipschitz_constant(spec) == pytest.approx(math.sqrt(2 / math.e), rel=1e-12)


def test_wendland_lipschitz_dominates_brute_force_slope():
    # C = sum |l a_l| must dominate sup |p'(r)| on [0,1] (brute-force grid oracle)
    for d, k in [(3, 0), (2, 1), (3, 2)]:
        spec = KernelSpec("wendland", {"d": d, "k": k, "sigma": 1.0})
        C = kernel_lipschitz_constant(spec)
        dpoly = wendland_polynomial(d, k).derivative()
        grid = np.linspace(0.0, 1.0, 1_000_001)
        sup = np.abs(dpoly(grid)).max()
        assert C >= sup - 1e-12


def test_matern_lipschitz_closed_form_nu_3_2():
    # for nu=3/2, |phi'(u)| = u e^-u peaks at u=1 with value 1/e
    spec = KernelSpec("matern", {"d": 1, "n": 2, "sigma": 3.0})
    assert kernel_lipschitz_constant(spec) == pytest.approx(3.0 / math.e, rel=1e-9)


def test_lipschitz_unavailable_for_delta():
    assert kernel_lipschitz_constant(KernelSpec("discrete-delta", {})) is None


# -- hyperbolic distance and guards ----------------------------------------------

def test_poincare_distance_symmetric_and_zero():
    z = 0.3 + 0.2j
    w = -0.5 + 0.1j
    assert poincare_distance(z, w) == pytest.approx(poincare_distance(w, z), abs=1e-15)
    assert poincare_distance(z, z) == 0.0


def test_hyperbolic_kernel_rejects_boundary():
    spec = KernelSpec("hyperbolic-gaussian", {"sigma": 1.0})
    with pytest.raises(KernelError):
        eval_kernel(spec, 1.0 + 0j, 0.0 + 0j)


# -- CLI grammar -----------------------------------------------------------------

def test_parse_kernel_spec_examples():
    s = parse_kernel_spec("matern:d=2,n=3,sigma=6")
    assert s.family == "matern" and s.params["n"] == 3 and s.params["sigma"] == 6
    s = parse_kernel_spec("wendland:d=3,k=0,sigma=0.1")
    assert s.family == "wendland" and s.params["sigma"] == 0.1
    s = parse_kernel_spec("H1:a=-1,b=0")  # case-insensitive alias
    assert s.family == "sobolev-h1-interval"


def test_parse_kernel_spec_unknown_key_errors():
    with pytest.raises(KernelError):
        parse_kernel_spec("matern:d=2,n=3,bogus=1")


def test_parse_complex_literals():
    assert parse_complex("1.5+2.25i") == 1.5 + 2.25j
    assert parse_complex("-0.3-1i") == -0.3 - 1j
    assert parse_complex("2i") == 2j
    assert parse_complex("-1e-3+2e-4i") == complex(-1e-3, 2e-4)
    assert parse_complex("0.25") == 0.25
