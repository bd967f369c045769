"""Positive-definite kernel families and derived constants.

Every kernel is a conjugate-symmetric, positive semi-definite function
k(x, y) on the state space.  The families implemented here cover Sobolev
native spaces (Wendland, Matern, the explicit H^1 kernel on an interval),
radial kernels on R^d, a hyperbolic Gaussian on the Poincare disk, and
diagonal kernels on discrete state spaces used for Markov chains.

Conventions:

* radial families evaluate a profile phi at the scaled radius sigma*||x-y||,
  so ``sigma`` acts as an inverse length scale (e.g. sigma=0.1 reproduces a
  profile of ||x-y||/10);
* the Matern kernel is normalized by 2^(1-nu)/Gamma(nu) with nu = n - d/2 so
  that it is continuous with k(x, x) = 1 (the unnormalized version has a
  removable discontinuity at r = 0 for nu >= 1);
* the hyperbolic Gaussian is exp(-sigma * d(x,y)^2) with d the Poincare
  distance, matching the constant's placement in the disk experiments.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gamma as _gamma_fn
from scipy.special import kv as _bessel_kv

FAMILIES = (
    "matern",
    "wendland",
    "gaussian-rbf",
    "sobolev-h1-interval",
    "hyperbolic-gaussian",
    "polynomial",
    "discrete-delta",
    "weighted-sequence",
)

_RADIAL_FAMILIES = {"matern", "wendland", "gaussian-rbf"}


class KernelError(ValueError):
    """Invalid kernel specification or evaluation request."""


@dataclass(frozen=True)
class WendlandPolynomial:
    """The polynomial piece p_{d,k} of a Wendland profile on [0, 1].

    Coefficients are exact rationals in ascending powers of r.  The profile
    equals p_{d,k}(r) for 0 <= r <= 1 and vanishes for r > 1; for k >= 1 its
    first 2k derivatives vanish at r = 1, giving C^{2k} smoothness.
    """

    d: int
    k: int
    coeffs: tuple[Fraction, ...]
    _float_coeffs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_float_coeffs", np.array([float(c) for c in self.coeffs])
        )

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def derivative(self) -> "WendlandPolynomial":
        dcoeffs = tuple(
            self.coeffs[j] * j for j in range(1, len(self.coeffs))
        ) or (Fraction(0),)
        return WendlandPolynomial(self.d, self.k, dcoeffs)

    def eval_exact(self, r: Fraction) -> Fraction:
        acc = Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * r + c
        return acc

    def __call__(self, r):
        """Evaluate the compactly supported profile phi_{d,k} at r >= 0."""
        r = np.asarray(r, dtype=float)
        inside = r <= 1.0
        # Horner on the polynomial piece; exact zero outside the support.
        acc = np.zeros_like(r)
        for c in self._float_coeffs[::-1]:
            acc = acc * r + c
        return np.where(inside, acc, 0.0)


def wendland_polynomial(d: int, k: int) -> WendlandPolynomial:
    """Construct p_{d,k} by k-fold application of (Ip)(r) = int_r^1 t p(t) dt.

    The base case is the truncated power (1-r)^l with l = floor(d/2)+k+1.
    All arithmetic is exact over the rationals; the resulting degree is
    floor(d/2) + 3k + 1.
    """
    if d < 1 or k < 0:
        raise KernelError(f"invalid Wendland parameters d={d}, k={k}")
    if k == 0 and d < 3:
        raise KernelError("Wendland with k=0 requires d >= 3")
    ell = d // 2 + k + 1
    # (1-r)^ell expanded in ascending powers of r.
    coeffs = [
        Fraction(math.comb(ell, j) * (-1) ** j) for j in range(ell + 1)
    ]
    for _ in range(k):
        # int_r^1 t * sum_j a_j t^j dt = sum_j a_j/(j+2) - sum_j a_j/(j+2) r^{j+2}
        const = sum(a / (j + 2) for j, a in enumerate(coeffs))
        new = [const, Fraction(0)] + [-a / (j + 2) for j, a in enumerate(coeffs)]
        coeffs = new
    return WendlandPolynomial(d, k, tuple(coeffs))


_PARAM_DEFAULTS = {
    "matern": {"d": 1, "n": None, "sigma": 1.0},
    "wendland": {"d": None, "k": None, "sigma": 1.0},
    "gaussian-rbf": {"d": 1, "sigma": 1.0},
    "sobolev-h1-interval": {"a": None, "b": None},
    "hyperbolic-gaussian": {"sigma": 1.0},
    "polynomial": {"d": 1, "degree": 2, "c": 1.0},
    "discrete-delta": {},
    "weighted-sequence": {"r": None},
}

_FAMILY_ALIASES = {
    "h1": "sobolev-h1-interval",
    "sobolev-h1": "sobolev-h1-interval",
    "gaussian": "gaussian-rbf",
    "rbf": "gaussian-rbf",
    "hyperbolic": "hyperbolic-gaussian",
    "delta": "discrete-delta",
}


@dataclass(frozen=True)
class KernelSpec:
    """A closed description of a kernel family plus its parameters.

    Immutable after construction; evaluation is pure, so a single spec can be
    shared freely across worker threads.
    """

    family: str
    params: dict
    value_field: str = "real"

    def __post_init__(self):
        fam = _FAMILY_ALIASES.get(self.family, self.family)
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        merged = dict(_PARAM_DEFAULTS[fam])
        for key, val in self.params.items():
            if key not in merged:
                raise KernelError(f"unknown parameter {key!r} for family {fam!r}")
            merged[key] = val
        missing = [k for k, v in merged.items() if v is None]
        if missing:
            raise KernelError(f"family {fam!r} requires parameters {missing}")
        object.__setattr__(self, "params", merged)
        self._validate()

    def _validate(self):
        p = self.params
        if "sigma" in p and p["sigma"] <= 0:
            raise KernelError("sigma must be positive")
        fam = self.family
        if fam == "matern":
            d, n = int(p["d"]), p["n"]
            if n <= d / 2:
                raise KernelError(f"Matern requires n > d/2 (got n={n}, d={d})")
        elif fam == "wendland":
            d, k = int(p["d"]), int(p["k"])
            if d < 1 or k < 0 or (k == 0 and d < 3):
                raise KernelError(f"invalid Wendland parameters d={d}, k={k}")
        elif fam == "sobolev-h1-interval":
            if not p["a"] < p["b"]:
                raise KernelError("interval kernel requires a < b")
        elif fam == "polynomial":
            if int(p["degree"]) < 0 or p["c"] < 0:
                raise KernelError("polynomial kernel requires degree >= 0 and c >= 0")
        elif fam == "weighted-sequence":
            if p["r"] is None:
                raise KernelError("weighted-sequence kernel requires exponent r")

    # -- derived quantities -------------------------------------------------

    @property
    def dim(self) -> int:
        return int(self.params.get("d", 1))

    @property
    def nu(self) -> float:
        """Matern smoothness nu = n - d/2."""
        if self.family != "matern":
            raise KernelError("nu is only defined for Matern kernels")
        return self.params["n"] - self.params["d"] / 2

    def wendland(self) -> WendlandPolynomial:
        if self.family != "wendland":
            raise KernelError("not a Wendland kernel")
        return wendland_polynomial(int(self.params["d"]), int(self.params["k"]))

    def is_radial(self) -> bool:
        return self.family in _RADIAL_FAMILIES

    def __str__(self):
        items = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.family}:{items}" if items else self.family


def _matern_profile(spec: KernelSpec, u: np.ndarray) -> np.ndarray:
    """Normalized Matern profile at u = sigma*r, i.e. 2^(1-nu)/Gamma(nu) u^nu K_nu(u)."""
    nu = spec.nu
    u = np.asarray(u, dtype=float)
    if abs(nu - 0.5) < 1e-12:
        return np.exp(-u)
    if abs(nu - 1.5) < 1e-12:
        return (1.0 + u) * np.exp(-u)
    if abs(nu - 2.5) < 1e-12:
        return (1.0 + u + u * u / 3.0) * np.exp(-u)
    out = np.ones_like(u)
    pos = u > 0
    up = u[pos]
    out[pos] = (2.0 ** (1.0 - nu) / _gamma_fn(nu)) * up**nu * _bessel_kv(nu, up)
    return out


def _profile(spec: KernelSpec):
    """Radial profile phi with k(x,y) = phi(||x-y||) for radial families."""
    fam = spec.family
    sigma = spec.params.get("sigma", 1.0)
    if fam == "gaussian-rbf":
        return lambda r: np.exp(-((sigma * np.asarray(r, dtype=float)) ** 2))
    if fam == "matern":
        return lambda r: _matern_profile(spec, sigma * np.asarray(r, dtype=float))
    if fam == "wendland":
        poly = spec.wendland()
        return lambda r: poly(sigma * np.asarray(r, dtype=float))
    raise KernelError(f"{fam} is not radial")


def poincare_distance(x, y):
    """Hyperbolic distance 2*atanh|(y-x)/(1-conj(x)y)| on the open unit disk."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if np.any(np.abs(x) >= 1) or np.any(np.abs(y) >= 1):
        raise KernelError("hyperbolic kernel requires points inside the unit disk")
    w = np.abs((y - x) / (1.0 - np.conj(x) * y))
    return 2.0 * np.arctanh(w)


def _as_points(x, dim: int) -> np.ndarray:
    """Coerce a point or stack of points to shape (n, dim)."""
    arr = np.asarray(x)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a single point of dimension len(arr) -- or n scalar points if dim == 1
        arr = arr.reshape(-1, 1) if dim == 1 and len(arr) != dim else arr.reshape(1, -1)
    if arr.shape[-1] != dim:
        raise KernelError(
            f"point dimension {arr.shape[-1]} does not match kernel dimension {dim}"
        )
    return arr


def kernel_matrix(spec: KernelSpec, XA, XB) -> np.ndarray:
    """Matrix of kernel values k(XA_i, XB_j); the workhorse behind Gram assembly."""
    fam = spec.family
    if fam == "sobolev-h1-interval":
        a, b = spec.params["a"], spec.params["b"]
        xa = np.asarray(XA, dtype=float).reshape(-1, 1)
        xb = np.asarray(XB, dtype=float).reshape(-1, 1)
        tol = 1e-12 * max(1.0, abs(a), abs(b))
        if xa.min() < a - tol or xa.max() > b + tol or xb.min() < a - tol or xb.max() > b + tol:
            raise KernelError(f"points outside the interval [{a}, {b}]")
        lo = np.minimum(xa, xb.T)
        hi = np.maximum(xa, xb.T)
        return np.cosh(lo - a) * np.cosh(b - hi) / np.sinh(b - a)
    if fam == "hyperbolic-gaussian":
        za = np.asarray(XA).reshape(-1).astype(complex)
        zb = np.asarray(XB).reshape(-1).astype(complex)
        d = poincare_distance(za[:, None], zb[None, :])
        return np.exp(-spec.params["sigma"] * d * d)
    if fam == "polynomial":
        xa = _as_points(XA, spec.dim)
        xb = _as_points(XB, spec.dim)
        s = xa @ np.conj(xb).T
        out = (s + spec.params["c"]) ** int(spec.params["degree"])
        return out
    if fam in ("discrete-delta", "weighted-sequence"):
        xa = _as_points(XA, 1).astype(float)
        xb = _as_points(XB, 1).astype(float)
        eq = np.all(xa[:, None, :] == xb[None, :, :], axis=-1)
        if fam == "discrete-delta":
            return eq.astype(float)
        r = spec.params["r"]
        if np.any(xa < 1) or np.any(xb < 1):
            raise KernelError("weighted-sequence kernel is defined on positive integers")
        return eq * (xa.reshape(-1)[:, None] ** (-2.0 * r))
    # radial families
    phi = _profile(spec)
    xa = _as_points(XA, spec.dim)
    xb = _as_points(XB, spec.dim)
    if np.iscomplexobj(xa) or np.iscomplexobj(xb):
        diff = xa[:, None, :] - xb[None, :, :]
        r = np.sqrt(np.sum(np.abs(diff) ** 2, axis=-1))
    else:
        r = cdist(xa, xb)
    return phi(r)


def eval_kernel(spec: KernelSpec, x, y):
    """Evaluate k(x, y) at a single pair of points."""
    xa = np.asarray(x).reshape(1, -1)
    ya = np.asarray(y).reshape(1, -1)
    val = kernel_matrix(spec, xa, ya)[0, 0]
    if not np.iscomplexobj(val):
        return float(val)
    return complex(val)


def kernel_diag_value(spec: KernelSpec, x) -> float:
    """k(x, x); equals phi(0) for radial families independently of x."""
    return float(np.real(eval_kernel(spec, x, x)))


def kernel_lipschitz_constant(spec: KernelSpec):
    """A constant C with |k(x,y) - k(x~,y~)| <= C(||x-x~|| + ||y-y~||).

    Returns None ("unavailable") for families without an implemented bound,
    e.g. the discontinuous discrete-delta kernel.  For Wendland kernels the
    bound is sigma * sum_{l>=1} |l a_l| over the polynomial coefficients,
    which dominates sup|p'| on [0,1]; for the Gaussian it is the exact
    sup of |phi'|; for Matern (nu >= 1) the sup is located numerically.
    """
    fam = spec.family
    sigma = spec.params.get("sigma", 1.0)
    if fam == "wendland":
        poly = spec.wendland()
        bound = sum(abs(j * c) for j, c in enumerate(poly.coeffs))
        return sigma * float(bound)
    if fam == "gaussian-rbf":
        return sigma * math.sqrt(2.0 / math.e)
    if fam == "matern":
        nu = spec.nu
        if nu < 1:
            return None
        # |d/dr phi| = sigma * 2^(1-nu)/Gamma(nu) * u^nu K_{nu-1}(u), u = sigma r
        const = 2.0 ** (1.0 - nu) / _gamma_fn(nu)

        def neg_deriv(u):
            if u <= 0:
                return 0.0
            return -const * u**nu * float(_bessel_kv(nu - 1.0, u))

        from scipy.optimize import minimize_scalar

        grid = np.linspace(1e-6, 10.0 + 4.0 * nu, 4001)
        vals = [neg_deriv(u) for u in grid]
        u0 = grid[int(np.argmin(vals))]
        res = minimize_scalar(
            neg_deriv, bounds=(max(u0 - 0.1, 1e-9), u0 + 0.1), method="bounded",
            options={"xatol": 1e-10},
        )
        return sigma * float(-res.fun)
    return None


_SPEC_RE = re.compile(r"^\s*([a-zA-Z0-9\-]+)\s*(?::(.*))?$")


def parse_complex(text: str) -> complex:
    """Parse a ``re+imi`` literal such as ``1.5+2.25i`` or ``-0.3-1i``."""
    body = text.strip()
    if not body.endswith("i"):
        return complex(float(body), 0.0)
    body = body[:-1]
    # split at the last sign that is not an exponent sign or a leading sign
    for pos in range(len(body) - 1, 0, -1):
        if body[pos] in "+-" and body[pos - 1] not in "eE":
            re_part, im_part = body[:pos], body[pos:]
            break
    else:
        re_part, im_part = "0", body
    if im_part in ("+", "-"):
        im_part += "1"
    return complex(float(re_part), float(im_part))


def format_complex(z: complex) -> str:
    """Format a complex number as the ``re+imi`` literal used in CSV files."""
    return f"{z.real:.17g}{z.imag:+.17g}i"


def _parse_value(text: str):
    text = text.strip()
    if text.endswith("i"):
        try:
            return parse_complex(text)
        except ValueError as exc:
            raise KernelError(f"cannot parse parameter value {text!r}") from exc
    try:
        f = float(text)
    except ValueError as exc:
        raise KernelError(f"cannot parse parameter value {text!r}") from exc
    if f == int(f) and "." not in text and "e" not in text.lower():
        return int(f)
    return f


def parse_kernel_spec(text: str) -> KernelSpec:
    """Parse the CLI grammar ``family:key=value,key=value`` (case-insensitive)."""
    m = _SPEC_RE.match(text.lower())
    if not m:
        raise KernelError(f"cannot parse kernel spec {text!r}")
    family = m.group(1)
    params = {}
    if m.group(2):
        for item in m.group(2).split(","):
            if not item.strip():
                continue
            if "=" not in item:
                raise KernelError(f"malformed parameter {item!r} in kernel spec")
            key, val = item.split("=", 1)
            params[key.strip()] = _parse_value(val)
    return KernelSpec(family=family, params=params)
