"""Observable forecasting with certified error bounds.

A mode decomposition of the kernel section at the starting state,
k_{x0} ~ sum_i c_i psi_i over residual-verified eigenpairs (lam_i, psi_i),
turns the reproducing property into a forecast: the n-step prediction of an
observable g is sum_i conj(c_i) conj(lam_i)^n <g, psi_i>, and the a-priori
error is controlled by the fit defect delta, the uniform residual bound
eps_ver, and a bound K on ||K*||:

    |error| <= ||g|| ( delta K^n + eps_ver sum_i |c_i| sum_{j<=n} |lam_i|^(n-j) K^(j-1) ).

On the native space of a radial kernel, a densely defined Koopman operator
is automatically bounded with K = 1; for other kernels the caller must
supply the bound.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import SnapshotSet
from .gram import GramTriple
from .kernels import KernelSpec, kernel_diag_value, kernel_matrix
from .linalg import solve_least_squares, truncated_eig_basis
from .spectra import VerifiedEigenpair


class ForecastError(ValueError):
    """Invalid forecasting inputs."""


@dataclass(frozen=True)
class ForecastModel:
    """A fitted Perron-Frobenius mode decomposition at one starting state."""

    eigenpairs: Sequence[VerifiedEigenpair]
    c: np.ndarray
    delta: float
    eps_ver: float
    norm_kstar: float
    x0: np.ndarray
    psi: np.ndarray = field(repr=False)  # N x N_ver kernel-section coefficients

    @property
    def lams(self) -> np.ndarray:
        return np.array([p.lam for p in self.eigenpairs])


def fit_model(verified: Sequence[VerifiedEigenpair], gram: GramTriple,
              kernel: KernelSpec, snapshots: SnapshotSet, x0,
              norm_kstar: float | None = None) -> ForecastModel:
    """Least-squares fit of k_{x0} in the span of verified pseudoeigenfunctions.

    Assembles M_ki = <psi_i, psi_k> and beta_k = <k_{x0}, psi_k>, solves the
    normal equations through the truncated eigen-inverse, and evaluates the
    fit defect delta from the closed-form quadratic.
    """
    if not verified:
        raise ForecastError("need at least one verified eigenpair")
    if norm_kstar is None:
        norm_kstar = 1.0
        if not kernel.is_radial():
            warnings.warn(
                "norm_kstar defaulted to 1; this is justified for radial kernels "
                "(densely defined => bounded with norm 1) but must be supplied "
                "for other kernel families", stacklevel=2)
    x0 = np.asarray(x0).reshape(1, -1)
    Psi = np.column_stack([p.coeffs for p in verified])
    M = Psi.conj().T @ gram.G @ Psi
    b = kernel_matrix(kernel, x0, snapshots.X).reshape(-1)  # b_l = k(x0, x^(l))
    beta = Psi.conj().T @ b
    c = solve_least_squares(M, beta)
    k00 = kernel_diag_value(kernel, x0)
    delta2 = float(np.real(k00 - np.vdot(c, beta) - np.vdot(beta, c)
                           + np.vdot(c, M @ c)))
    if delta2 < -1e-10 * max(k00, 1.0):
        raise ForecastError(f"fit defect is negative beyond round-off: {delta2:.3e}")
    delta = float(np.sqrt(max(delta2, 0.0)))
    eps_ver = max(p.residual for p in verified)
    return ForecastModel(eigenpairs=list(verified), c=c, delta=delta,
                         eps_ver=eps_ver, norm_kstar=float(norm_kstar),
                         x0=x0.reshape(-1), psi=Psi)


def predict(model: ForecastModel, g_values, n: int) -> complex:
    """n-step prediction of the observable with the given snapshot-state values.

    <g, psi_i> = sum_j conj(psi_ij) g(x^(j)) by the reproducing property, so
    knowing g at the snapshot states suffices.
    """
    if n < 0:
        raise ForecastError("step count must be >= 0")
    g_values = np.asarray(g_values).reshape(-1)
    if len(g_values) != model.psi.shape[0]:
        raise ForecastError(
            f"observable has {len(g_values)} values, expected {model.psi.shape[0]}")
    ip = model.psi.conj().T @ g_values  # <g, psi_i>
    lams = model.lams
    val = np.sum(np.conj(model.c) * np.conj(lams) ** n * ip)
    return complex(val)


def _geometric_sum(rho: float, K: float, n: int) -> float:
    """sum_{j=1..n} rho^(n-j) K^(j-1), by the stable closed form."""
    if n == 0:
        return 0.0
    if abs(rho - K) < 1e-14 * max(rho, K, 1.0):
        return n * K ** (n - 1)
    return (rho**n - K**n) / (rho - K)


def error_bound(model: ForecastModel, norm_g: float, n: int) -> float:
    """A-priori bound on |g(F^n(x0)) - prediction| for ||g|| <= norm_g."""
    if n < 0:
        raise ForecastError("step count must be >= 0")
    K = model.norm_kstar
    acc = 0.0
    for ci, lam in zip(model.c, model.lams):
        acc += abs(ci) * _geometric_sum(abs(lam), K, n)
    return float(norm_g * (model.delta * K**n + model.eps_ver * acc))


def project_state_observables(gram: GramTriple, snapshots: SnapshotSet,
                              threshold: float = 1e-12) -> np.ndarray:
    """Kernel-section coefficients of the state observables: C = G^+ X.

    Column dim holds the least-squares representation of x -> x_dim in the
    span of the kernel sections, used for full-state trajectory forecasts.
    """
    U, sig = truncated_eig_basis(gram.G, threshold)
    Q = U / sig
    return Q @ (Q.conj().T @ snapshots.X)


def rkhs_norm(coeffs, gram: GramTriple) -> float:
    """Exact RKHS norm sqrt(c* G c) of an observable in kernel-section form."""
    c = np.asarray(coeffs).reshape(-1)
    val = float(np.real(np.vdot(c, gram.G @ c)))
    return float(np.sqrt(max(val, 0.0)))
