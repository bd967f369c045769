"""Dense generalized eigensolvers and perturbation certificates.

Hermitian-definite pencils B v = mu C v go through the Cholesky reduction
C = L L*, leaving a plain Hermitian eigenproblem for L^-1 B L^-*.  The
general pencil A g = lambda G g (Hermitian PSD G, arbitrary A) is solved by
eigenvalue truncation of G: the problem is reduced to the subspace spanned
by the eigenvectors of G above a relative threshold, where it becomes an
ordinary dense eigenproblem.  One truncation policy serves every place a
(pseudo)inverse of G appears; the default relative threshold is 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

DEFAULT_TRUNCATION = 1e-12


class LinalgError(ValueError):
    """Numerically invalid input to an eigensolver or certificate."""


@dataclass(frozen=True)
class GeneralizedEigResult:
    """Eigenpairs of a pencil plus the conditioning of the reduction.

    ``eigenvalues`` are ascending and real for Hermitian-definite pencils,
    complex and unordered for general pencils.  ``eigenvectors`` holds one
    eigenvector per column.  ``conditioning`` is the smallest eigenvalue of
    the right-hand-side matrix used in the reduction.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    conditioning: float


def _hermitize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def truncated_eig_basis(C: np.ndarray, threshold: float = DEFAULT_TRUNCATION,
                        rank: int | None = None):
    """Eigendecompose Hermitian PSD C and keep the dominant directions.

    Returns (U_r, sigma_r) with columns the retained eigenvectors and
    sigma_r the square roots of the retained eigenvalues (descending).
    Directions with eigenvalue <= threshold * max eigenvalue are dropped.
    """
    C = _hermitize(np.asarray(C))
    evals, evecs = sla.eigh(C)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if evals[0] <= 0:
        raise LinalgError("matrix has numerical rank 0")
    keep = evals > threshold * evals[0]
    if rank is not None:
        keep &= np.arange(len(evals)) < rank
    if not np.any(keep):
        raise LinalgError("requested rank exceeds numerical rank: no directions kept")
    return evecs[:, keep], np.sqrt(evals[keep])


def hermitian_definite_geig(B: np.ndarray, C: np.ndarray,
                            threshold: float = DEFAULT_TRUNCATION) -> GeneralizedEigResult:
    """Solve B v = mu C v for Hermitian B and Hermitian positive-definite C."""
    B = _hermitize(np.asarray(B))
    C = _hermitize(np.asarray(C))
    cmin = float(sla.eigh(C, eigvals_only=True, subset_by_index=[0, 0])[0])
    cmax = float(sla.eigh(C, eigvals_only=True,
                          subset_by_index=[C.shape[0] - 1, C.shape[0] - 1])[0])
    if cmin <= threshold * max(cmax, 0.0):
        raise LinalgError(
            f"C is indefinite or singular beyond tolerance: min eigenvalue {cmin:.3e}"
        )
    evals, evecs = sla.eigh(B, C)
    return GeneralizedEigResult(eigenvalues=evals, eigenvectors=evecs, conditioning=cmin)


def smallest_geig_pair(B: np.ndarray, C: np.ndarray,
                       threshold: float = DEFAULT_TRUNCATION):
    """Smallest eigenpair of the Hermitian pencil B v = mu C v.

    Near-singular C is handled by reduction to the dominant eigenspace of C,
    matching the global truncation policy.
    """
    B = _hermitize(np.asarray(B))
    U, sig = truncated_eig_basis(C, threshold)
    Q = U / sig
    M = _hermitize(Q.conj().T @ B @ Q)
    evals, evecs = sla.eigh(M, subset_by_index=[0, 0])
    v = Q @ evecs[:, 0]
    return float(evals[0]), v


def general_geig(A: np.ndarray, G: np.ndarray,
                 threshold: float = DEFAULT_TRUNCATION,
                 rank: int | None = None) -> GeneralizedEigResult:
    """Eigenpairs of A g = lambda G g via G-truncated inversion.

    Computes the eigenpairs of G^+ A, where G^+ is the eigenvalue-truncated
    pseudoinverse of G.  Eigenvectors are normalized to unit RKHS norm
    (g* G g = 1) where that norm is above the truncation floor; vectors in
    truncated null directions are left with unit 2-norm.
    """
    A = np.asarray(A)
    G = np.asarray(G)
    U, sig = truncated_eig_basis(G, threshold, rank)
    if U.shape[1] == G.shape[0] and rank is None:
        B = np.linalg.solve(G, A)  # full numerical rank: G^+ = G^-1
    else:
        Q = U / sig
        B = Q @ (Q.conj().T @ A)
    evals, vecs = np.linalg.eig(B)
    gmax = float(np.abs(G).max())
    for i in range(vecs.shape[1]):
        v = vecs[:, i]
        nrm2 = float(np.real(np.vdot(v, G @ v)))
        if nrm2 > 1e-14 * gmax * float(np.real(np.vdot(v, v))):
            vecs[:, i] = v / np.sqrt(nrm2)
    return GeneralizedEigResult(eigenvalues=evals, eigenvectors=vecs,
                                conditioning=float(sig[-1] ** 2))


def perturbed_geig_bound(normH: float, dH: float, dG: float, sigma_inf_G: float) -> float:
    """Eigenvalue perturbation certificate for the pencil H g = mu G g.

    Given a bound normH on ||H||, perturbation sizes dH >= ||H - H~|| and
    dG >= ||G - G~||, and sigma = smallest eigenvalue of G with dG < sigma,
    every generalized eigenvalue moves by at most
    dH/sigma + (normH + dH) dG / (sigma (sigma - dG)).
    """
    sigma = sigma_inf_G
    if dG >= sigma:
        raise LinalgError(
            f"certificate unavailable: dG = {dG} >= sigma_inf(G) = {sigma}"
        )
    return dH / sigma + (normH + dH) / (sigma * (sigma - dG)) * dG


def solve_least_squares(M: np.ndarray, beta: np.ndarray,
                        threshold: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """Minimize c* M c - 2 Re(c* beta) for Hermitian PSD M.

    Solved through the truncated eigen-inverse of M, so singular directions
    are simply dropped rather than raising.
    """
    M = _hermitize(np.asarray(M))
    beta = np.asarray(beta).reshape(-1)
    evals, evecs = sla.eigh(M)
    if evals[-1] <= 0:
        return np.zeros_like(beta)
    keep = evals > threshold * evals[-1]
    Uk = evecs[:, keep]
    return Uk @ ((Uk.conj().T @ beta) / evals[keep])
