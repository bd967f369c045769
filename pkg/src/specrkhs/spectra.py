"""Residual-verified eigenpairs and approximate-point pseudospectra.

Everything rests on the exactly computable relative residual

    res*(lam, g)^2 = g*(R - lam A* - conj(lam) A + |lam|^2 G) g / (g* G g)

for g expanded in kernel sections.  A residual below epsilon certifies that
lam lies in the epsilon-approximate-point pseudospectrum of the
Perron-Frobenius operator; minimizing it over g gives the grid function
tau(z) whose sublevel set is the computed pseudospectrum.  The Koopman-side
pseudospectrum uses rectangular truncations of

    L_N1(z) = A G^+ A* - z A - conj(z) A* + |z|^2 G

with the leading N2 x N2 block solved against the matching block of G.

Ill-conditioned G is handled everywhere by one policy: reduce to the
eigenspace of G above a relative threshold (default 1e-12), where the
pencil becomes an ordinary Hermitian eigenproblem.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .gram import CompressedBasis, GramTriple
from .linalg import DEFAULT_TRUNCATION, general_geig, truncated_eig_basis

_EPS = np.finfo(float).eps


class SpectraError(ValueError):
    """Degenerate direction or a quadratic form broken beyond round-off."""


@dataclass(frozen=True)
class VerifiedEigenpair:
    """Candidate eigenpair with its exactly computed RKHS residual."""

    lam: complex
    coeffs: np.ndarray
    residual: float
    verified: bool


@dataclass(frozen=True)
class PseudospectrumResult:
    """tau(z) over a grid plus the flagged sublevel set and optional witnesses.

    ``flagged`` is a boolean mask over ``grid``; for the Perron-Frobenius
    variant a point is flagged when tau(z) < epsilon, for the Koopman variant
    when tau(z) + 1/N2 <= epsilon.  ``witnesses`` maps flagged grid indices
    to pseudoeigenfunction coefficient vectors.  Per-point numerical failures
    are recorded in ``errors`` instead of aborting the sweep.
    """

    grid: np.ndarray
    tau: np.ndarray
    epsilon: float
    flagged: np.ndarray
    witnesses: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    variant: str = "pf"
    n2: Optional[int] = None

    @property
    def flagged_points(self) -> np.ndarray:
        return self.grid[self.flagged]


def _clamp_quadratic(num: float, gate: float, what: str) -> float:
    if num >= 0.0:
        return num
    if num >= -gate:
        return 0.0
    raise SpectraError(
        f"{what} is negative beyond round-off tolerance ({num:.3e} < {-gate:.3e}); "
        "the Gram triple is likely broken"
    )


def _quadratic_gate(lam: complex, g: np.ndarray, gram: GramTriple, den: float) -> float:
    # round-off floor for the quadratic form: eps * N * ||H||_max * ||g||_2^2,
    # widened beyond 1e-12*den because ||g||_2 can dwarf the RKHS norm when G
    # is ill conditioned
    scale_h = (np.abs(gram.R).max() + 2 * abs(lam) * np.abs(gram.A).max()
               + abs(lam) ** 2 * np.abs(gram.G).max())
    g2 = float(np.real(np.vdot(g, g)))
    return max(1e-12 * den, 64.0 * _EPS * gram.N * scale_h * g2)


def residual(lam: complex, g, gram: GramTriple) -> float:
    """Relative residual ||(K* - lam) g|| / ||g|| in the RKHS norm."""
    g = np.asarray(g).reshape(-1)
    if len(g) != gram.N:
        raise SpectraError(f"coefficient length {len(g)} does not match N = {gram.N}")
    Gg = gram.G @ g
    den = float(np.real(np.vdot(g, Gg)))
    floor = 1e-14 * max(float(np.abs(gram.G).max()), 1e-300) * float(np.real(np.vdot(g, g)))
    if den <= floor:
        raise SpectraError("degenerate direction: g*Gg is below the truncation floor")
    num = float(np.real(
        np.vdot(g, gram.R @ g)
        - lam * np.vdot(g, gram.A.conj().T @ g)
        - np.conj(lam) * np.vdot(g, gram.A @ g)
        + abs(lam) ** 2 * den
    ))
    num = _clamp_quadratic(num, _quadratic_gate(lam, g, gram, den), "residual numerator")
    return float(np.sqrt(num / den))


def verify_eigenpairs(gram: GramTriple, epsilon: float,
                      threshold: float = DEFAULT_TRUNCATION,
                      rank: Optional[int] = None) -> list[VerifiedEigenpair]:
    """Candidate eigenpairs of A g = lam G g with residual certificates.

    Eigenpairs are normalized to unit RKHS norm, residuals computed from the
    quadratic form, and the list returned sorted by residual (ascending);
    ``verified`` marks residual <= epsilon.
    """
    res = general_geig(gram.A, gram.G, threshold=threshold, rank=rank)
    lams, V = res.eigenvalues, res.eigenvectors
    GV = gram.G @ V
    AV = gram.A @ V
    AHV = gram.A.conj().T @ V
    RV = gram.R @ V
    den = np.real(np.sum(np.conj(V) * GV, axis=0))
    gAg = np.sum(np.conj(V) * AV, axis=0)
    gAHg = np.sum(np.conj(V) * AHV, axis=0)
    gRg = np.real(np.sum(np.conj(V) * RV, axis=0))
    gmax = float(np.abs(gram.G).max())
    out = []
    for i, lam in enumerate(lams):
        v2 = float(np.real(np.vdot(V[:, i], V[:, i])))
        if den[i] <= 1e-14 * gmax * v2:
            # truncated null direction of G: no usable RKHS norm
            out.append(VerifiedEigenpair(lam=complex(lam), coeffs=V[:, i].copy(),
                                         residual=float("inf"), verified=False))
            continue
        num = float(gRg[i] - np.real(lam * gAHg[i]) - np.real(np.conj(lam) * gAg[i])
                    + abs(lam) ** 2 * den[i])
        num = _clamp_quadratic(num, _quadratic_gate(lam, V[:, i], gram, den[i]),
                               "residual numerator")
        r = float(np.sqrt(num / den[i]))
        out.append(VerifiedEigenpair(lam=complex(lam), coeffs=V[:, i].copy(),
                                     residual=r, verified=r <= epsilon))
    out.sort(key=lambda p: p.residual)
    return out


def default_grid(N: int) -> np.ndarray:
    """The lattice (1/N)(Z + iZ) intersected with the closed disk of radius N."""
    if N < 1:
        raise SpectraError("grid parameter must be >= 1")
    n2 = N * N
    pts = []
    for k in range(-n2, n2 + 1):
        for l in range(-n2, n2 + 1):
            if k * k + l * l <= n2 * n2:
                pts.append(complex(k, l) / N)
    pts.sort(key=lambda z: (z.real, z.imag))
    return np.array(pts)


def _parallel_map(fn, items, threads: Optional[int]):
    if threads is None:
        threads = int(os.environ.get("SPECRKHS_THREADS", "0")) or (os.cpu_count() or 1)
    if threads <= 1 or len(items) < 4:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _reduced_pencil(gram: GramTriple, rank, threshold):
    """Project (R, A) onto the G-orthonormal basis: E(z) = Rt - z At* - z~ At + |z|^2 I."""
    U, sig = truncated_eig_basis(gram.G, threshold, rank=rank)
    C = U / sig
    Rt = C.conj().T @ gram.R @ C
    At = C.conj().T @ gram.A @ C
    kappa = float((sig[0] / sig[-1]) ** 2)
    return C, 0.5 * (Rt + Rt.conj().T), At, kappa


def _sweep(grid, build_E, term_scale, C, kappa, store_witnesses, threads, flag_fn):
    grid = np.asarray(grid, dtype=complex).reshape(-1)
    if grid.size == 0:
        raise SpectraError("grid must be non-empty")

    def one(idx_z):
        idx, z = idx_z
        try:
            E = build_E(z)
            # gate on the magnitude of the terms entering E (the assembled
            # matrix may cancel to 0), widened by the conditioning of the
            # retained basis which amplifies round-off in the projections
            gate = max(1e-12, C.shape[1] * _EPS * kappa) * max(term_scale(z), 1e-300)
            if store_witnesses:
                vals, vecs = sla.eigh(E, subset_by_index=[0, 0])
                mu = _clamp_quadratic(float(vals[0]), gate, f"pencil eigenvalue at z={z}")
                return idx, float(np.sqrt(mu)), vecs[:, 0], None
            vals = sla.eigh(E, eigvals_only=True, subset_by_index=[0, 0])
            mu = _clamp_quadratic(float(vals[0]), gate, f"pencil eigenvalue at z={z}")
            return idx, float(np.sqrt(mu)), None, None
        except Exception as exc:  # per-point failures must not kill the sweep
            return idx, float("nan"), None, str(exc)

    results = _parallel_map(one, list(enumerate(grid)), threads)
    tau = np.full(grid.shape, np.nan)
    witnesses, errors = {}, {}
    flagged = np.zeros(grid.shape, dtype=bool)
    for idx, t, w, err in results:
        tau[idx] = t
        if err is not None:
            errors[idx] = err
            continue
        if flag_fn(t):
            flagged[idx] = True
            if w is not None:
                witnesses[idx] = C @ w
    return grid, tau, flagged, witnesses, errors


def pseudospectrum_pf(gram: GramTriple, grid, epsilon: float,
                      rank: Optional[int] = None,
                      threshold: float = DEFAULT_TRUNCATION,
                      store_witnesses: bool = True,
                      threads: Optional[int] = None) -> PseudospectrumResult:
    """Approximate-point pseudospectrum of the Perron-Frobenius operator.

    For each grid point z, tau(z) is the square root of the smallest
    eigenvalue of the pencil (R - z A* - conj(z) A + |z|^2 G) v = mu G v,
    solved on the retained eigenspace of G.  Points with tau(z) < epsilon
    are flagged and (optionally) given pseudoeigenfunction witnesses.
    """
    C, Rt, At, kappa = _reduced_pencil(gram, rank, threshold)
    eye = np.eye(C.shape[1])
    nR = float(np.linalg.norm(Rt, "fro"))
    nA = float(np.linalg.norm(At, "fro"))

    def build_E(z):
        return Rt - z * At.conj().T - np.conj(z) * At + abs(z) ** 2 * eye

    def term_scale(z):
        return nR + 2 * abs(z) * nA + abs(z) ** 2 * np.sqrt(C.shape[1])

    grid, tau, flagged, wit, errs = _sweep(grid, build_E, term_scale, C, kappa,
                                           store_witnesses, threads,
                                           lambda t: t < epsilon)
    return PseudospectrumResult(grid=grid, tau=tau, epsilon=epsilon, flagged=flagged,
                                witnesses=wit, errors=errs, variant="pf")


def residual_compressed(lam: complex, g_tilde, basis: CompressedBasis,
                        gram: GramTriple) -> float:
    """Residual of the compressed candidate (lam, U_r Sigma_r^-1 g~).

    By orthonormality of the u-basis the denominator is just ||g~||^2.
    """
    g_tilde = np.asarray(g_tilde).reshape(-1)
    if len(g_tilde) != basis.r:
        raise SpectraError(f"coefficient length {len(g_tilde)} does not match rank {basis.r}")
    den = float(np.real(np.vdot(g_tilde, g_tilde)))
    if den <= 0.0:
        raise SpectraError("degenerate direction: zero compressed coefficients")
    g = basis.C @ g_tilde
    num = float(np.real(
        np.vdot(g, gram.R @ g)
        - lam * np.vdot(g, gram.A.conj().T @ g)
        - np.conj(lam) * np.vdot(g, gram.A @ g)
        + abs(lam) ** 2 * np.real(np.vdot(g, gram.G @ g))
    ))
    num = _clamp_quadratic(num, _quadratic_gate(lam, g, gram, den), "residual numerator")
    return float(np.sqrt(num / den))


def pseudospectrum_koop(gram: GramTriple, n1: Optional[int], n2: int, grid,
                        epsilon: float,
                        threshold: float = DEFAULT_TRUNCATION,
                        store_witnesses: bool = False,
                        threads: Optional[int] = None) -> PseudospectrumResult:
    """Approximate-point pseudospectrum of the Koopman operator (rectangular truncation).

    Forms L_N1(z) = A G^+ A* - z A - conj(z) A* + |z|^2 G on the full N1
    snapshots, truncates to the leading N2 x N2 block (dataset order), and
    solves the pencil against the N2 x N2 block of G.  A grid point is
    flagged when tau(z) + 1/N2 <= epsilon.
    """
    if n1 is None:
        n1 = gram.N
    if n1 != gram.N:
        raise SpectraError(f"gram has size {gram.N}, expected N1 = {n1}")
    if not 1 <= n2 <= n1:
        raise SpectraError(f"need 1 <= N2 <= N1, got N2 = {n2}")
    U, sig = truncated_eig_basis(gram.G, threshold)
    AC = gram.A @ (U / sig)
    P = AC @ AC.conj().T  # A G^+ A*, Hermitian PSD by construction
    Pb = P[:n2, :n2]
    Ab = gram.A[:n2, :n2]
    Gb = gram.G[:n2, :n2]
    Ub, sigb = truncated_eig_basis(Gb, threshold)
    Cb = Ub / sigb
    Pt = Cb.conj().T @ Pb @ Cb
    Pt = 0.5 * (Pt + Pt.conj().T)
    Abt = Cb.conj().T @ Ab @ Cb
    eye = np.eye(Cb.shape[1])
    nP = float(np.linalg.norm(Pt, "fro"))
    nA = float(np.linalg.norm(Abt, "fro"))
    kappa = max(float((sig[0] / sig[-1]) ** 2), float((sigb[0] / sigb[-1]) ** 2))

    def build_E(z):
        return Pt - z * Abt - np.conj(z) * Abt.conj().T + abs(z) ** 2 * eye

    def term_scale(z):
        return nP + 2 * abs(z) * nA + abs(z) ** 2 * np.sqrt(Cb.shape[1])

    grid, tau, flagged, wit, errs = _sweep(grid, build_E, term_scale, Cb, kappa,
                                           store_witnesses, threads,
                                           lambda t: t + 1.0 / n2 <= epsilon)
    return PseudospectrumResult(grid=grid, tau=tau, epsilon=epsilon, flagged=flagged,
                                witnesses=wit, errors=errs, variant="koop", n2=n2)
