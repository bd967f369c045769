"""Gram matrices G, A, R and the compressed kEDMD basis.

The triple drives every spectral computation:

    G_jk = k(x^(k), x^(j))   inner products of kernel sections at pre-states,
    A_jk = k(y^(k), x^(j))   sections pushed forward once against pre-states,
    R_jk = k(y^(k), y^(j))   pushed-forward sections against each other.

For stochastic systems the pushforward is an expectation over successors and
A, R are Monte-Carlo averages; Markov chains additionally get an exact path
that integrates the transition rows analytically.

G and R are stored symmetrized ((M + M*)/2): kernel round-off otherwise
breaks Hermitian solvers downstream.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .dynamics import SnapshotSet, SystemSpec, transition_row
from .kernels import KernelSpec, kernel_matrix
from .linalg import DEFAULT_TRUNCATION, LinalgError, truncated_eig_basis

_MAGIC = b"SPECRKHS-GRAM\x00\x00\x00"


class GramError(ValueError):
    """Invalid snapshot/kernel combination or a broken Gram triple."""


def _hermitize(M):
    return 0.5 * (M + M.conj().T)


@dataclass(frozen=True)
class GramTriple:
    """The N x N matrices (G, A, R) plus provenance metadata."""

    G: np.ndarray
    A: np.ndarray
    R: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("G", "A", "R"):
            M = np.asarray(getattr(self, name))
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise GramError(f"{name} must be square")
            if not np.all(np.isfinite(M)):
                raise GramError(f"{name} contains non-finite kernel values")
            object.__setattr__(self, name, M)
        if not (self.G.shape == self.A.shape == self.R.shape):
            raise GramError("G, A, R must share one size")

    @property
    def N(self) -> int:
        return self.G.shape[0]

    def prefix(self, n: int) -> "GramTriple":
        """Leading n x n sub-triple (nested snapshot prefix)."""
        if not 1 <= n <= self.N:
            raise GramError(f"prefix size {n} out of range")
        return GramTriple(self.G[:n, :n].copy(), self.A[:n, :n].copy(),
                          self.R[:n, :n].copy(), dict(self.provenance, prefix=n))


def _snapshot_hash(snapshots: SnapshotSet) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(snapshots.X).tobytes())
    if snapshots.is_stochastic:
        h.update(np.ascontiguousarray(snapshots.Y_samples).tobytes())
    else:
        h.update(np.ascontiguousarray(snapshots.Y).tobytes())
    return h.hexdigest()[:16]


def stochastic_A(snapshots: SnapshotSet, kernel: KernelSpec) -> np.ndarray:
    """Monte-Carlo estimator A_jk = (1/S) sum_s k(F_s(x^(k)), x^(j))."""
    Ys = snapshots.Y_samples
    n, S, d = Ys.shape
    flat = kernel_matrix(kernel, Ys.reshape(n * S, d), snapshots.X)
    return (flat.reshape(n, S, n).sum(axis=1) / S).T


def stochastic_R(snapshots: SnapshotSet, kernel: KernelSpec) -> np.ndarray:
    """Monte-Carlo estimator of R averaged over all S^2 ordered sample pairs.

    The s = s' diagonal pairs are included: the estimator carries an O(1/S)
    bias against ||E k_{F(x)}||^2 but avoids the O(1) bias of the matched
    same-sample estimator; the exact Markov path serves as the oracle.
    """
    Ys = snapshots.Y_samples
    n, S, d = Ys.shape
    flat = Ys.reshape(n * S, d)
    R = np.empty((n, n), dtype=kernel_matrix(kernel, Ys[0, :1], Ys[0, :1]).dtype)
    for k in range(n):
        Kk = kernel_matrix(kernel, Ys[k], flat)  # S x (n S)
        R[:, k] = Kk.reshape(S, n, S).sum(axis=(0, 2)) / S**2
    return _hermitize(R)


def build_gram(snapshots: SnapshotSet, kernel: KernelSpec) -> GramTriple:
    """Assemble (G, A, R) from snapshots by direct kernel evaluation.

    Stochastic snapshots (S > 1) use the Monte-Carlo estimators
    :func:`stochastic_A` and :func:`stochastic_R`.
    """
    X = snapshots.X
    G = _hermitize(kernel_matrix(kernel, X, X).T)
    if not snapshots.is_stochastic:
        Y = snapshots.Y
        A = kernel_matrix(kernel, Y, X).T
        R = _hermitize(kernel_matrix(kernel, Y, Y).T)
    else:
        A = stochastic_A(snapshots, kernel)
        R = stochastic_R(snapshots, kernel)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(A)) and np.all(np.isfinite(R))):
        raise GramError("kernel evaluation produced non-finite values")
    prov = {"kernel": str(kernel), "snapshots": _snapshot_hash(snapshots),
            "N": snapshots.N, "S": snapshots.S}
    return GramTriple(G=G, A=A, R=R, provenance=prov)


def build_gram_markov_exact(chain: SystemSpec, states, kernel: KernelSpec) -> GramTriple:
    """Exact (G, A, R) for a Markov chain, bypassing Monte-Carlo sampling.

    Uses K*k_x = sum_y p(x,y) k_y, so A_jk = sum_y p(x^(k),y) k(y, x^(j)) and
    R_jk = sum_{y,y'} p(x^(k),y) p(x^(j),y') k(y, y').  Transition rows are
    tridiagonal, so P is assembled sparse; diagonal kernels stay sparse
    throughout.
    """
    states = np.asarray(states, dtype=float).reshape(-1)
    n = len(states)
    idx = {int(s): i for i, s in enumerate(states)}
    reach = sorted({int(s) + d for s in states for d in (-1, 0, 1)})
    ridx = {s: i for i, s in enumerate(reach)}
    rows, cols, vals = [], [], []
    for i, s in enumerate(states):
        targets, probs = transition_row(chain, int(s))
        for t, p in zip(targets, probs):
            rows.append(i)
            cols.append(ridx[int(t)])
            vals.append(float(p))
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n, len(reach)))
    reach_arr = np.asarray(reach, dtype=float).reshape(-1, 1)
    Xcol = states.reshape(-1, 1)
    if kernel.family in ("discrete-delta", "weighted-sequence"):
        if kernel.family == "discrete-delta":
            wX = np.ones(n)
            wY = np.ones(len(reach))
        else:
            r = kernel.params["r"]
            wX = states ** (-2.0 * r)
            wY = np.asarray(reach, dtype=float) ** (-2.0 * r)
        G = np.diag(wX)
        # K_yx[y, j] = k(y, x_j): nonzero only where y coincides with a state
        sel_rows = [ridx[int(s)] for s in states]
        Kyx = sp.csr_matrix((wX, (sel_rows, np.arange(n))), shape=(len(reach), n))
        A = np.asarray((P @ Kyx).todense()).T
        R = np.asarray((P @ sp.diags(wY) @ P.T).todense())
    else:
        G = kernel_matrix(kernel, Xcol, Xcol).T
        Kyx = kernel_matrix(kernel, reach_arr, Xcol)
        A = np.asarray(P @ Kyx).T
        Kyy = kernel_matrix(kernel, reach_arr, reach_arr)
        R = np.asarray(P @ Kyy @ P.T)
    prov = {"kernel": str(kernel), "chain": chain.kind, "N": n, "exact": True}
    return GramTriple(G=_hermitize(G), A=A, R=_hermitize(R), provenance=prov)


@dataclass(frozen=True)
class CompressedBasis:
    """Rank-r kEDMD basis u_j = sum_i k_{x^(i)} [U_r]_il [Sigma_r^-1]_lj.

    The u_j are orthonormal in the RKHS; ``khat`` is the compressed kEDMD
    matrix whose transpose represents the Perron-Frobenius operator in the
    u-basis.
    """

    r: int
    U_r: np.ndarray
    sigma_r: np.ndarray
    khat: np.ndarray

    @property
    def C(self) -> np.ndarray:
        """N x r map from u-coefficients to kernel-section coefficients."""
        return self.U_r / self.sigma_r

    @property
    def pf_matrix(self) -> np.ndarray:
        """khat^T, the Galerkin matrix of K* in the orthonormal u-basis."""
        return self.khat.T


def compress(gram: GramTriple, r: Optional[int] = None,
             threshold: float = DEFAULT_TRUNCATION) -> CompressedBasis:
    """Eigendecompose G and compress the pencil to the dominant r directions."""
    if r is not None and not 1 <= r <= gram.N:
        raise GramError(f"rank {r} out of range 1..{gram.N}")
    try:
        U, sig = truncated_eig_basis(gram.G, threshold, rank=r)
    except LinalgError as exc:
        raise GramError(str(exc)) from exc
    C = U / sig
    khat_t = C.conj().T @ gram.A @ C
    return CompressedBasis(r=U.shape[1], U_r=U, sigma_r=sig, khat=khat_t.T)


def to_u_basis(coeffs, basis: CompressedBasis, gram: GramTriple) -> np.ndarray:
    """Convert kernel-section coefficients c to u-basis coefficients <g, u_j>."""
    c = np.asarray(coeffs).reshape(-1)
    if len(c) != gram.N:
        raise GramError(f"coefficient length {len(c)} does not match N = {gram.N}")
    return basis.C.conj().T @ (gram.G @ c)


# -- binary container ---------------------------------------------------------

def save_gram(path, gram: GramTriple):
    """Serialize to the SPECRKHS-GRAM container (column-major float64)."""
    complex_flag = any(np.iscomplexobj(M) for M in (gram.G, gram.A, gram.R))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", gram.N))
        fh.write(struct.pack("B", 1 if complex_flag else 0))
        for M in (gram.G, gram.A, gram.R):
            arr = np.asfortranarray(M, dtype=complex if complex_flag else float)
            fh.write(arr.tobytes(order="F"))
        fh.write(json.dumps(gram.provenance, sort_keys=True).encode("utf-8"))


def load_gram(path) -> GramTriple:
    """Load a SPECRKHS-GRAM container written by :func:`save_gram`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:16] != _MAGIC:
        raise GramError("not a SPECRKHS-GRAM container")
    (n,) = struct.unpack("<Q", blob[16:24])
    complex_flag = blob[24]
    itemsize = 16 if complex_flag else 8
    dtype = np.complex128 if complex_flag else np.float64
    off = 25
    mats = []
    for _ in range(3):
        nbytes = n * n * itemsize
        arr = np.frombuffer(blob[off: off + nbytes], dtype=dtype).reshape((n, n), order="F")
        mats.append(arr.copy())
        off += nbytes
    provenance = json.loads(blob[off:].decode("utf-8")) if off < len(blob) else {}
    return GramTriple(G=mats[0], A=mats[1], R=mats[2], provenance=provenance)
