"""Built-in dynamical systems and snapshot generation.

Deterministic maps (Gauss iterated map, Mobius isometries of the Poincare
disk, identity, user-supplied maps), damped ODE flows advanced by fixed-step
classical RK4, and reversible Markov chains on the integers with stochastic
sampling.  Snapshot pairs (x, y = F(x)) feed the Gram assembly; stochastic
systems produce several independent successors per state.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import format_complex, parse_complex

_RK4_SUBSTEPS = 20

KINDS = (
    "gauss-map",
    "duffing",
    "lorenz",
    "mobius",
    "random-walk",
    "random-walk-perturbed",
    "identity",
    "custom-map",
)

_ODE_KINDS = {"duffing", "lorenz"}
_STOCHASTIC_KINDS = {"random-walk", "random-walk-perturbed"}


class DynamicsError(ValueError):
    """Invalid system specification, domain violation, or sampling failure."""


@dataclass(frozen=True)
class SystemSpec:
    """A dynamical system F together with its parameters.

    ``timestep`` applies to the ODE kinds (the map is the time-Delta-t flow);
    ``seed`` only matters for the perturbed random walk, whose perturbation
    coefficients are drawn once at construction and replayed from the seed.
    """

    kind: str
    params: dict = field(default_factory=dict)
    timestep: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DynamicsError(f"unknown system kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))
        self._validate()

    def _validate(self):
        p = self.params
        kind = self.kind
        if kind == "gauss-map":
            alpha = p.setdefault("alpha", 2.0)
            beta = p.setdefault("beta", -1.0 - np.exp(-2.0))
            if (alpha, beta) != (2.0, -1.0 - np.exp(-2.0)):
                grid = np.linspace(-1.0 + 1e-6, -1e-6, 1000)
                img = np.exp(-alpha * grid**2) + beta
                if img.min() <= -1.0 or img.max() >= 0.0:
                    raise DynamicsError(
                        "custom Gauss-map parameters do not map (-1,0) into itself"
                    )
        elif kind == "duffing":
            alpha = p.setdefault("alpha", 1.0)
            beta = p.setdefault("beta", 1.0)
            delta = p.setdefault("delta", 0.2)
            if alpha <= 0 or beta <= 0 or delta <= 0:
                raise DynamicsError("Duffing requires alpha, beta, delta > 0")
            if not self.timestep < 1.0 / (4.0 * delta):
                raise DynamicsError(
                    f"Duffing timestep must be < 1/(4*delta) = {1.0 / (4 * delta)}"
                )
        elif kind == "lorenz":
            p.setdefault("sigma", 10.0)
            p.setdefault("rho", 28.0)
            p.setdefault("beta", 8.0 / 3.0)
        elif kind == "mobius":
            a = complex(p.get("a", 1.0))
            b = complex(p.get("b", 0.0))
            p["a"], p["b"] = a, b
            if abs(abs(a) ** 2 - abs(b) ** 2 - 1.0) > 1e-12:
                raise DynamicsError("Mobius map requires |a|^2 - |b|^2 = 1")
        elif kind == "random-walk-perturbed":
            rng = np.random.default_rng(self.seed)
            draw = rng.uniform(-0.125, 0.125, size=(9, 2))
            p.setdefault("perturbation", draw)
        elif kind == "identity":
            p.setdefault("d", 1)
        elif kind == "custom-map":
            if not callable(p.get("fn")):
                raise DynamicsError("custom-map requires a callable 'fn' parameter")

    @property
    def is_stochastic(self) -> bool:
        return self.kind in _STOCHASTIC_KINDS

    @property
    def dim(self) -> int:
        return {"gauss-map": 1, "duffing": 2, "lorenz": 3, "mobius": 1,
                "random-walk": 1, "random-walk-perturbed": 1}.get(
                    self.kind, int(self.params.get("d", 1)))


def _vector_field(spec: SystemSpec) -> Callable[[np.ndarray], np.ndarray]:
    p = spec.params
    if spec.kind == "duffing":
        alpha, beta, delta = p["alpha"], p["beta"], p["delta"]

        def f(x):
            u, v = x
            return np.array([v, -delta * v - alpha * u - beta * u**3])

        return f
    if spec.kind == "lorenz":
        sig, rho, bet = p["sigma"], p["rho"], p["beta"]

        def f(x):
            u1, u2, u3 = x
            return np.array([sig * (u2 - u1), u1 * (rho - u3) - u2, u1 * u2 - bet * u3])

        return f
    raise DynamicsError(f"{spec.kind} has no vector field")


def _rk4(f, x: np.ndarray, dt: float, substeps: int = _RK4_SUBSTEPS) -> np.ndarray:
    h = dt / substeps
    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def transition_row(spec: SystemSpec, state: int) -> tuple[np.ndarray, np.ndarray]:
    """Support states and transition probabilities p(state, .) of a chain."""
    if spec.kind == "random-walk":
        return np.array([state - 1, state, state + 1]), np.array([1 / 3, 1 / 3, 1 / 3])
    if spec.kind == "random-walk-perturbed":
        targets = np.array([state - 1, state, state + 1])
        if -4 <= state <= 4:
            a1, a2 = spec.params["perturbation"][state + 4]
            probs = np.array([0.25 + a1, 0.5 - a1 - a2, 0.25 + a2])
        else:
            probs = np.array([1 / 3, 1 / 3, 1 / 3])
        return targets, probs
    raise DynamicsError(f"{spec.kind} is not a Markov chain")


def transition_gram_row_exact(spec: SystemSpec, state, states) -> np.ndarray:
    """Exact transition probabilities p(state, .) restricted to ``states``.

    Bypasses Monte-Carlo sampling; used by the exact-Gram path for Markov
    chains.
    """
    state = int(np.asarray(state).reshape(-1)[0])
    targets, probs = transition_row(spec, state)
    lookup = {int(t): float(p) for t, p in zip(targets, probs)}
    return np.array([lookup.get(int(np.asarray(s).reshape(-1)[0]), 0.0) for s in states])


def step(spec: SystemSpec, x, rng: Optional[np.random.Generator] = None):
    """Advance one step: F(x) for deterministic kinds, one sample for chains."""
    kind = spec.kind
    p = spec.params
    if kind == "identity":
        return np.array(x, dtype=float, copy=True) if not np.iscomplexobj(x) else np.array(x, copy=True)
    if kind == "gauss-map":
        xv = float(np.asarray(x).reshape(-1)[0])
        if not -1.0 <= xv <= 0.0:
            raise DynamicsError(f"Gauss map state {xv} outside (-1, 0)")
        return np.array([np.exp(-p["alpha"] * xv**2) + p["beta"]])
    if kind == "mobius":
        z = complex(np.asarray(x).reshape(-1)[0])
        if abs(z) >= 1.0:
            raise DynamicsError(f"Mobius state {z} outside the unit disk")
        a, b = p["a"], p["b"]
        return np.array([(a * z + b) / (np.conj(b) * z + np.conj(a))])
    if kind in _ODE_KINDS:
        xv = np.asarray(x, dtype=float).reshape(-1)
        return _rk4(_vector_field(spec), xv, spec.timestep)
    if kind in _STOCHASTIC_KINDS:
        if rng is None:
            raise DynamicsError("stochastic systems require an rng state")
        state = int(np.asarray(x).reshape(-1)[0])
        targets, probs = transition_row(spec, state)
        return np.array([float(targets[rng.choice(len(targets), p=probs)])])
    if kind == "custom-map":
        return np.asarray(p["fn"](np.asarray(x).reshape(-1)))
    raise DynamicsError(f"cannot step system {kind!r}")


@dataclass(frozen=True)
class SnapshotSet:
    """Paired snapshots: pre-states X (N x d) and successors.

    Deterministic systems carry Y (N x d); stochastic ones carry Y_samples
    (N x S x d) of independent successors per state.  Pre-states must be
    pairwise distinct: duplicates make the Gram matrix exactly singular.
    """

    X: np.ndarray
    Y: Optional[np.ndarray] = None
    Y_samples: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X))
        object.__setattr__(self, "X", X)
        if (self.Y is None) == (self.Y_samples is None):
            raise DynamicsError("provide exactly one of Y or Y_samples")
        if self.Y is not None:
            Y = np.atleast_2d(np.asarray(self.Y))
            if Y.shape != X.shape:
                raise DynamicsError(f"Y shape {Y.shape} does not match X shape {X.shape}")
            object.__setattr__(self, "Y", Y)
        else:
            Ys = np.asarray(self.Y_samples)
            if Ys.ndim != 3 or Ys.shape[0] != X.shape[0] or Ys.shape[2] != X.shape[1]:
                raise DynamicsError("Y_samples must have shape (N, S, d)")
            object.__setattr__(self, "Y_samples", Ys)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DynamicsError("need N >= 1 snapshots of dimension d >= 1")
        _check_distinct(X)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def S(self) -> int:
        return 1 if self.Y is not None else self.Y_samples.shape[1]

    @property
    def is_stochastic(self) -> bool:
        return self.Y_samples is not None


def _check_distinct(X: np.ndarray, tol: float = 1e-14, block: int = 512):
    n = X.shape[0]
    for i0 in range(0, n, block):
        xa = X[i0 : i0 + block]
        for j0 in range(i0, n, block):
            xb = X[j0 : j0 + block]
            d = np.sqrt(np.sum(np.abs(xa[:, None, :] - xb[None, :, :]) ** 2, axis=-1))
            if i0 == j0:
                d[np.triu_indices_from(d)] = np.inf
            hits = np.argwhere(d < tol)
            if hits.size:
                i, j = hits[0]
                raise DynamicsError(
                    f"duplicate snapshot states at indices {j0 + j} and {i0 + i}"
                )


@dataclass(frozen=True)
class Trajectory:
    """Sample X_i = F^(i-1)(x0) along a single orbit."""

    x0: object
    count: int


@dataclass(frozen=True)
class RandomBox:
    """Uniform i.i.d. initial states in an axis-aligned box."""

    bounds: Sequence[tuple[float, float]]
    count: int
    seed: int = 0


@dataclass(frozen=True)
class GridPoints:
    """Explicit list of pre-states (e.g. Chebyshev nodes)."""

    points: object


def chebyshev_nodes(n: int, a: float, b: float) -> np.ndarray:
    """n Chebyshev roots mapped to (a, b), strictly interior and increasing."""
    t = np.cos((2 * np.arange(n) + 1) * np.pi / (2 * n))
    return np.sort((a + b) / 2 + (b - a) / 2 * t)


def generate_snapshots(spec: SystemSpec, sampling, samples_per_state: int = 1) -> SnapshotSet:
    """Draw pre-states per the sampling rule and push them through the map."""
    if samples_per_state < 1:
        raise DynamicsError("samples_per_state must be >= 1")
    if samples_per_state > 1 and not spec.is_stochastic:
        raise DynamicsError("deterministic systems require samples_per_state = 1")
    rng = np.random.default_rng(spec.seed)

    if isinstance(sampling, Trajectory):
        if spec.is_stochastic:
            raise DynamicsError("trajectory sampling is for deterministic systems")
        x = np.asarray(sampling.x0).reshape(-1)
        states = [x]
        for _ in range(sampling.count):
            states.append(np.asarray(step(spec, states[-1])).reshape(-1))
        arr = np.array(states)
        X, Y = arr[:-1], arr[1:]
        return SnapshotSet(X=X, Y=Y)

    if isinstance(sampling, RandomBox):
        box_rng = np.random.default_rng(sampling.seed)
        bounds = np.asarray(sampling.bounds, dtype=float)
        X = box_rng.uniform(bounds[:, 0], bounds[:, 1], size=(sampling.count, len(bounds)))
    elif isinstance(sampling, GridPoints):
        X = np.atleast_2d(np.asarray(sampling.points))
        if X.shape[0] == 1 and X.shape[1] > 1 and spec.dim == 1:
            X = X.T
    else:
        raise DynamicsError(f"unknown sampling rule {sampling!r}")

    if spec.is_stochastic:
        S = samples_per_state
        Ys = np.empty((X.shape[0], S, X.shape[1]))
        for i, x in enumerate(X):
            for s in range(S):
                Ys[i, s] = step(spec, x, rng)
        if S == 1:
            return SnapshotSet(X=X, Y=Ys[:, 0, :])
        return SnapshotSet(X=X, Y_samples=Ys)
    Y = np.array([np.asarray(step(spec, x)).reshape(-1) for x in X])
    return SnapshotSet(X=X, Y=Y)


def concat_snapshots(parts: Sequence[SnapshotSet]) -> SnapshotSet:
    """Merge snapshot sets (e.g. several trajectories) into one."""
    if not parts:
        raise DynamicsError("nothing to concatenate")
    if any(p.is_stochastic != parts[0].is_stochastic for p in parts):
        raise DynamicsError("cannot mix deterministic and stochastic snapshot sets")
    X = np.vstack([p.X for p in parts])
    if parts[0].is_stochastic:
        return SnapshotSet(X=X, Y_samples=np.vstack([p.Y_samples for p in parts]))
    return SnapshotSet(X=X, Y=np.vstack([p.Y for p in parts]))


def duffing_hamiltonian(spec: SystemSpec, x) -> float:
    """H = v^2/2 + alpha u^2/2 + beta u^4/4; decays along damped trajectories."""
    u, v = np.asarray(x, dtype=float).reshape(-1)
    p = spec.params
    return 0.5 * v**2 + 0.5 * p["alpha"] * u**2 + 0.25 * p["beta"] * u**4


# -- snapshot CSV format ------------------------------------------------------

def _fmt(v) -> str:
    if np.iscomplexobj(np.asarray(v)):
        return format_complex(complex(v))
    return f"{float(v):.17g}"


def save_snapshots(snapshots: SnapshotSet, path_or_buf):
    """Write the snapshot CSV: header ``d=<dim>,s=<samples>`` then one row per pair."""
    buf = io.StringIO()
    buf.write(f"d={snapshots.d},s={snapshots.S}\n")
    for i in range(snapshots.N):
        row = [_fmt(v) for v in snapshots.X[i]]
        if snapshots.is_stochastic:
            for s in range(snapshots.S):
                row.extend(_fmt(v) for v in snapshots.Y_samples[i, s])
        else:
            row.extend(_fmt(v) for v in snapshots.Y[i])
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="utf-8") as fh:
            fh.write(text)


def load_snapshots(path_or_buf) -> SnapshotSet:
    """Read the snapshot CSV format written by :func:`save_snapshots`."""
    if hasattr(path_or_buf, "read"):
        lines = path_or_buf.read().splitlines()
    else:
        with open(path_or_buf, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    header = dict(item.split("=") for item in lines[0].split(","))
    d, s = int(header["d"]), int(header["s"])
    rows = [[parse_complex(v) for v in ln.split(",")] for ln in lines[1:]]
    data = np.array(rows)
    if np.allclose(data.imag, 0.0):
        data = data.real
    X = data[:, :d]
    if s == 1:
        return SnapshotSet(X=X, Y=data[:, d : 2 * d])
    Ys = data[:, d:].reshape(len(rows), s, d)
    return SnapshotSet(X=X, Y_samples=Ys)
