"""Command-line front end: reproducible spectral-analysis runs with on-disk artifacts.

Subcommands assemble Gram triples, verify eigenpairs, sweep pseudospectra on
either side, smooth spectral measures, and produce certified forecasts; every
run writes a JSON manifest (config echo, seed, versions, timings).  `demo`
reruns the built-in experiments (gauss, duffing, lorenz, mobius, randomwalk)
end to end.

Exit codes: 2 for usage errors, 1 for numerical failures (with a
machine-readable error JSON on request), 0 on success.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .dynamics import (DynamicsError, GridPoints, RandomBox, SnapshotSet, SystemSpec,
                       Trajectory, chebyshev_nodes, concat_snapshots,
                       generate_snapshots, load_snapshots, step)
from .forecast import error_bound, fit_model, predict, project_state_observables, rkhs_norm
from .gram import (GramError, GramTriple, build_gram, build_gram_markov_exact,
                   compress, load_gram, save_gram, to_u_basis)
from .kernels import KernelError, KernelSpec, kernel_matrix, parse_complex, parse_kernel_spec
from .linalg import LinalgError
from .measures import (MeasureError, check_normality, default_poles, observable_to_u,
                       rational_kernel, spectral_measure_selfadjoint,
                       spectral_measure_unitary)
from .spectra import (SpectraError, default_grid, pseudospectrum_koop,
                      pseudospectrum_pf, residual, verify_eigenpairs)

_NUMERICAL_ERRORS = (DynamicsError, GramError, KernelError, LinalgError,
                     MeasureError, SpectraError, np.linalg.LinAlgError, ValueError)


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# -- argument plumbing --------------------------------------------------------

def parse_system_spec(text: str, seed: int = 0, timestep: float = 0.01) -> SystemSpec:
    """Parse ``kind:key=value,...``; complex values use re+imi literals."""
    if ":" in text:
        kind, rest = text.split(":", 1)
    else:
        kind, rest = text, ""
    kind = kind.strip().lower()
    params = {}
    ts = timestep
    for item in rest.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise UsageError(f"malformed system parameter {item!r}")
        key, val = item.split("=", 1)
        key = key.strip().lower()
        if key in ("dt", "timestep"):
            ts = float(val)
            continue
        if key in ("a", "b") and kind == "mobius":
            params[key] = parse_complex(val)
        else:
            params[key] = float(val)
    try:
        return SystemSpec(kind=kind, params=params, timestep=ts, seed=seed)
    except DynamicsError as exc:
        raise UsageError(str(exc)) from exc


def parse_grid(text: str) -> np.ndarray:
    """``lattice:N`` or ``re_min:re_max:step[,im_min:im_max:step]``."""
    text = text.strip().lower()
    if text.startswith("lattice:"):
        return default_grid(int(text.split(":", 1)[1]))
    parts = text.split(",")
    if len(parts) not in (1, 2):
        raise UsageError(f"cannot parse grid spec {text!r}")
    def axis(p):
        lo, hi, st = (float(v) for v in p.split(":"))
        if st <= 0 or hi < lo:
            raise UsageError(f"bad grid axis {p!r}")
        n = int(math.floor((hi - lo) / st + 0.5)) + 1
        return lo + st * np.arange(n)
    re_ax = axis(parts[0])
    im_ax = axis(parts[1]) if len(parts) == 2 else np.array([0.0])
    return (re_ax[:, None] + 1j * im_ax[None, :]).reshape(-1)


_BOX_DEFAULTS = {
    "duffing": [(-1.0, 1.0), (-1.0, 1.0)],
    "lorenz": [(-25.0, 25.0), (-25.0, 25.0), (0.0, 50.0)],
}


def build_dataset(args) -> tuple[SnapshotSet, SystemSpec | None]:
    """Snapshot set from --data or from a built-in system per --sampling."""
    if getattr(args, "data", None):
        return load_snapshots(args.data), None
    if not getattr(args, "system", None):
        raise UsageError("provide either --system or --data")
    system = parse_system_spec(args.system, seed=args.seed)
    n = args.n
    sampling = args.sampling
    if sampling == "auto":
        sampling = {"gauss-map": "chebyshev", "mobius": "disk",
                    "random-walk": "window", "random-walk-perturbed": "window",
                    "duffing": "trajectories", "lorenz": "trajectories"}.get(
                        system.kind, "random-box")
    if sampling == "chebyshev":
        if system.kind != "gauss-map":
            raise UsageError("chebyshev sampling is for the Gauss map interval")
        pts = chebyshev_nodes(n, -1.0, 0.0)
        return generate_snapshots(system, GridPoints(points=pts)), system
    if sampling == "disk":
        rng = np.random.default_rng(args.seed)
        pts = (rng.uniform(0, 1, n) ** 0.25 * np.exp(2j * np.pi * rng.uniform(0, 1, n)))
        return generate_snapshots(system, GridPoints(points=pts.reshape(-1, 1))), system
    if sampling == "window":
        w = int(system.params.get("w", args.window))
        states = np.arange(-w, w + 1).reshape(-1, 1)
        return generate_snapshots(system, GridPoints(points=states),
                                  samples_per_state=args.samples), system
    if sampling == "trajectories":
        box = _BOX_DEFAULTS.get(system.kind)
        if box is None:
            raise UsageError(f"no default sampling box for {system.kind}")
        rng = np.random.default_rng(args.seed)
        steps = args.traj_steps
        n_traj = max(1, n // steps)
        parts = [generate_snapshots(
            system, Trajectory(x0=rng.uniform([b[0] for b in box], [b[1] for b in box]),
                               count=steps)) for _ in range(n_traj)]
        return concat_snapshots(parts), system
    if sampling == "random-box":
        box = _BOX_DEFAULTS.get(system.kind, [(-1.0, 1.0)] * system.dim)
        return generate_snapshots(system, RandomBox(bounds=box, count=n, seed=args.seed)), system
    raise UsageError(f"unknown sampling rule {sampling!r}")


def obtain_gram(args) -> tuple[GramTriple, SnapshotSet | None, SystemSpec | None, KernelSpec | None]:
    if getattr(args, "gram", None):
        return load_gram(args.gram), None, None, None
    snapshots, system = build_dataset(args)
    if not args.kernel:
        raise UsageError("--kernel is required unless --gram is given")
    kernel = parse_kernel_spec(args.kernel)
    if args.exact_markov:
        if system is None or not system.is_stochastic:
            raise UsageError("--exact-markov requires a Markov-chain system")
        gram = build_gram_markov_exact(system, snapshots.X[:, 0], kernel)
    else:
        gram = build_gram(snapshots, kernel)
    return gram, snapshots, system, kernel


# -- SVG heat map -------------------------------------------------------------

_RAMP_ANCHORS = [(0.267, 0.005, 0.329), (0.283, 0.141, 0.458), (0.254, 0.265, 0.530),
                 (0.207, 0.372, 0.553), (0.164, 0.471, 0.558), (0.128, 0.567, 0.551),
                 (0.135, 0.659, 0.518), (0.267, 0.749, 0.441), (0.478, 0.821, 0.318),
                 (0.741, 0.873, 0.150), (0.993, 0.906, 0.144)]


def _ramp_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    t = round(t * 255) / 255.0  # 256-step quantization
    pos = t * (len(_RAMP_ANCHORS) - 1)
    i = min(int(pos), len(_RAMP_ANCHORS) - 2)
    frac = pos - i
    rgb = [(1 - frac) * a + frac * b for a, b in zip(_RAMP_ANCHORS[i], _RAMP_ANCHORS[i + 1])]
    return "#%02x%02x%02x" % tuple(int(round(255 * v)) for v in rgb)


def pseudospectrum_svg(grid: np.ndarray, tau: np.ndarray, path: str, size: int = 640):
    """Rect-grid heat map of log10(tau) over the grid points."""
    re, im = grid.real, grid.imag
    res = np.unique(np.round(np.diff(np.unique(re)), 12))
    step_re = float(res[res > 0].min()) if len(res[res > 0]) else 1.0
    ims = np.unique(np.round(np.diff(np.unique(im)), 12))
    step_im = float(ims[ims > 0].min()) if len(ims[ims > 0]) else step_re
    ok = np.isfinite(tau) & (tau > 0)
    logt = np.full_like(tau, np.nan)
    logt[ok] = np.log10(tau[ok])
    lo, hi = (np.nanmin(logt), np.nanmax(logt)) if ok.any() else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    x0, x1 = re.min() - step_re / 2, re.max() + step_re / 2
    y0, y1 = im.min() - step_im / 2, im.max() + step_im / 2
    scale = size / max(x1 - x0, y1 - y0)
    w, h = (x1 - x0) * scale, (y1 - y0) * scale
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
             f'viewBox="0 0 {w:.2f} {h:.2f}">']
    for j in range(len(grid)):
        if not np.isfinite(tau[j]):
            continue
        t = 1.0 - (logt[j] - lo) / span  # small tau = hot
        px = (re[j] - step_re / 2 - x0) * scale
        py = (y1 - im[j] - step_im / 2) * scale
        parts.append(f'<rect x="{px:.2f}" y="{py:.2f}" width="{step_re * scale:.2f}" '
                     f'height="{step_im * scale:.2f}" fill="{_ramp_color(t)}"/>')
    parts.append("</svg>")
    _atomic_write(path, "\n".join(parts))


# -- commands -----------------------------------------------------------------

def _write_manifest(args, outdir: str, timings: dict, extra: dict | None = None):
    cfg = {k: v for k, v in vars(args).items()
           if k not in ("func", "config") and not k.startswith("_")}
    manifest = {
        "command": args.command,
        "config": {k: (str(v) if not isinstance(v, (int, float, bool, str, list, type(None))) else v)
                   for k, v in cfg.items()},
        "seed": getattr(args, "seed", None),
        "versions": {"specrkhs": __version__, "numpy": np.__version__},
        "timings_s": timings,
    }
    if extra:
        manifest.update(extra)
    _atomic_write(os.path.join(outdir, "manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_gram(args):
    t0 = time.time()
    gram, snapshots, _, _ = obtain_gram(args)
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)
    save_gram(os.path.join(outdir, "gram.bin"), gram)
    _write_manifest(args, outdir, {"total": time.time() - t0}, {"N": gram.N})
    print(f"wrote {os.path.join(outdir, 'gram.bin')} (N={gram.N})")
    return 0


def cmd_eig(args):
    t0 = time.time()
    gram, _, _, _ = obtain_gram(args)
    pairs = verify_eigenpairs(gram, args.eps, threshold=args.threshold, rank=args.rank)
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)
    lines = ["re,im,residual,verified"]
    for p in pairs:
        lines.append(f"{_fmt(p.lam.real)},{_fmt(p.lam.imag)},{_fmt(p.residual)},"
                     f"{int(p.verified)}")
    _atomic_write(os.path.join(outdir, "eig.csv"), "\n".join(lines) + "\n")
    nver = sum(p.verified for p in pairs)
    _write_manifest(args, outdir, {"total": time.time() - t0},
                    {"N": gram.N, "verified": nver})
    print(f"{nver} of {len(pairs)} eigenpairs verified at eps={args.eps}")
    return 0


def _write_pseudospec(result, outdir, svg):
    lines = ["re,im,tau,flagged"]
    for z, t, f in zip(result.grid, result.tau, result.flagged):
        lines.append(f"{_fmt(z.real)},{_fmt(z.imag)},{_fmt(t)},{int(f)}")
    _atomic_write(os.path.join(outdir, "pseudospec.csv"), "\n".join(lines) + "\n")
    if svg:
        pseudospectrum_svg(result.grid, result.tau, os.path.join(outdir, "pseudospec.svg"))


def cmd_pseudospec(args):
    t0 = time.time()
    gram, _, _, _ = obtain_gram(args)
    grid = parse_grid(args.grid)
    result = pseudospectrum_pf(gram, grid, args.eps, rank=args.rank,
                               threshold=args.threshold,
                               store_witnesses=not args.no_witnesses,
                               threads=args.threads)
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)
    _write_pseudospec(result, outdir, args.svg)
    _write_manifest(args, outdir, {"total": time.time() - t0},
                    {"N": gram.N, "flagged": int(result.flagged.sum()),
                     "grid_points": len(grid), "point_errors": len(result.errors)})
    print(f"{int(result.flagged.sum())} of {len(grid)} grid points flagged at eps={args.eps}")
    return 0


def cmd_pseudospec_koop(args):
    t0 = time.time()
    gram, _, _, _ = obtain_gram(args)
    grid = parse_grid(args.grid)
    n1 = args.n1 or gram.N
    result = pseudospectrum_koop(gram, n1, args.n2, grid, args.eps,
                                 threshold=args.threshold, threads=args.threads)
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)
    _write_pseudospec(result, outdir, args.svg)
    _write_manifest(args, outdir, {"total": time.time() - t0},
                    {"N1": n1, "N2": args.n2, "flagged": int(result.flagged.sum())})
    print(f"{int(result.flagged.sum())} of {len(grid)} grid points flagged "
          f"(tau + 1/{args.n2} <= {args.eps})")
    return 0


def cmd_forecast(args):
    t0 = time.time()
    gram, snapshots, system, kernel = obtain_gram(args)
    if snapshots is None or kernel is None or system is None:
        raise UsageError("forecast needs --system and --kernel (not a stored gram)")
    pairs = verify_eigenpairs(gram, args.eps, threshold=args.threshold)
    usable = [p for p in pairs if np.isfinite(p.residual)]
    if args.verified_only:
        usable = [p for p in usable if p.verified]
    if not usable:
        raise SpectraError(f"no eigenpairs with residual <= {args.eps}")
    if not args.x0:
        raise UsageError("forecast requires --x0")
    x0 = np.array([float(v) for v in args.x0.split(",")])
    model = fit_model(usable, gram, kernel, snapshots, x0, norm_kstar=args.norm_kstar)
    Cstate = project_state_observables(gram, snapshots)
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)
    truth = [x0.copy()]
    for _ in range(args.steps):
        truth.append(np.asarray(step(system, truth[-1])).reshape(-1))
    for dim in range(snapshots.d):
        gv = snapshots.X[:, dim]
        norm_g = rkhs_norm(Cstate[:, dim], gram)
        lines = ["n,predicted,bound"]
        for n in range(args.steps + 1):
            pred = predict(model, gv, n)
            lines.append(f"{n},{_fmt(pred.real)},{_fmt(error_bound(model, norm_g, n))}")
        _atomic_write(os.path.join(outdir, f"forecast_x{dim + 1}.csv"),
                      "\n".join(lines) + "\n")
    meta = {"delta": model.delta, "eps_ver": model.eps_ver,
            "norm_kstar": model.norm_kstar, "n_modes": len(usable),
            "eigenvalues": [[p.lam.real, p.lam.imag] for p in usable],
            "note": "bounds certify the projected state observables (coefficients G^+ X)"}
    _atomic_write(os.path.join(outdir, "forecast_meta.json"),
                  json.dumps(meta, indent=2) + "\n")
    rel = [float(np.linalg.norm(
        [predict(model, snapshots.X[:, d], n).real for d in range(snapshots.d)]
        - truth[n]) / max(np.linalg.norm(truth[n]), 1e-300))
        for n in range(1, args.steps + 1)]
    _write_manifest(args, outdir, {"total": time.time() - t0},
                    {"delta": model.delta, "mean_rel_state_error": float(np.mean(rel))})
    print(f"forecast written; delta={model.delta:.3e}, "
          f"mean relative state error {np.mean(rel):.3e}")
    return 0


def cmd_measure(args):
    t0 = time.time()
    gram, snapshots, system, kernel = obtain_gram(args)
    basis = compress(gram, r=args.rank, threshold=args.threshold)
    report = check_normality(gram, basis)
    kern = rational_kernel(default_poles(args.order))
    rng = np.random.default_rng(args.seed)
    if args.observable == "random":
        c = rng.uniform(0, 1, gram.N).astype(complex)
        c /= np.sqrt(np.real(np.vdot(c, gram.G @ c)))
    else:
        c = np.array([parse_complex(v) for v in args.observable.split(",")])
        if len(c) != gram.N:
            raise UsageError(f"observable needs {gram.N} coefficients")
    gu = observable_to_u(c, basis, gram, project_out_constant=args.no_constant)
    if args.type == "selfadjoint":
        if args.points:
            lo, hi, np_ = args.points.split(":")
            pts = np.linspace(float(lo), float(hi), int(np_))
        else:
            lam_max = float(np.abs(np.linalg.eigvals(basis.pf_matrix)).max())
            pts = np.linspace(-lam_max - 5 * args.eps_smooth,
                              lam_max + 5 * args.eps_smooth, 400)
        ms = spectral_measure_selfadjoint(basis.pf_matrix, gu, pts,
                                          args.eps_smooth, kern)
    else:
        if args.points:
            lo, hi, np_ = args.points.split(":")
            pts = np.linspace(float(lo), float(hi), int(np_))
        else:
            pts = np.linspace(-np.pi, np.pi, 629, endpoint=False)
        ms = spectral_measure_unitary(basis.pf_matrix, gu, pts, args.eps_smooth, kern)
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)
    lines = ["point,value"]
    for p, v in zip(ms.points, ms.values):
        lines.append(f"{_fmt(p)},{_fmt(v)}")
    _atomic_write(os.path.join(outdir, "measure.csv"), "\n".join(lines) + "\n")
    sidecar = dict(ms.metadata)
    sidecar["observable_hash"] = hash(c.tobytes()) & 0xFFFFFFFF
    sidecar["normality"] = {
        "selfadjoint_defect": report.selfadjoint_defect,
        "unitary_defect": report.unitary_defect,
        "kernel_selfadjoint_defect": report.kernel_selfadjoint_defect,
        "kernel_unitary_defect": report.kernel_unitary_defect,
    }
    sidecar["poles"] = [[p.real, p.imag] for p in kern.poles]
    sidecar["residues"] = [[r.real, r.imag] for r in kern.residues]
    _atomic_write(os.path.join(outdir, "measure_meta.json"),
                  json.dumps(sidecar, indent=2) + "\n")
    _write_manifest(args, outdir, {"total": time.time() - t0}, {"N": gram.N})
    print(f"measure written over {len(pts)} points (type={args.type}, m={args.order})")
    return 0


def cmd_check_normality(args):
    t0 = time.time()
    gram, _, _, _ = obtain_gram(args)
    basis = compress(gram, r=args.rank, threshold=args.threshold)
    report = check_normality(gram, basis)
    payload = {
        "selfadjoint_defect": report.selfadjoint_defect,
        "unitary_defect": report.unitary_defect,
        "kernel_selfadjoint_defect": report.kernel_selfadjoint_defect,
        "kernel_unitary_defect": report.kernel_unitary_defect,
        "selfadjoint": report.selfadjoint,
        "unitary": report.unitary,
    }
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)
    _atomic_write(os.path.join(outdir, "normality.json"),
                  json.dumps(payload, indent=2) + "\n")
    _write_manifest(args, outdir, {"total": time.time() - t0})
    print(json.dumps(payload, indent=2))
    return 0


# -- demos --------------------------------------------------------------------

def _demo_gauss(args):
    args.system = "gauss-map"
    args.kernel = "h1:a=-1,b=0"
    args.sampling = "chebyshev"
    args.n = args.n or 201
    rc = cmd_eig(args)
    args.grid = args.grid or "lattice:2"
    args.no_witnesses = False
    args.svg = True
    return rc or cmd_pseudospec(args)


def _demo_duffing(args):
    args.system = "duffing:alpha=1,beta=1,delta=0.2,dt=0.01"
    args.kernel = args.kernel or "matern:d=2,n=3,sigma=0.1"
    args.sampling = "trajectories"
    args.n = args.n or 1200
    args.x0 = args.x0 or "0.4,-0.3"
    args.steps = args.steps or 30
    args.verified_only = False
    return cmd_forecast(args)


def _demo_lorenz(args):
    args.system = "lorenz:dt=0.01"
    args.kernel = args.kernel or "wendland:d=3,k=0,sigma=0.1"
    args.sampling = "trajectories"
    args.n = args.n or 400
    args.eps = args.eps if args.eps != 1e-2 else 0.3
    rc = cmd_eig(args)
    args.grid = args.grid or "-1.2:1.2:0.1,-1.2:1.2:0.1"
    args.no_witnesses = True
    args.svg = True
    return rc or cmd_pseudospec(args)


def _demo_mobius(args):
    # T2 of the disk experiments: a = sqrt(2) e^{i pi sqrt(3)}, b = e^{i 9 pi/7}
    args.system = ("mobius:a=0.94205138647481057-1.0547697309085464i,"
                   "b=-0.62348980185873371-0.78183148246802969i")
    args.kernel = args.kernel or "hyperbolic-gaussian:sigma=0.8"
    args.sampling = "disk"
    args.n = args.n or 200
    args.type = "unitary"
    args.observable = "random"
    rc = cmd_check_normality(args)
    return rc or cmd_measure(args)


def _demo_randomwalk(args):
    args.system = f"random-walk:w={args.window}"
    args.kernel = "discrete-delta"
    args.sampling = "window"
    args.exact_markov = True
    args.type = "selfadjoint"
    args.points = args.points or "-0.6:1.2:400"
    w = args.window
    c = np.zeros(2 * w + 1)
    c[w + 1], c[w - 1] = 0.5, -0.5
    args.observable = ",".join(_fmt(v) for v in c)
    return cmd_measure(args)


_DEMOS = {"gauss": _demo_gauss, "duffing": _demo_duffing, "lorenz": _demo_lorenz,
          "mobius": _demo_mobius, "randomwalk": _demo_randomwalk}


def cmd_demo(args):
    if args.name not in _DEMOS:
        raise UsageError(f"unknown demo {args.name!r}; choose from {sorted(_DEMOS)}")
    return _DEMOS[args.name](args)


# -- parser -------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, kernel=True):
    p.add_argument("--system", help="system spec, e.g. gauss-map or duffing:alpha=1,dt=0.01")
    p.add_argument("--data", help="snapshot CSV path (alternative to --system)")
    p.add_argument("--gram", help="stored gram.bin (alternative to building one)")
    if kernel:
        p.add_argument("--kernel", help="kernel spec, e.g. matern:d=2,n=3,sigma=6")
    p.add_argument("--n", type=int, default=200, help="number of snapshots")
    p.add_argument("--sampling", default="auto",
                   choices=["auto", "chebyshev", "disk", "window", "trajectories", "random-box"])
    p.add_argument("--traj-steps", type=int, default=30, help="snapshots per trajectory")
    p.add_argument("--samples", type=int, default=1, help="stochastic successors per state")
    p.add_argument("--window", type=int, default=1000, help="Markov state window half-width")
    p.add_argument("--exact-markov", action="store_true",
                   help="integrate transition rows exactly instead of sampling")
    p.add_argument("--rank", type=int, default=None, help="compression rank r")
    p.add_argument("--threshold", type=float, default=1e-12,
                   help="relative eigenvalue truncation threshold")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="parallel workers (default: logical cores or SPECRKHS_THREADS)")
    p.add_argument("--output-dir", default=".")
    p.add_argument("--error-json", action="store_true",
                   help="emit machine-readable errors on stderr")
    p.add_argument("--config", help="key = value config file (flags take precedence)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="specrkhs",
        description="Residual-verified spectral analysis of Koopman/Perron-Frobenius "
                    "operators on RKHSs from snapshot data.")
    ap.add_argument("--version", action="version", version=f"specrkhs {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gram", help="assemble and serialize a Gram triple")
    _add_common(p)
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("eig", help="verified eigenpairs (residual certificates)")
    _add_common(p)
    p.add_argument("--eps", type=float, default=1e-2, help="verification tolerance")
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("pseudospec", help="approximate-point pseudospectrum of K*")
    _add_common(p)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--grid", default="lattice:2")
    p.add_argument("--no-witnesses", action="store_true")
    p.add_argument("--svg", action="store_true", help="emit a heat-map SVG")
    p.set_defaults(func=cmd_pseudospec)

    p = sub.add_parser("pseudospec-koop", help="approximate-point pseudospectrum of K")
    _add_common(p)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--grid", default="lattice:2")
    p.add_argument("--n1", type=int, default=None, help="outer truncation (defaults to N)")
    p.add_argument("--n2", type=int, required=True, help="inner truncation")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_pseudospec_koop)

    p = sub.add_parser("forecast", help="certified observable forecasts")
    _add_common(p)
    p.add_argument("--eps", type=float, default=1e-2, help="residual verification tolerance")
    p.add_argument("--x0", required=False, help="starting state, comma-separated")
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--norm-kstar", type=float, default=None,
                   help="bound on ||K*|| (default 1, valid for radial kernels)")
    p.add_argument("--verified-only", action="store_true",
                   help="restrict the decomposition to residual-verified modes")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("measure", help="smoothed spectral measure of a normal operator")
    _add_common(p)
    p.add_argument("--type", choices=["selfadjoint", "unitary"], required=True)
    p.add_argument("--order", type=int, default=6, help="smoothing-kernel order m")
    p.add_argument("--eps-smooth", type=float, default=0.05)
    p.add_argument("--points", help="sample points lo:hi:count")
    p.add_argument("--observable", default="random",
                   help="'random' or comma-separated kernel-section coefficients")
    p.add_argument("--no-constant", action="store_true",
                   help="project out the constant direction (sum c_i = 0)")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("check-normality", help="self-adjointness/unitarity diagnostics")
    _add_common(p)
    p.set_defaults(func=cmd_check_normality)

    p = sub.add_parser("demo", help="run a named built-in experiment end to end")
    _add_common(p)
    p.add_argument("name", choices=sorted(_DEMOS))
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--eps-smooth", type=float, default=0.05)
    p.add_argument("--grid", default=None)
    p.add_argument("--points", default=None)
    p.add_argument("--x0", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--norm-kstar", type=float, default=None)
    p.add_argument("--no-constant", action="store_true")
    p.set_defaults(func=cmd_demo, n=None)

    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pre-scan for --config and fold file values in as parser defaults."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config requires a path")
    path = argv[idx + 1]
    if not os.path.exists(path):
        raise UsageError(f"config file {path!r} does not exist")
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"malformed config line {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            overrides[key.replace("-", "_")] = val
    for action in ap._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        known = {a.dest: a for a in action._actions}  # noqa: SLF001
        for key, val in overrides.items():
            if key in known and known[key].type is not None:
                action.set_defaults(**{key: known[key].type(val)})
            elif key in known:
                action.set_defaults(**{key: val})
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "SPECRKHS_THREADS" in os.environ and "--threads" not in argv:
        argv += ["--threads", os.environ["SPECRKHS_THREADS"]]
    ap = build_parser()
    try:
        argv = _apply_config(ap, argv)
        args = ap.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args) or 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        if getattr(args, "error_json", False):
            print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
                  file=sys.stderr)
        else:
            print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
