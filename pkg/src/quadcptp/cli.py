"""Command-line interface: ``quadcptp {check,scan,evolve,oracle,lindblad,balance}``.

Exit codes: 0 CPTP (or success), 1 NotCPTP, 2 usage or data error, 3 Marginal.
CSV output carries ``# config:`` and ``# convention:`` header comments; JSON
output carries the same data under ``"meta"``. ``--no-meta`` drops the
timestamp so identical inputs give identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .balance import balance_check
from .cptp import (
    DEFAULT_PSD_TOL,
    classify,
    decompose,
    effective_hamiltonian,
    lindblad_decomposition,
    psd_threshold,
    xi_matrix,
)
from .dynamics import (
    MomentState,
    evolve_moments,
    is_physical,
    moment_generator,
    write_trajectory_csv,
)
from .errors import QuadCPTPError, SpecError
from .model import SystemSpec, load_spec
from .propagators import Convention, wick_propagator

EXIT_OK, EXIT_NOT_CPTP, EXIT_ERROR, EXIT_MARGINAL = 0, 1, 2, 3
FMT = ".17g"


class UsageError(QuadCPTPError):
    pass


# ---------------------------------------------------------------- helpers


def _cplx(a) -> dict:
    a = np.asarray(a)
    return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}


def _clean(obj):
    """Make ``obj`` JSON-safe: arrays to lists, nonfinite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return _clean(_cplx(obj))
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if hasattr(obj, "value"):
        return obj.value
    return obj


def _meta(args, spec: SystemSpec) -> dict:
    meta = {"config": spec.to_dict(), "convention": args.convention, "version": __version__}
    if not args.no_meta:
        meta["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return meta


def _csv_header(meta: dict) -> str:
    lines = [
        "# config: " + json.dumps(meta["config"], separators=(",", ":"), sort_keys=True),
        "# convention: " + meta["convention"],
    ]
    if "generated" in meta:
        lines.append("# generated: " + meta["generated"])
    return "\n".join(lines) + "\n"


def _emit(args, text: str) -> None:
    if args.out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc.strerror or exc}") from None


def _emit_json(args, payload: dict) -> None:
    _emit(args, json.dumps(_clean(payload), indent=2, sort_keys=False) + "\n")


def _load(args) -> SystemSpec:
    if not args.config:
        raise UsageError("--config PATH is required")
    try:
        return load_spec(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read {args.config}: {exc.strerror or exc}") from None


def _floats(text: str | None, size: int, name: str):
    if text is None:
        return None
    try:
        vals = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"{name} must be a comma-separated list of numbers") from None
    if vals.size != size:
        raise UsageError(f"{name} needs {size} values, got {vals.size}")
    return vals


# ---------------------------------------------------------------- scan grid


@dataclass(frozen=True)
class ScanGrid:
    """Rectangular ``(beta1, beta2)`` grid or the locked diagonal ``beta2 = beta1``."""

    beta1: tuple
    beta2: tuple | None

    @property
    def locked(self) -> bool:
        return self.beta2 is None

    def axes(self):
        b1 = np.linspace(*self.beta1[:2], int(self.beta1[2]))
        b2 = b1 if self.locked else np.linspace(*self.beta2[:2], int(self.beta2[2]))
        return b1, b2

    def points(self):
        """Grid points in row-major order (``beta1`` outer)."""
        b1, b2 = self.axes()
        if self.locked:
            return np.column_stack([b1, b1])
        B1, B2 = np.meshgrid(b1, b2, indexing="ij")
        return np.column_stack([B1.ravel(), B2.ravel()])


def _axis(text: str, name: str) -> tuple:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"{name} axis must be min:max:count, got '{text}'")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"{name} axis '{text}' is not numeric") from None
    if count < 2:
        raise UsageError(f"{name} count must be >= 2")
    if not (lo > 0 and hi > 0 and np.isfinite(lo) and np.isfinite(hi)):
        raise UsageError(f"{name} bounds must be positive and finite")
    if hi < lo:
        raise UsageError(f"{name} max must be >= min")
    return lo, hi, count


def parse_grid(text: str) -> ScanGrid:
    """Parse ``min:max:count,min:max:count`` or ``min:max:count,locked``."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise UsageError("grid must be 'b1min:b1max:count,b2min:b2max:count' or 'b1min:b1max:count,locked'")
    b1 = _axis(parts[0], "beta1")
    if parts[1].lower() == "locked":
        return ScanGrid(b1, None)
    return ScanGrid(b1, _axis(parts[1], "beta2"))


def _bath_betas(n: int, b1: float, b2: float):
    """Bath 1 takes ``beta1``; every other bath takes ``beta2``."""
    return [b1] + [b2] * (n - 1)


def scan_points(spec: SystemSpec, points, convention: str, tol: float):
    """Ascending ``Xi_H`` eigenvalues and verdict strings for each ``(beta1, beta2)``.

    Propagators are computed once per distinct temperature.
    """
    n = spec.n
    gq = np.array([b.gamma_q for b in spec.baths])
    gp = np.array([b.gamma_p for b in spec.baths])
    cache = {}

    def S(beta):
        if beta not in cache:
            cache[beta] = wick_propagator(spec.hessian, beta, spec.hbar, convention).matrix
        return cache[beta]

    XH = np.empty((len(points), 2 * n, 2 * n), dtype=complex)
    for k, (b1, b2) in enumerate(points):
        betas = np.array(_bath_betas(n, b1, b2))
        Kd = np.concatenate([gp, gq]) / (spec.hbar * np.concatenate([betas, betas]))
        Xi = np.empty((2 * n, 2 * n), dtype=complex)
        for i in range(2 * n):
            Xi[i] = Kd[i] * S(betas[i % n])[i]
        XH[k] = Xi + Xi.conj().T
    ev = np.linalg.eigvalsh(XH)
    norms = np.linalg.norm(XH, axis=(1, 2))
    verdicts = [classify(e[0], tol * max(1.0, nm)).value for e, nm in zip(ev, norms)]
    return ev, verdicts


def _scan_chunk(payload):
    spec, points, convention, tol = payload
    return scan_points(spec, points, convention, tol)


def run_scan(spec: SystemSpec, grid: ScanGrid, convention: str, tol: float, jobs: int = 1):
    """Evaluate a grid, optionally across ``jobs`` processes; output order is row-major."""
    if spec.n == 1 and not grid.locked:
        raise UsageError("a single bath has one temperature; use 'locked' for beta2")
    pts = grid.points()
    if jobs <= 1 or len(pts) < 2 * jobs:
        ev, verdicts = scan_points(spec, pts, convention, tol)
        return pts, ev, verdicts
    chunks = np.array_split(pts, jobs * 4)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_scan_chunk, [(spec, c, convention, tol) for c in chunks]))
    ev = np.concatenate([p[0] for p in parts])
    verdicts = [v for p in parts for v in p[1]]
    return pts, ev, verdicts


def format_scan_csv(pts, ev, verdicts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta1", "beta2"] + [f"eig_{k + 1}" for k in range(ev.shape[1])] + ["verdict"])
    for (b1, b2), e, v in zip(pts, ev, verdicts):
        w.writerow([format(float(b1), FMT), format(float(b2), FMT)] + [format(float(x), FMT) for x in e] + [v])
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def cmd_check(args) -> int:
    spec = _load(args)
    d = decompose(xi_matrix(spec, args.convention), args.tol)
    _emit_json(
        args,
        {
            "verdict": d.verdict.value,
            "eigenvalues": d.eigenvalues,
            "min_eigenvalue": d.min_eigenvalue,
            "threshold": psd_threshold(d.xi_h, args.tol),
            "xi_h": _cplx(d.xi_h),
            "xi_a_norm": float(np.linalg.norm(d.xi_a)),
            "meta": _meta(args, spec),
        },
    )
    return d.verdict.exit_code


def cmd_scan(args) -> int:
    spec = _load(args)
    grid = parse_grid(args.grid)
    pts, ev, verdicts = run_scan(spec, grid, args.convention, args.tol, args.jobs)
    _emit(args, _csv_header(_meta(args, spec)) + format_scan_csv(pts, ev, verdicts))
    if args.figure:
        from .plotting import plot_scan

        plot_scan(pts[:, 0], pts[:, 1], ev, verdicts, args.figure, locked=grid.locked)
    return EXIT_OK


def _default_horizon(drift) -> float:
    rate = -float(np.max(np.linalg.eigvals(drift).real))
    return 30.0 / rate if rate > 1e-12 else 10.0


def cmd_evolve(args) -> int:
    spec = _load(args)
    d = decompose(xi_matrix(spec, args.convention), args.tol)
    g = moment_generator(spec, d)
    dim = 2 * spec.n
    mean = _floats(args.mean, dim, "--mean")
    mean = np.zeros(dim) if mean is None else mean
    cov = 0.5 * spec.hbar * args.cov_scale * np.eye(dim)
    t_final = args.t_final if args.t_final is not None else _default_horizon(g.drift)
    if not t_final > 0 or args.points < 2:
        raise UsageError("--t-final must be > 0 and --points >= 2")
    states = evolve_moments(g, MomentState(mean, cov, 0.0, is_physical(cov, spec.hbar)),
                            np.linspace(0.0, t_final, args.points), substeps=args.substeps)
    buf = io.StringIO()
    write_trajectory_csv(states, buf, FMT)
    _emit(args, _csv_header(_meta(args, spec)) + buf.getvalue())
    if args.figure:
        from .plotting import plot_trajectory

        plot_trajectory(states, args.figure)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from . import fock

    spec = _load(args)
    f = fock.build_fock(spec, args.N, frame="auto" if args.frame == "auto" else None)
    source = args.source
    if source == "direct":
        g = fock.generator_direct(f, spec)
    elif source == "high-temp":
        g = fock.generator_high_temp(f, spec)
    else:
        xi = np.zeros(2 * spec.n) if spec.xi is None else spec.xi
        d = decompose(xi_matrix(spec, args.convention), args.tol)
        if source == "qtcl":
            g = fock.generator_qtcl(f, d.xi_matrix, xi)
        else:
            ls = lindblad_decomposition(d, xi, hessian=spec.hessian)
            g = fock.generator_from_lindblad(f, ls)
    dim = 2 * spec.n
    mean = _floats(args.mean, dim, "--mean")
    squeeze = _floats(args.squeeze, spec.n, "--squeeze")
    rho0 = fock.gaussian_pure_state(f, mean, squeeze)
    t_final = args.t_final if args.t_final is not None else 5.0
    if not t_final > 0 or args.points < 2:
        raise UsageError("--t-final must be > 0 and --points >= 2")
    samples = fock.evolve_density(g, rho0, np.linspace(0.0, t_final, args.points), f,
                                  check_leak=not args.no_leak_check)
    report = fock.oracle_report(g.source, f, samples)
    report["meta"] = _meta(args, spec)
    _emit_json(args, report)
    return EXIT_OK


def cmd_lindblad(args) -> int:
    spec = _load(args)
    d = decompose(xi_matrix(spec, args.convention), args.tol)
    xi = np.zeros(2 * spec.n) if spec.xi is None else spec.xi
    ls = lindblad_decomposition(d, xi, hessian=spec.hessian)
    heff = effective_hamiltonian(spec, d)
    recon = ls.reconstruct_xi_h()
    _emit_json(
        args,
        {
            "verdict": d.verdict.value,
            "rank": len(ls),
            "lambdas": _cplx(ls.lambdas),
            "signs": ls.signs,
            "norms": np.linalg.norm(ls.lambdas, axis=1) if len(ls) else [],
            "eta": ls.eta,
            "reconstruction_residual": float(np.linalg.norm(recon - d.xi_h)),
            "h_eff": {"kernel": heff.kernel, "linear": heff.linear, "constant": heff.constant},
            "meta": _meta(args, spec),
        },
    )
    return d.verdict.exit_code


def cmd_balance(args) -> int:
    spec = _load(args)
    d = decompose(xi_matrix(spec, args.convention), args.tol)
    xi = np.zeros(2 * spec.n) if spec.xi is None else spec.xi
    ls = lindblad_decomposition(d, xi, hessian=spec.hessian)
    rep = balance_check(spec, d, ls, args.convention)
    payload = rep.to_dict()
    payload["meta"] = _meta(args, spec)
    _emit_json(args, payload)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="system description (JSON)")
    p.add_argument("--tol", type=float, default=DEFAULT_PSD_TOL, help="relative PSD tolerance (default %(default)g)")
    p.add_argument("--convention", choices=[c.value for c in Convention], default=Convention.APPENDIX_B.value,
                   help="sign of the Wick-rotated propagator (default %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for scans")
    p.add_argument("--out", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--no-meta", action="store_true", help="omit the timestamp for byte-identical output")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="quadcptp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("check", parents=[common], help="CPTP verdict for one configuration")

    p = sub.add_parser("scan", parents=[common], help="eigenvalues of Xi_H over a (beta1, beta2) grid")
    p.add_argument("--grid", required=True, help="'min:max:count,min:max:count' or 'min:max:count,locked'")
    p.add_argument("--figure", metavar="PATH", help="also render a region/eigenvalue figure")

    p = sub.add_parser("evolve", parents=[common], help="Gaussian moment trajectory (CSV)")
    p.add_argument("--t-final", type=float, help="end time (default 30 relaxation times)")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--substeps", type=int, default=20)
    p.add_argument("--mean", help="initial mean, comma separated (default 0)")
    p.add_argument("--cov-scale", type=float, default=1.0, help="initial covariance in units of hbar/2")
    p.add_argument("--figure", metavar="PATH", help="also render the trajectory")

    p = sub.add_parser("oracle", parents=[common], help="truncated Fock evolution report (JSON)")
    p.add_argument("--N", type=int, default=24, help="levels per mode")
    p.add_argument("--source", choices=["direct", "qtcl", "high-temp", "gtcl"], default="direct")
    p.add_argument("--frame", choices=["auto", "none"], default="auto")
    p.add_argument("--t-final", type=float)
    p.add_argument("--points", type=int, default=11)
    p.add_argument("--mean", help="initial mean, comma separated")
    p.add_argument("--squeeze", help="squeezing per mode, comma separated")
    p.add_argument("--no-leak-check", action="store_true")

    sub.add_parser("lindblad", parents=[common], help="Lindblad vectors and effective Hamiltonian (JSON)")
    sub.add_parser("balance", parents=[common], help="detailed-balance residuals (JSON)")
    return parser


COMMANDS = {
    "check": cmd_check,
    "scan": cmd_scan,
    "evolve": cmd_evolve,
    "oracle": cmd_oracle,
    "lindblad": cmd_lindblad,
    "balance": cmd_balance,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if not args.tol > 0:
        parser.error("--tol must be > 0")
    try:
        return COMMANDS[args.command](args)
    except SpecError as exc:
        print(f"quadcptp {args.command}: config error: {exc}", file=sys.stderr)
    except (QuadCPTPError, ValueError, OverflowError, MemoryError) as exc:
        print(f"quadcptp {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
