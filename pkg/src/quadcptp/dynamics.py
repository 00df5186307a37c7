"""Gaussian moment dynamics of the quadratic master equation.

Because the generator maps polynomials of degree <= 2 in ``x`` to
polynomials of the same degree, first and second moments close exactly:

    d<x>/dt   = J H (<x> - xi) - 2 J Im(Xi) (<x> - eta)
    d sigma/dt = A sigma + sigma A^T + D_dyn,   A = J H - 2 J Im(Xi),
    D_dyn      = hbar J Re(Xi_H) J^T

with ``sigma_ij = 1/2 <{dx_i, dx_j}>``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur, solve_continuous_lyapunov

from .cptp import XiDecomposition, xi_matrix, decompose
from .errors import NotHurwitz, NotPositiveDefinite, StepUnderflow
from .model import SystemSpec, coupling_matrices, symplectic_form

PHYSICAL_RTOL = 1e-10


def physicality_margin(cov, hbar: float) -> float:
    """Smallest eigenvalue of ``sigma + (i hbar/2) J``."""
    J = symplectic_form(cov.shape[0] // 2)
    return float(np.linalg.eigvalsh(cov + 0.5j * hbar * J)[0])


def is_physical(cov, hbar: float, rtol: float = PHYSICAL_RTOL) -> bool:
    return physicality_margin(cov, hbar) >= -rtol * max(np.linalg.norm(cov), 1e-300)


@dataclass(frozen=True)
class MomentState:
    mean: np.ndarray
    cov: np.ndarray
    time: float = 0.0
    physical: bool | None = None
    error: float = 0.0


@dataclass(frozen=True)
class MomentGenerator:
    """Affine moment flow ``dm/dt = A m + b`` and ``d sigma/dt = A sigma + sigma A^T + D``.

    ``fixed_point_shift`` is the stationary mean ``-A^{-1} b`` (equal to ``xi``
    whenever ``eta = xi``).
    """

    drift: np.ndarray
    diffusion: np.ndarray
    fixed_point_shift: np.ndarray
    hbar: float = 1.0
    forcing: np.ndarray = None

    @property
    def n(self) -> int:
        return self.drift.shape[0] // 2

    def mean_rate(self, m):
        return self.drift @ m + self.forcing

    def cov_rate(self, cov):
        return self.drift @ cov + cov @ self.drift.T + self.diffusion


def moment_generator(spec: SystemSpec, d: XiDecomposition | None = None, eta=None) -> MomentGenerator:
    if d is None:
        d = decompose(xi_matrix(spec))
    n = spec.n
    J = symplectic_form(n)
    H = np.asarray(spec.hessian, dtype=float)
    xi = np.zeros(2 * n) if spec.xi is None else np.asarray(spec.xi, dtype=float)
    eta = xi if eta is None else np.asarray(eta, dtype=float)
    friction = 2 * J @ d.xi_matrix.imag
    A = J @ H - friction
    b = -J @ H @ xi + friction @ eta
    D = spec.hbar * J @ d.xi_h.real @ J.T
    D = 0.5 * (D + D.T)
    if np.allclose(eta, xi):
        shift = xi.copy()
    else:
        shift = np.linalg.lstsq(A, -b, rcond=None)[0]
    return MomentGenerator(A, D, shift, spec.hbar, b)


def classical_limit_matrices(spec: SystemSpec):
    """Drift ``(I + C J) J H`` and diffusion ``2 D`` of the classical Fokker-Planck limit."""
    cm = coupling_matrices(spec)
    J = symplectic_form(spec.n)
    A = (np.eye(2 * spec.n) + cm.C @ J) @ J @ np.asarray(spec.hessian)
    return A, 2 * np.asarray(cm.D)


def _rk4(f, y, h, steps):
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def evolve_moments(
    g: MomentGenerator, init: MomentState, t_grid, substeps: int = 10, atol: float = 1e-10
) -> list:
    """Integrate the moment equations with classical RK4.

    Each output interval starts with ``substeps`` equal steps. It is
    integrated with ``k`` and ``2k`` steps; the difference divided by 15 is
    the Richardson error estimate, and ``k`` doubles until that estimate is
    below ``atol * max(1, |y|)``. The estimate is stored in ``MomentState.error``.

    Raises
    ------
    StepUnderflow
        If the accuracy target needs a step below the floating-point spacing
        of the time.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d array")
    if np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be ascending")
    if abs(t_grid[0] - init.time) > 1e-12 * max(1.0, abs(init.time)):
        raise ValueError("t_grid must start at init.time")
    dim = g.drift.shape[0]

    def rhs(y):
        m, s = y[:dim], y[dim:].reshape(dim, dim)
        return np.concatenate([g.mean_rate(m), g.cov_rate(s).ravel()])

    def pack(m, s):
        return np.concatenate([m, s.ravel()])

    m0 = np.asarray(init.mean, dtype=float)
    s0 = np.asarray(init.cov, dtype=float)
    out = [MomentState(m0.copy(), s0.copy(), float(t_grid[0]), is_physical(s0, g.hbar))]
    y = pack(m0, s0)
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        dt = t1 - t0
        if dt == 0:
            out.append(MomentState(out[-1].mean, out[-1].cov, float(t1), out[-1].physical))
            continue
        k = max(1, int(substeps))
        coarse = None
        while True:
            h = dt / (2 * k)
            if h <= 4 * np.spacing(max(abs(t0), abs(t1))):
                raise StepUnderflow(f"step {h:.3g} below time resolution at t={t1:.6g}")
            coarse = _rk4(rhs, y, dt / k, k) if coarse is None else coarse
            fine = _rk4(rhs, y, h, 2 * k)
            err = float(np.max(np.abs(fine - coarse)) / 15.0)
            if err <= atol * max(1.0, float(np.max(np.abs(fine)))):
                break
            coarse, k = fine, 2 * k
        m = fine[:dim]
        s = fine[dim:].reshape(dim, dim)
        s = 0.5 * (s + s.T)
        y = pack(m, s)
        out.append(MomentState(m.copy(), s.copy(), float(t1), is_physical(s, g.hbar), err))
    return out


def stationary_covariance(g: MomentGenerator, rtol: float = 1e-10) -> np.ndarray:
    """Solve ``A sigma + sigma A^T + D = 0`` for a Hurwitz drift ``A``."""
    ev = np.linalg.eigvals(g.drift)
    if np.max(ev.real) >= -1e-14 * max(1.0, np.linalg.norm(g.drift)):
        raise NotHurwitz(f"drift has eigenvalue with Re >= 0 (max {np.max(ev.real):.3g})")
    sigma = solve_continuous_lyapunov(g.drift, -g.diffusion)
    sigma = 0.5 * (sigma + sigma.T)
    res = np.linalg.norm(g.cov_rate(sigma))
    if res > max(rtol * np.linalg.norm(g.diffusion), 1e-14 * np.linalg.norm(sigma)):
        # refine once; Bartels-Stewart is backward stable but not always this tight
        sigma = sigma + solve_continuous_lyapunov(g.drift, -g.cov_rate(sigma))
        sigma = 0.5 * (sigma + sigma.T)
    return sigma


def williamson(H):
    """Symplectic normal form ``H = S^T Diag(nu, nu) S`` of a positive definite ``H``.

    Returns
    -------
    nu : (n,) ndarray
        Symplectic eigenvalues in ascending order.
    S : (2n, 2n) ndarray
        Real symplectic matrix.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0] // 2
    w, v = np.linalg.eigh(H)
    if w[0] <= 0:
        raise NotPositiveDefinite(f"H has eigenvalue {w[0]:.3g} <= 0")
    Hh = (v * np.sqrt(w)) @ v.T
    Hmh = (v / np.sqrt(w)) @ v.T
    # H^{-1/2} J H^{-1/2} is antisymmetric; its real Schur form is 2x2 blocks [[0, t], [-t, 0]]
    T, Z = schur(Hmh @ symplectic_form(n) @ Hmh, output="real")
    t = np.empty(n)
    for k in range(n):
        i, j = 2 * k, 2 * k + 1
        t[k] = T[i, j]
        if t[k] < 0:
            Z[:, [i, j]] = Z[:, [j, i]]
            t[k] = -t[k]
    nu = 1.0 / t
    order = np.argsort(nu)
    nu = nu[order]
    O = Z[:, np.concatenate([2 * order, 2 * order + 1])]
    S = (O.T @ Hh) / np.sqrt(np.concatenate([nu, nu]))[:, None]
    return nu, S


def gibbs_covariance(H, beta: float, hbar: float) -> np.ndarray:
    """Thermal covariance ``(hbar/2) S^{-1} Diag(coth(hbar beta nu/2)) S^{-T}``."""
    nu, S = williamson(H)
    c = 1.0 / np.tanh(0.5 * hbar * beta * nu)
    Si = np.linalg.inv(S)
    return 0.5 * hbar * (Si * np.concatenate([c, c])) @ Si.T


def trajectory_header(n: int) -> list:
    dim = 2 * n
    cols = ["t"] + [f"mean_{i + 1}" for i in range(dim)]
    cols += [f"cov_{i + 1}{j + 1}" if dim < 10 else f"cov_{i + 1}_{j + 1}" for i in range(dim) for j in range(i, dim)]
    return cols + ["physical"]


def write_trajectory_csv(states, fh, fmt: str = ".17g") -> None:
    """Write moment states as CSV (upper-triangle covariance, ``physical`` as 0/1)."""
    dim = states[0].mean.shape[0]
    iu = np.triu_indices(dim)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(trajectory_header(dim // 2))
    for st in states:
        vals = [st.time, *st.mean, *st.cov[iu]]
        w.writerow([format(float(v), fmt) for v in vals] + [int(bool(st.physical))])
