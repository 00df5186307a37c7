"""System description, phase-space conventions and the coupling matrices.

Phase-space vectors are ordered ``x = (q_1, ..., q_n, p_1, ..., p_n)`` everywhere
in the package. The Hamiltonian is ``H(x) = 1/2 (x - xi) . H (x - xi) + phi``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConstraintViolation, NoRealShift, SpecError


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared by the checks in this package.

    ``identity`` is relative and used for exact algebraic identities,
    ``psd`` is the eigenvalue threshold for positivity verdicts.
    """

    identity: float = 1e-12
    psd: float = 1e-10
    shift_residual: float = 1e-8


DEFAULT_TOL = Tolerances()


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BathSpec:
    gamma_q: float
    gamma_p: float
    beta: float

    def __post_init__(self):
        vals = (self.gamma_q, self.gamma_p, self.beta)
        if not all(np.isfinite(v) for v in vals):
            raise SpecError(f"bath parameters must be finite, got {vals}")
        if self.gamma_q < 0 or self.gamma_p < 0:
            raise SpecError("bath couplings gamma_q, gamma_p must be >= 0")
        if self.beta <= 0:
            raise SpecError("inverse temperature beta must be > 0")


@dataclass(frozen=True)
class SystemSpec:
    """A quadratic Hamiltonian coupled to one heat bath per degree of freedom.

    Parameters
    ----------
    hessian : (2n, 2n) array_like
        Real symmetric Hessian ``H`` in ``(q..., p...)`` ordering.
    baths : sequence of BathSpec
        One bath per degree of freedom; the momentum ``p_i`` shares the bath of
        ``q_i``.
    xi : (2n,) array_like, optional
        Equilibrium displacement. Defaults to zero.
    phi : float
        Energy offset.
    hbar : float
        Reduced Planck constant (the library is unit agnostic).
    """

    hessian: np.ndarray
    baths: tuple
    xi: np.ndarray = None
    phi: float = 0.0
    hbar: float = 1.0
    n: int = field(init=False)

    def __post_init__(self):
        H = np.asarray(self.hessian, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] % 2 or H.shape[0] == 0:
            raise SpecError(f"hessian must be 2n x 2n, got shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise SpecError("hessian has nonfinite entries")
        scale = max(1.0, np.linalg.norm(H))
        if np.linalg.norm(H - H.T) > 1e-12 * scale:
            raise SpecError("hessian is not symmetric")
        n = H.shape[0] // 2
        baths = tuple(b if isinstance(b, BathSpec) else BathSpec(**b) for b in self.baths)
        if len(baths) != n:
            raise SpecError(f"need {n} baths, got {len(baths)}")
        xi = np.zeros(2 * n) if self.xi is None else np.asarray(self.xi, dtype=float)
        if xi.shape != (2 * n,) or not np.all(np.isfinite(xi)):
            raise SpecError(f"xi must be a finite vector of length {2 * n}")
        if not (np.isfinite(self.hbar) and self.hbar > 0):
            raise SpecError("hbar must be positive and finite")
        if not np.isfinite(self.phi):
            raise SpecError("phi must be finite")
        object.__setattr__(self, "hessian", _frozen(0.5 * (H + H.T)))
        object.__setattr__(self, "baths", baths)
        object.__setattr__(self, "xi", _frozen(xi))
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "hbar", float(self.hbar))
        object.__setattr__(self, "n", n)

    @property
    def betas(self) -> np.ndarray:
        """Inverse temperature attached to each phase-space row (length 2n)."""
        b = np.array([bath.beta for bath in self.baths])
        return np.concatenate([b, b])

    @property
    def uniform_beta(self) -> float | None:
        b = {bath.beta for bath in self.baths}
        return b.pop() if len(b) == 1 else None

    def replace(self, **changes) -> "SystemSpec":
        kw = dict(hessian=self.hessian, baths=self.baths, xi=self.xi, phi=self.phi, hbar=self.hbar)
        kw.update(changes)
        return SystemSpec(**kw)

    def with_betas(self, betas: Sequence[float]) -> "SystemSpec":
        baths = [BathSpec(b.gamma_q, b.gamma_p, float(beta)) for b, beta in zip(self.baths, betas)]
        return self.replace(baths=baths)

    def permuted(self, perm: Sequence[int]) -> "SystemSpec":
        """Relabel degrees of freedom: new dof ``k`` is old dof ``perm[k]``."""
        perm = list(perm)
        full = perm + [p + self.n for p in perm]
        H = self.hessian[np.ix_(full, full)]
        return SystemSpec(H, [self.baths[p] for p in perm], self.xi[full], self.phi, self.hbar)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "hbar": self.hbar,
            "hessian": self.hessian.tolist(),
            "xi": self.xi.tolist(),
            "phi": self.phi,
            "baths": [{"gamma_q": b.gamma_q, "gamma_p": b.gamma_p, "beta": b.beta} for b in self.baths],
        }


def spec_from_dict(data: dict) -> SystemSpec:
    """Build a SystemSpec from the JSON config schema.

    Raises SpecError naming the offending field.
    """
    if not isinstance(data, dict):
        raise SpecError("config root must be a JSON object")
    for key in ("n", "hessian", "baths"):
        if key not in data:
            raise SpecError(f"missing field '{key}'")
    n = data["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise SpecError("field 'n' must be a positive integer")
    try:
        H = np.array(data["hessian"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"field 'hessian' is not a numeric matrix: {exc}") from None
    if H.shape != (2 * n, 2 * n):
        raise SpecError(f"field 'hessian' must be {2 * n}x{2 * n}, got {H.shape}")
    baths = data["baths"]
    if not isinstance(baths, list) or len(baths) != n:
        raise SpecError(f"field 'baths' must be a list of {n} objects")
    parsed = []
    for i, b in enumerate(baths):
        try:
            parsed.append(BathSpec(float(b["gamma_q"]), float(b["gamma_p"]), float(b["beta"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError(f"field 'baths[{i}]' invalid: {exc}") from None
    xi = data.get("xi")
    if xi is not None:
        try:
            xi = np.array(xi, dtype=float)
        except (TypeError, ValueError):
            raise SpecError("field 'xi' is not numeric") from None
    try:
        return SystemSpec(H, parsed, xi, float(data.get("phi", 0.0)), float(data.get("hbar", 1.0)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(str(exc)) from None


def load_spec(path) -> SystemSpec:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return spec_from_dict(data)


def harmonic_hessian(m: float, omega: float) -> np.ndarray:
    return np.diag([m * omega**2, 1.0 / m])


def network_hessian(omega: float, kappa: float) -> np.ndarray:
    """Two equal oscillators coupled through ``kappa/2 (q1 - q2)^2`` with [q] = [p]."""
    H = np.zeros((4, 4))
    H[:2, :2] = [[omega + kappa, -kappa], [-kappa, omega + kappa]]
    H[2:, 2:] = omega * np.eye(2)
    return H


def symplectic_form(n: int) -> np.ndarray:
    """Canonical symplectic matrix ``[[0, I], [-I, 0]]`` of size 2n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


@dataclass(frozen=True)
class CouplingMatrices:
    C: np.ndarray
    D: np.ndarray
    K: np.ndarray


def coupling_matrices(spec: SystemSpec) -> CouplingMatrices:
    """Friction ``C``, diffusion ``D`` and ``K = J D J^T / hbar``.

    Note the ordering swap: ``K`` lists the gamma_p entries first because
    conjugation by ``J`` exchanges the position and momentum blocks.
    """
    gq = np.array([b.gamma_q for b in spec.baths])
    gp = np.array([b.gamma_p for b in spec.baths])
    beta = np.array([b.beta for b in spec.baths])
    C = np.diag(np.concatenate([gq, gp]))
    D = np.diag(np.concatenate([gq / beta, gp / beta]))
    J = symplectic_form(spec.n)
    K = J @ D @ J.T / spec.hbar
    for m in (C, D, K):
        if not np.all(np.isfinite(m)):
            raise SpecError("coupling matrices overflowed")
    return CouplingMatrices(_frozen(C), _frozen(D), _frozen(K))


@dataclass(frozen=True)
class GeneratorCoefficients:
    """Raw coefficients of the most general quadratic dissipator.

    ``D[rho] = -(1/hbar) sum_ij (L_ij rho x_i x_j + M_ij x_i rho x_j + N_ij x_i x_j rho)
    - (1/hbar) sum_i (alpha_i x_i rho + beta_i rho x_i) + c rho``
    """

    L: np.ndarray
    M: np.ndarray
    N: np.ndarray
    alpha: np.ndarray
    beta_vec: np.ndarray
    c: complex = 0.0


def expand_generator(Xi: np.ndarray, eta: np.ndarray) -> GeneratorCoefficients:
    """Expand the ``(Xi, eta)`` dissipator into raw coefficients."""
    Xi = np.asarray(Xi, dtype=complex)
    eta = np.asarray(eta, dtype=float)
    alpha = 2j * Xi.imag @ eta
    return GeneratorCoefficients(
        L=Xi.T.copy(), M=-(Xi + Xi.conj().T), N=Xi.conj(), alpha=alpha, beta_vec=-alpha, c=0.0
    )


def canonicalize_generator(g: GeneratorCoefficients, tol: Tolerances = DEFAULT_TOL):
    """Recover ``(Xi, eta)`` from raw dissipator coefficients.

    Checks trace preservation and Hermiticity first. ``eta`` is the
    minimum-norm least-squares solution of ``alpha = 2i Im(Xi) eta``.

    Returns
    -------
    Xi : complex ndarray
    eta : real ndarray
    residual : float
        Residual of the ``eta`` solve.
    """
    L, M, N = (np.asarray(a, dtype=complex) for a in (g.L, g.M, g.N))
    alpha = np.asarray(g.alpha, dtype=complex)
    beta_vec = np.asarray(g.beta_vec, dtype=complex)
    scale = max(1.0, np.linalg.norm(L), np.linalg.norm(M), np.linalg.norm(N))
    lin_scale = max(1.0, np.linalg.norm(alpha), np.linalg.norm(beta_vec))

    trace_res = max(
        np.linalg.norm(L + M.T + N) / scale,
        np.linalg.norm(alpha + beta_vec) / lin_scale,
        abs(complex(g.c)),
    )
    if trace_res > tol.identity:
        raise ConstraintViolation("trace", trace_res)
    herm_res = max(
        np.linalg.norm(L - N.conj().T) / scale,
        np.linalg.norm(M - M.conj().T) / scale,
        np.linalg.norm(alpha - beta_vec.conj()) / lin_scale,
    )
    if herm_res > tol.identity:
        raise ConstraintViolation("hermiticity", herm_res)

    Xi = L.T.copy()
    # alpha = 2i Im(Xi) eta  =>  Im(Xi) eta = -i alpha / 2, which must be real
    rhs = -0.5j * alpha
    eta, *_ = np.linalg.lstsq(Xi.imag, rhs.real, rcond=None)
    residual = np.linalg.norm(2j * Xi.imag @ eta - alpha)
    if residual > tol.shift_residual * max(np.linalg.norm(alpha), 1e-300) and residual > 1e-14:
        raise NoRealShift(residual)
    return Xi, eta, float(residual)
