"""The dissipation matrix ``Xi``, its positivity verdict and Lindblad structure.

The master equation reads

    d rho/dt = -(i/hbar)[H_eff, rho]
               + (1/hbar) sum_mu g_mu (L_mu rho L_mu^+ - 1/2 {L_mu^+ L_mu, rho})

with ``L_mu = lambda_mu . (x - eta)`` and ``sum_mu g_mu lambda_mu lambda_mu^+ = Xi_H``.
It is of GKSL form, hence generates a CPTP semigroup, exactly when
``Xi_H = Xi + Xi^+`` is positive semidefinite.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import NotGCommuting, NotUnitary
from .model import SystemSpec, coupling_matrices, symplectic_form
from .propagators import wick_propagator

DEFAULT_PSD_TOL = 1e-10
DEFAULT_RANK_TOL = 1e-12


class Verdict(enum.Enum):
    CPTP = "CPTP"
    NOT_CPTP = "NotCPTP"
    MARGINAL = "Marginal"

    @property
    def exit_code(self) -> int:
        return {Verdict.CPTP: 0, Verdict.NOT_CPTP: 1, Verdict.MARGINAL: 3}[self]


def xi_matrix(spec: SystemSpec, convention=None) -> np.ndarray:
    """``Xi_ij = K_ii (S_{beta_i})_ij`` with ``beta_{i+n} = beta_i``."""
    K = np.diag(coupling_matrices(spec).K)
    cache = {}
    Xi = np.empty((2 * spec.n, 2 * spec.n), dtype=complex)
    for i, beta in enumerate(spec.betas):
        if beta not in cache:
            cache[beta] = wick_propagator(spec.hessian, beta, spec.hbar, convention).matrix
        Xi[i] = K[i] * cache[beta][i]
    return Xi


def psd_threshold(xi_h: np.ndarray, tol: float = DEFAULT_PSD_TOL) -> float:
    return tol * max(1.0, float(np.linalg.norm(xi_h)))


def classify(min_eig: float, threshold: float) -> Verdict:
    if abs(min_eig) < threshold:
        return Verdict.MARGINAL
    return Verdict.CPTP if min_eig > 0 else Verdict.NOT_CPTP


@dataclass(frozen=True)
class XiDecomposition:
    """Hermitian/anti-Hermitian split of ``Xi`` and the positivity verdict.

    ``Xi_H = Xi + Xi^+`` and ``Xi_A = Xi - Xi^+`` so that ``Xi = (Xi_H + Xi_A)/2``.
    ``eigenvalues`` are those of ``Xi_H`` in ascending order.
    """

    xi_matrix: np.ndarray
    xi_h: np.ndarray
    xi_a: np.ndarray
    eigenvalues: np.ndarray
    verdict: Verdict
    eigenvectors: np.ndarray = field(repr=False, default=None)
    tol: float = DEFAULT_PSD_TOL

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])


def decompose(xi, tol: float = DEFAULT_PSD_TOL) -> XiDecomposition:
    xi = np.asarray(xi, dtype=complex)
    xi_h = xi + xi.conj().T
    xi_a = xi - xi.conj().T
    w, v = np.linalg.eigh(0.5 * (xi_h + xi_h.conj().T))
    verdict = classify(w[0], psd_threshold(xi_h, tol))
    return XiDecomposition(xi, xi_h, xi_a, w, verdict, v, tol)


def analyze(spec: SystemSpec, convention=None, tol: float = DEFAULT_PSD_TOL) -> XiDecomposition:
    """Shorthand for ``decompose(xi_matrix(spec, convention), tol)``."""
    return decompose(xi_matrix(spec, convention), tol)


@dataclass(frozen=True)
class LindbladSet:
    """Lindblad coefficient vectors with signs and the effective Hamiltonian data.

    Rows of ``lambdas`` are the ``lambda_mu``. ``h_eff`` holds ``(H, W)`` where
    ``W = -(i/2) Xi_A^*`` is the extra quadratic kernel in ``(x - eta)``.
    ``shift`` is a real linear term ``shift . (x - eta)`` added to the
    Hamiltonian by a gauge transformation, and ``offsets`` are the constant
    parts ``varsigma_mu`` of the jump operators.
    """

    lambdas: np.ndarray
    signs: np.ndarray
    eta: np.ndarray
    h_eff: tuple
    offsets: np.ndarray = None
    shift: np.ndarray = None

    def __post_init__(self):
        m, dim = self.lambdas.shape
        if self.offsets is None:
            object.__setattr__(self, "offsets", np.zeros(m, dtype=complex))
        if self.shift is None:
            object.__setattr__(self, "shift", np.zeros(dim))

    def __len__(self):
        return self.lambdas.shape[0]

    def reconstruct_xi_h(self) -> np.ndarray:
        lam = self.lambdas
        return (lam.T * self.signs) @ lam.conj()

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.signs > 0))


def lindblad_decomposition(
    d: XiDecomposition, eta, rank_tol: float | None = None, hessian=None
) -> LindbladSet:
    """Spectral factorization ``lambda_mu = sqrt(|a_mu|) v_mu``, ``g_mu = sign(a_mu)``.

    Eigen-directions with ``|a_mu| <= rank_tol`` are dropped; the default
    threshold is ``1e-12`` times the largest absolute eigenvalue.
    """
    w = d.eigenvalues
    v = d.eigenvectors
    if v is None:
        w, v = np.linalg.eigh(0.5 * (d.xi_h + d.xi_h.conj().T))
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if rank_tol is None:
        rank_tol = DEFAULT_RANK_TOL * scale
    keep = np.abs(w) > rank_tol
    if scale == 0.0:
        keep[:] = False
    lambdas = (np.sqrt(np.abs(w[keep])) * v[:, keep]).T
    signs = np.sign(w[keep]).astype(int)
    H = None if hessian is None else np.asarray(hessian, dtype=float)
    W = -0.5j * d.xi_a.conj()
    eta = np.asarray(eta, dtype=float)
    return LindbladSet(np.ascontiguousarray(lambdas), signs, eta, (H, W))


def gauge_transform(ls: LindbladSet, U, sigma, atol: float = 1e-12) -> LindbladSet:
    """Apply ``L'_mu = sum_nu U_mu,nu L_nu + varsigma_mu``.

    ``U`` must be unitary and commute with ``g = diag(signs)``. The shift by
    ``varsigma`` is compensated by a linear Hamiltonian term so that the
    generator is unchanged.
    """
    U = np.asarray(U, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    m = len(ls)
    if U.shape != (m, m) or sigma.shape != (m,):
        raise ValueError(f"U must be {m}x{m} and sigma length {m}")
    if np.linalg.norm(U @ U.conj().T - np.eye(m)) > atol * max(1, m):
        raise NotUnitary("U U^+ != I")
    g = np.diag(ls.signs.astype(float))
    if np.linalg.norm(U @ g @ U.conj().T - g) > atol * max(1, m):
        raise NotGCommuting("U g U^+ != g")
    lam = U @ ls.lambdas
    offsets = U @ ls.offsets + sigma
    # -(i g/2)(s^* L - s L^+) with L = lam . z is the real linear term g Im(s^* lam) . z
    shift = ls.shift + np.einsum("m,mk->k", ls.signs, (sigma.conj()[:, None] * lam).imag)
    return LindbladSet(lam, ls.signs.copy(), ls.eta, ls.h_eff, offsets, shift)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """``H_eff = 1/2 x.kernel.x + linear.x + constant`` in operator form."""

    kernel: np.ndarray
    linear: np.ndarray
    constant: float


def effective_hamiltonian(spec: SystemSpec, d: XiDecomposition, eta=None) -> EffectiveHamiltonian:
    """Quadratic form of ``H - (i/2)(x - eta).Xi_A^*.(x - eta)``.

    The antisymmetric part of the complex kernel only contributes a constant
    through the canonical commutators, so the operator kernel is real symmetric.
    """
    n = spec.n
    xi = np.zeros(2 * n) if spec.xi is None else np.asarray(spec.xi, dtype=float)
    eta = xi if eta is None else np.asarray(eta, dtype=float)
    H = np.asarray(spec.hessian, dtype=float)
    W = -1j * d.xi_a.conj()  # 1/2 z.W.z equals the -(i/2) z.Xi_A^*.z term
    Ws, Wa = W.real, W.imag
    Ws = 0.5 * (Ws + Ws.T)
    J = symplectic_form(n)
    kernel = H + Ws
    linear = -(H @ xi + Ws @ eta)
    # (i/2) z.Im(W).z = (i/2)(i hbar/2) sum Im(W)_jk J_jk
    constant = (
        spec.phi + 0.5 * xi @ H @ xi + 0.5 * eta @ Ws @ eta - 0.25 * spec.hbar * np.sum(Wa * J)
    )
    return EffectiveHamiltonian(kernel, linear, float(constant))
