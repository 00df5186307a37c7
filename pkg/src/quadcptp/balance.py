"""Quantum detailed-balance diagnostics for quadratic generators.

For a uniform temperature the three detailed-balance conditions become
matrix statements about the Lindblad vectors:

(i)   ``S_t^T Xi_A S_t = Xi_A`` for all ``t``,
(ii)  ``S_t^T lambda_mu = exp(-i omega_mu t) lambda_mu``, i.e. each
      ``lambda_mu`` is an eigenvector of ``(J H)^T`` with eigenvalue ``-i omega_mu``,
(iii) vectors pair as ``lambda_nu = exp(-beta hbar omega_mu / 2) lambda_mu^*``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cptp import LindbladSet, XiDecomposition
from .errors import NonUniformTemperature
from .model import SystemSpec, coupling_matrices
from .propagators import hamiltonian_matrix, real_propagator, wick_propagator


def elliptic_classify(H, tol: float = 1e-10):
    """Whether ``J H`` has a purely imaginary, zero-free spectrum.

    Returns
    -------
    elliptic : bool
    spectrum : complex ndarray
        Eigenvalues of ``J H`` sorted by imaginary part.
    """
    JH = hamiltonian_matrix(H)
    ev = np.linalg.eigvals(JH)
    ev = ev[np.argsort(ev.imag)]
    scale = max(1.0, float(np.linalg.norm(JH, 2)))
    elliptic = bool(np.all(np.abs(ev.real) <= tol * scale) and np.all(np.abs(ev.imag) > tol * scale))
    return elliptic, ev


@dataclass(frozen=True)
class Pairing:
    upper: int
    lower: int
    omega: float
    weight: float
    expected_weight: float
    residual: float


@dataclass(frozen=True)
class BalanceReport:
    """Residuals of the detailed-balance conditions; all are relative Frobenius norms.

    ``eigen_residuals`` test the supplied Lindblad vectors one by one and so
    depend on the gauge. ``coherence`` is the gauge-free form of condition
    (ii): the part of ``Xi_H`` coupling different Bohr frequencies in the
    eigenbasis of ``(J H)^T``. ``balanced_lambdas`` are the vectors in the
    gauge where (ii) holds, with frequencies ``bohr_frequencies``.
    """

    commutes: float
    inv_xi_h: float
    inv_xi: float
    inv_xi_a: float
    xi_a_norm: float
    elliptic: bool
    bohr_frequencies: list
    eigen_residuals: list
    coherence: float = 0.0
    balanced_lambdas: np.ndarray = field(default=None, repr=False)
    pairings: list = field(default_factory=list)
    pairing_residual: float = 0.0
    necessary_residual: float = 0.0
    period: float = 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pairings"] = [asdict(p) for p in self.pairings]
        lam = np.asarray(self.balanced_lambdas)
        out["balanced_lambdas"] = {"re": lam.real.tolist(), "im": lam.imag.tolist()}
        return out


def _rel(a, ref) -> float:
    return float(np.linalg.norm(a) / max(1.0, np.linalg.norm(ref)))


def balance_check(
    spec: SystemSpec,
    d: XiDecomposition,
    ls: LindbladSet,
    convention=None,
    n_grid: int = 16,
    tol: float = 1e-8,
) -> BalanceReport:
    """Evaluate conditions (i)-(iii) and the invariance relations under ``S_beta``.

    Raises
    ------
    NonUniformTemperature
        If the baths do not share one temperature.
    """
    beta = spec.uniform_beta
    if beta is None:
        raise NonUniformTemperature("detailed balance needs a common bath temperature")
    H = np.asarray(spec.hessian)
    hbar = spec.hbar
    Sb = wick_propagator(H, beta, hbar, convention).matrix
    Xi, XH, XA = d.xi_matrix, d.xi_h, d.xi_a
    inv_h = _rel(Sb.T @ XH @ Sb - XH, XH)
    inv_x = _rel(Sb.T @ Xi @ Sb - Xi, Xi)
    inv_a = _rel(Sb.T @ XA @ Sb - XA, XH)

    elliptic, spectrum = elliptic_classify(H)
    JH = hamiltonian_matrix(H)
    freqs = np.abs(spectrum.imag)
    positive = freqs[freqs > 1e-12]
    if elliptic and positive.size:
        period = 2 * np.pi / float(np.min(positive))
    else:
        period = 2 * np.pi / max(1e-12, float(np.linalg.norm(JH, 2)))
    commutes = 0.0
    for t in np.linspace(0, period, n_grid + 1)[1:]:
        St = real_propagator(H, t)
        commutes = max(commutes, _rel(St.T @ XA @ St - XA, XH))

    # given vectors: Rayleigh quotient of (JH)^T, gauge dependent
    JHt = JH.T
    jh_norm = max(1.0, float(np.linalg.norm(JH, 2)))
    residuals = []
    for lam in ls.lambdas:
        mu = np.vdot(lam, JHt @ lam) / np.vdot(lam, lam).real
        residuals.append(float(np.linalg.norm(JHt @ lam - mu * lam) / np.linalg.norm(lam) / jh_norm))

    # condition (ii) in the gauge fixed by the eigenbasis u_k of (JH)^T:
    # Xi_H = U C U^+ must be block diagonal over equal Bohr frequencies
    bohr, balanced, coherence = [], np.zeros((0, H.shape[0]), complex), np.inf
    if elliptic:
        ev, U = np.linalg.eig(JHt)
        omegas = -ev.imag
        xi_h = (ls.lambdas.T * ls.signs) @ ls.lambdas.conj() if len(ls) else np.zeros_like(XH)
        Ui = np.linalg.inv(U)
        C = Ui @ xi_h @ Ui.conj().T
        same = np.abs(omegas[:, None] - omegas[None, :]) <= tol * jh_norm
        coherence = float(np.linalg.norm(np.where(same, 0, C)) / max(1.0, np.linalg.norm(C)))
        weights = np.real(np.diag(C))
        keep = np.abs(weights) > 1e-12 * max(1e-300, np.max(np.abs(weights)))
        balanced = (np.sqrt(np.abs(weights[keep])) * U[:, keep]).T
        bohr = [float(w) for w in omegas[keep]]

    # condition (iii): match omega > 0 vectors with omega < 0 partners
    up = [i for i, w in enumerate(bohr) if w > 0]
    lo = [i for i, w in enumerate(bohr) if w < 0]
    pairings = []
    pair_res = 0.0
    if up and lo:
        cost = np.empty((len(up), len(lo)))
        for a, i in enumerate(up):
            li = balanced[i]
            target = np.exp(-beta * hbar * bohr[i]) * np.outer(li.conj(), li)
            for b, j in enumerate(lo):
                lj = balanced[j]
                cost[a, b] = np.linalg.norm(np.outer(lj, lj.conj()) - target) / np.linalg.norm(li) ** 2
        rows, cols = linear_sum_assignment(cost)
        for a, b in zip(rows, cols):
            i, j = up[a], lo[b]
            weight = float(np.vdot(balanced[j], balanced[j]).real / np.vdot(balanced[i], balanced[i]).real)
            expected = float(np.exp(-beta * hbar * bohr[i]))
            pairings.append(Pairing(i, j, bohr[i], weight, expected, float(cost[a, b])))
            pair_res = max(pair_res, float(cost[a, b]))
    if len(balanced) > 2 * len(pairings):
        pair_res = max(pair_res, 1.0)  # some vector has no partner

    K = np.asarray(coupling_matrices(spec).K)
    necessary = max(_rel(XA, XH), _rel(XH - 2 * K @ Sb, XH))
    return BalanceReport(
        commutes=commutes,
        inv_xi_h=inv_h,
        inv_xi=inv_x,
        inv_xi_a=inv_a,
        xi_a_norm=float(np.linalg.norm(XA)),
        elliptic=elliptic,
        bohr_frequencies=bohr,
        eigen_residuals=residuals,
        coherence=coherence,
        balanced_lambdas=balanced,
        pairings=pairings,
        pairing_residual=pair_res,
        necessary_residual=necessary,
        period=period,
    )
