"""Closed-form results for one degree of freedom.

For n = 1 and ``Theta^2 = (hbar beta/2)^2 det H`` the dissipation matrix is

    Xi_H = 2 cosh(Theta) K - (i/2) (sinh(Theta)/Theta) Tr(CH) J

so positivity reduces to a trace and a determinant condition. The
hyperbolic (``det H < 0``) and parabolic (``det H = 0``) classes follow by
analytic continuation of ``cosh`` and ``sinh(t)/t``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .cptp import Verdict, classify, DEFAULT_PSD_TOL
from .model import BathSpec, SystemSpec, symplectic_form
from .propagators import cosh_sinhc

_J2 = symplectic_form(1)
_SX = np.array([[0.0, 1.0], [1.0, 0.0]])


class Case(enum.Enum):
    ELLIPTIC = "Elliptic"
    HYPERBOLIC = "Hyperbolic"
    PARABOLIC = "Parabolic"


def classify_hessian(H, rtol: float = 1e-14) -> Case:
    H = np.asarray(H, dtype=float)
    det = np.linalg.det(H)
    if abs(det) <= rtol * max(np.sum(H * H), 1e-300):
        return Case.PARABOLIC
    return Case.ELLIPTIC if det > 0 else Case.HYPERBOLIC


def _gammas(C):
    C = np.asarray(C, dtype=float)
    if C.shape == (2, 2):
        if abs(C[0, 1]) + abs(C[1, 0]) > 0:
            raise ValueError("C must be diagonal")
        return float(C[0, 0]), float(C[1, 1])
    if C.shape == (2,):
        return float(C[0]), float(C[1])
    raise ValueError("C must be Diag(gamma_q, gamma_p) or a (gamma_q, gamma_p) pair")


def in_theta_window(theta: float, bound: int = 10**6) -> bool:
    """``cos(Theta) >= 0`` windows: ``[0, pi/2]`` or ``[pi/2 + (2N+1)pi, pi/2 + 2(N+1)pi]``."""
    if 0 <= theta <= np.pi / 2:
        return True
    N = int(np.floor((theta - 1.5 * np.pi) / (2 * np.pi)))
    if N < 0 or N > bound:
        return False
    return np.pi / 2 + (2 * N + 1) * np.pi <= theta <= np.pi / 2 + 2 * (N + 1) * np.pi


@dataclass(frozen=True)
class N1Report:
    """Closed-form positivity data for one degree of freedom at one temperature.

    ``theta`` is the real angle: ``Theta`` when elliptic, ``|Theta|`` of the
    continued argument when hyperbolic and 0 when parabolic.
    ``condition_lhs`` is ``(Tr CH)^2 / (4 det CH)`` (NaN and ``degenerate``
    when ``det CH = 0``); ``condition_at_beta`` is the temperature-dependent
    quantity whose being ``<= 1`` (plus the window test in the hyperbolic case)
    is equivalent to ``det Xi_H >= 0``.
    """

    theta: float
    case: Case
    trace_xih: float
    det_xih: float
    condition_lhs: float
    cptp_all_beta: bool
    psi_minus: float
    psi_plus: float
    condition_at_beta: float
    cptp_at_beta: bool
    verdict: Verdict
    degenerate: bool
    in_window: bool
    xi_h: np.ndarray
    xi_a: np.ndarray

    @property
    def eigenvalues(self):
        return self.psi_minus, self.psi_plus


def n1_analysis(
    C, H, beta: float, hbar: float, tol: float = DEFAULT_PSD_TOL, window_bound: int = 10**6
) -> N1Report:
    """Analytic ``Xi_H`` trace, determinant, eigenvalues and positivity conditions."""
    gq, gp = _gammas(C)
    H = np.asarray(H, dtype=float)
    case = classify_hessian(H)
    detH = 0.0 if case is Case.PARABOLIC else float(np.linalg.det(H))
    hb = hbar * beta
    tau = 0.5 * hb
    c, s = cosh_sinhc(tau**2 * detH)
    theta = tau * np.sqrt(abs(detH))
    T = gq * H[0, 0] + gp * H[1, 1]
    k1, k2 = gp / hb, gq / hb
    K = np.diag([k1, k2])

    xi_h = 2 * c * K - 0.5j * s * T * _J2
    # Xi_A = -i tau s (K J H + (K J H)^T)
    KJH = K @ _J2 @ H
    xi_a = -1j * tau * s * (KJH + KJH.T)
    trace = 2 * c * (gp + gq) / hb
    det = 4 * c * c * k1 * k2 - (0.5 * s * T) ** 2
    disc = np.sqrt(max(trace * trace - 4 * det, 0.0))
    psi_m, psi_p = 0.5 * (trace - disc), 0.5 * (trace + disc)
    if psi_m != 0 and abs(psi_m) < 1e-8 * abs(psi_p):
        psi_m = det / psi_p  # avoid cancellation
    norm = np.sqrt(4 * c * c * (k1 * k1 + k2 * k2) + 2 * (0.5 * s * T) ** 2)
    verdict = classify(psi_m, tol * max(1.0, norm))

    det_ch = gq * gp * detH
    degenerate = det_ch == 0.0
    lhs = np.nan if degenerate else 0.25 * T * T / det_ch
    window = True
    if case is Case.ELLIPTIC:
        at_beta = (np.inf if T else 0.0) if degenerate else lhs * np.tanh(theta) ** 2
        all_beta = (abs(T) == 0.0) if degenerate else lhs <= 1 + 1e-12
    elif case is Case.HYPERBOLIC:
        window = in_theta_window(theta, window_bound)
        t2 = np.tan(theta) ** 2
        if degenerate:
            at_beta = 0.0 if T * T * t2 == 0 else np.inf
        else:
            at_beta = 0.25 * T * T / abs(det_ch) * t2
        all_beta = gq == 0.0 and gp == 0.0
    else:
        at_beta = (np.inf if T else 0.0) if gq * gp == 0 else (hb * T) ** 2 / (16 * gq * gp)
        all_beta = T == 0.0
    cptp_at_beta = bool(window and at_beta <= 1.0)

    return N1Report(
        theta=float(theta),
        case=case,
        trace_xih=float(trace),
        det_xih=float(det),
        condition_lhs=float(lhs),
        cptp_all_beta=bool(all_beta),
        psi_minus=float(psi_m),
        psi_plus=float(psi_p),
        condition_at_beta=float(at_beta),
        cptp_at_beta=cptp_at_beta,
        verdict=verdict,
        degenerate=bool(degenerate),
        in_window=bool(window),
        xi_h=xi_h,
        xi_a=xi_a,
    )


def harmonic_tuning(m: float, omega: float) -> float:
    """Ratio ``gamma_p / gamma_q = (m omega)^2`` that makes the oscillator CPTP at every temperature."""
    if m <= 0 or omega <= 0:
        raise ValueError("m and omega must be positive")
    return (m * omega) ** 2


def optical_parameters(m, omega, beta, hbar, gamma_tilde):
    """Temperature-dependent couplings reproducing the optical master equation.

    Returns
    -------
    gamma_p, gamma_q, nbar : float
        ``gamma_p = m gamma_tilde x / (2 sinh(x/2))`` with ``x = hbar beta omega``,
        ``gamma_q = gamma_p / (m omega)^2`` and the Bose occupation ``nbar``.
    """
    for v in (m, omega, beta, hbar, gamma_tilde):
        if not v > 0:
            raise ValueError("all parameters must be positive")
    x = hbar * beta * omega
    half = 0.5 * x
    ratio = 1.0 if half < 1e-8 else half / np.sinh(half)
    gamma_p = m * gamma_tilde * ratio
    gamma_q = gamma_p / (m * omega) ** 2
    nbar = 1.0 / np.expm1(x)
    return float(gamma_p), float(gamma_q), float(nbar)


def tuned_oscillator_spec(m, omega, beta, hbar, gamma_tilde, xi=None) -> SystemSpec:
    """Oscillator ``H = Diag(m omega^2, 1/m)`` with the optical couplings."""
    gp, gq, _ = optical_parameters(m, omega, beta, hbar, gamma_tilde)
    H = np.diag([m * omega**2, 1.0 / m])
    return SystemSpec(H, (BathSpec(gq, gp, beta),), xi=xi, hbar=hbar)


@dataclass(frozen=True)
class CLEmbedding:
    """QTCL parameters (``gamma_q = 0``) that reproduce a Caldeira-Leggett generator."""

    gamma_p: float
    gamma_o: float
    theta: float
    consistent: bool
    spec: SystemSpec


@dataclass(frozen=True)
class CaldeiraLeggett:
    xi_h: np.ndarray
    xi_a: np.ndarray
    psi_minus: float
    psi_plus: float
    embedding: CLEmbedding | None = None
    unembeddable: str | None = None


def caldeira_leggett(zeta, gamma_o, beta, hbar, H=None, rtol: float = 1e-10) -> CaldeiraLeggett:
    """Dissipation matrices of the Caldeira-Leggett equation.

    ``Xi_H = (2 zeta/hbar beta) Diag(1, 0) - i gamma_o J`` and
    ``Xi_A = -i gamma_o sigma_x``. If a Hessian ``H`` is given, also return the
    QTCL couplings with ``gamma_q = 0`` whose dissipation matrices coincide,
    ``gamma_p = zeta sech(Theta)`` and ``gamma_o = zeta H22 tanh(Theta)/(2 Theta)``.
    """
    if zeta < 0:
        raise ValueError("zeta must be >= 0")
    hb = hbar * beta
    xi_h = np.diag([2 * zeta / hb, 0.0]).astype(complex) - 1j * gamma_o * _J2
    xi_a = -1j * gamma_o * _SX
    a = zeta / hb
    r = np.hypot(a, gamma_o)
    psi_m = a - r if a <= 0 else -gamma_o**2 / (a + r)
    psi_p = a + r
    if H is None:
        return CaldeiraLeggett(xi_h, xi_a, float(psi_m), float(psi_p))
    H = np.asarray(H, dtype=float)
    if H[0, 1] != 0.0:
        return CaldeiraLeggett(xi_h, xi_a, psi_m, psi_p, None, "H12 != 0")
    detH = H[0, 0] * H[1, 1]
    c, s = cosh_sinhc((0.5 * hb) ** 2 * detH)
    if c <= 0:
        return CaldeiraLeggett(xi_h, xi_a, psi_m, psi_p, None, "cos(Theta) <= 0 gives gamma_p < 0")
    gamma_p = zeta / c
    required = 0.5 * zeta * H[1, 1] * s / c
    consistent = abs(required - gamma_o) <= rtol * max(1.0, abs(gamma_o))
    spec = SystemSpec(H, (BathSpec(0.0, gamma_p, beta),), hbar=hbar)
    theta = 0.5 * hb * np.sqrt(abs(detH))
    emb = CLEmbedding(float(gamma_p), float(required), float(theta), bool(consistent), spec)
    return CaldeiraLeggett(xi_h, xi_a, float(psi_m), float(psi_p), emb, None)


def kramers_obstruction(H, gamma_p, beta, hbar) -> float:
    """``det Xi_H`` when ``gamma_q = 0``: ``-(gamma_p H22 sinh(Theta)/(2 Theta))^2``.

    Non-positive, and zero only when ``H22 = 0``.
    """
    H = np.asarray(H, dtype=float)
    _, s = cosh_sinhc((0.5 * hbar * beta) ** 2 * np.linalg.det(H))
    return float(-((0.5 * gamma_p * H[1, 1] * s) ** 2))
