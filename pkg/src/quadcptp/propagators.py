"""Real and Wick-rotated symplectic propagators of a quadratic Hamiltonian.

``S_t = exp(J H t)`` transports phase-space operators in time. Replacing
``t -> -i hbar beta / 2`` gives the complex symplectic matrix ``S_beta`` with
``exp(beta H/2) x exp(-beta H/2) = S_beta (x - xi) + xi``.

Two sign conventions for the Wick exponent circulate: ``APPENDIX_B`` uses
``exp(-i hbar beta J H / 2)`` (the default, and the one that reproduces the
similarity transform above), ``MAIN_TEXT`` uses ``+i``. The module-level
default can be flipped with :func:`set_default_convention`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import PropagatorOverflow, Unsupported
from .model import SystemSpec, symplectic_form

# |exponent| beyond which exp() of the generator overflows a double
_EXP_LIMIT = 700.0


class Convention(enum.Enum):
    APPENDIX_B = "appendix-b"
    MAIN_TEXT = "main-text"

    @property
    def sign(self) -> int:
        return -1 if self is Convention.APPENDIX_B else 1


_default_convention = Convention.APPENDIX_B


def set_default_convention(convention) -> Convention:
    """Set the process-wide sign convention; returns the previous one."""
    global _default_convention
    previous = _default_convention
    _default_convention = Convention(convention)
    return previous


def get_default_convention() -> Convention:
    return _default_convention


def resolve_convention(convention=None) -> Convention:
    return _default_convention if convention is None else Convention(convention)


def hamiltonian_matrix(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    return symplectic_form(H.shape[0] // 2) @ H


def real_propagator(H, t: float) -> np.ndarray:
    """Symplectic flow ``exp(J H t)`` of the quadratic Hamiltonian."""
    return expm(hamiltonian_matrix(H) * float(t))


@dataclass(frozen=True)
class WickPropagator:
    matrix: np.ndarray
    beta: float
    sign: Convention


def wick_propagator(H, beta: float, hbar: float, convention=None) -> WickPropagator:
    """``S_beta = exp(-/+ i hbar beta J H / 2)`` for the chosen convention."""
    conv = resolve_convention(convention)
    JH = hamiltonian_matrix(H)
    gen = (conv.sign * 0.5j * hbar * beta) * JH
    if np.linalg.norm(gen, 2) > _EXP_LIMIT:
        raise PropagatorOverflow(
            f"|hbar beta J H / 2| = {np.linalg.norm(gen, 2):.3g} exceeds exponent range"
        )
    S = expm(gen)
    if not np.all(np.isfinite(S)):
        raise PropagatorOverflow("matrix exponential overflowed")
    S.setflags(write=False)
    return WickPropagator(S, float(beta), conv)


def cosh_sinhc(theta_sq):
    """``(cosh(t), sinh(t)/t)`` for ``t = sqrt(theta_sq)``, continued to ``theta_sq < 0``.

    For negative argument this returns ``(cos(s), sin(s)/s)`` with
    ``s = sqrt(-theta_sq)``, the hyperbolic-to-circular continuation.
    """
    if theta_sq >= 0:
        t = np.sqrt(theta_sq)
        return np.cosh(t), (np.sinh(t) / t if t > 1e-8 else 1.0 + theta_sq / 6.0)
    s = np.sqrt(-theta_sq)
    return np.cos(s), (np.sin(s) / s if s > 1e-8 else 1.0 + theta_sq / 6.0)


def _is_network(H, rtol=1e-12):
    if H.shape != (4, 4):
        return None
    omega = H[2, 2]
    kappa = -H[0, 1]
    ref = np.zeros((4, 4))
    ref[:2, :2] = [[omega + kappa, -kappa], [-kappa, omega + kappa]]
    ref[2:, 2:] = omega * np.eye(2)
    if np.linalg.norm(H - ref) <= rtol * max(1.0, np.linalg.norm(H)):
        return omega, kappa
    return None


def network_sbeta(omega: float, kappa: float, beta: float, hbar: float, convention=None) -> np.ndarray:
    """Entrywise closed form of ``S_beta`` for the two-oscillator network.

    Normal modes have frequencies ``omega`` and ``vartheta = sqrt(omega (omega + 2 kappa))``.
    """
    conv = resolve_convention(convention)
    if omega <= 0 or omega * (omega + 2 * kappa) <= 0:
        raise Unsupported("network closed form needs omega > 0 and omega + 2 kappa > 0")
    th = np.sqrt(omega * (omega + 2 * kappa))
    a = 0.5 * hbar * beta * omega
    b = 0.5 * hbar * beta * th
    ca, cb, sa, sb = np.cosh(a), np.cosh(b), np.sinh(a), np.sinh(b)
    # entries written for the APPENDIX_B sign; MAIN_TEXT is the complex conjugate
    diag = 0.5 * ca + 0.5 * cb
    off = 0.5 * ca - 0.5 * cb
    s13 = -0.5j * sa - 0.5j * omega / th * sb
    s14 = -0.5j * sa + 0.5j * omega / th * sb
    s31 = 0.5j * sa + 0.5j * th / omega * sb
    s32 = 0.5j * sa - 0.5j * th / omega * sb
    S = np.array(
        [
            [diag, off, s13, s14],
            [off, diag, s14, s13],
            [s31, s32, diag, off],
            [s32, s31, off, diag],
        ],
        dtype=complex,
    )
    return S if conv is Convention.APPENDIX_B else S.conj()


def closed_form_sbeta(spec: SystemSpec, beta: float | None = None, convention=None) -> np.ndarray:
    """Closed-form ``S_beta`` for n = 1 (any Hessian) or the two-oscillator network.

    ``beta`` defaults to the common bath temperature of ``spec``.

    Raises
    ------
    Unsupported
        For any other Hamiltonian shape, or if ``beta`` is ambiguous.
    """
    conv = resolve_convention(convention)
    if beta is None:
        beta = spec.uniform_beta
        if beta is None:
            raise Unsupported("baths differ in temperature; pass beta explicitly")
    H = np.asarray(spec.hessian)
    hbar = spec.hbar
    if spec.n == 1:
        tau = 0.5 * hbar * beta
        c, s = cosh_sinhc(tau**2 * np.linalg.det(H))
        # exp(A) with A = sign*i*tau*JH and A^2 = tau^2 det(H) I
        return c * np.eye(2) + conv.sign * 1j * tau * s * hamiltonian_matrix(H)
    net = _is_network(H)
    if net is None:
        raise Unsupported("closed form available only for n = 1 or the oscillator network")
    return network_sbeta(net[0], net[1], beta, hbar, conv)


def symplectic_defect(S) -> float:
    """``|S^T J S - J|``, zero for (complex) symplectic matrices."""
    J = symplectic_form(S.shape[0] // 2)
    return float(np.linalg.norm(S.T @ J @ S - J))
