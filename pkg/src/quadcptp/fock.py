"""Brute-force Fock-space oracle for the quadratic master equations.

Everything here works with explicit operator matrices on a truncated
multimode Fock space, so it is independent of the phase-space algebra in
:mod:`quadcptp.cptp` and :mod:`quadcptp.dynamics`.

A superoperator is stored as a list of terms ``(A, B)`` meaning
``L(rho) = sum_k A_k rho B_k``. Dense matrices (row-major ``vec``, so
``vec(A rho B) = (A kron B^T) vec(rho)``) are only materialized on request and
within a memory budget.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.sparse.linalg import LinearOperator, expm_multiply

from .errors import BudgetExceeded, TruncationBreach
from .model import SystemSpec, coupling_matrices

MAX_HILBERT_DIM = 1024
MAX_DENSE_BYTES = 512 * 2**20
LEAK_TOL = 1e-6


class Source(enum.Enum):
    DIRECT = "DirectEq2"
    QTCL = "QTCL"
    HIGH_TEMP = "HighTempEq8"
    OPTICS = "OpticsEq22"
    GTCL = "GTCL"


def _ladder(N: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1).astype(complex)


def _mode_ops(n_modes: int, N: int, scales, hbar: float):
    """Annihilation, position and momentum matrices; mode 1 is the most significant factor."""
    a1 = _ladder(N)
    eye = np.eye(N)
    a_ops, q_ops, p_ops = [], [], []
    for k in range(n_modes):
        factors = [eye] * n_modes
        factors[k] = a1
        a = factors[0]
        for fct in factors[1:]:
            a = np.kron(a, fct)
        s = scales[k]
        ad = a.conj().T
        a_ops.append(a)
        q_ops.append(np.sqrt(hbar / (2 * s)) * (a + ad))
        p_ops.append(1j * np.sqrt(hbar * s / 2) * (ad - a))
    return a_ops, q_ops, p_ops


def _phase_ops(n_modes: int, N: int, scales, hbar: float, frame=None):
    """Ladder operators and ``x = frame . x_F`` where ``x_F`` are the Fock quadratures."""
    a, q, p = _mode_ops(n_modes, N, scales, hbar)
    xf = q + p
    if frame is None:
        return a, xf
    M = np.asarray(frame, dtype=float)
    return a, [sum(M[j, k] * xf[k] for k in range(2 * n_modes) if M[j, k] != 0) for j in range(2 * n_modes)]


def _occupations(n_modes: int, N: int) -> np.ndarray:
    return np.array(list(itertools.product(range(N), repeat=n_modes)), dtype=int).reshape(-1, n_modes)


def _quadratic_operator(x, H, xi, phi):
    """``1/2 sum H_jk (x - xi)_j (x - xi)_k + phi``, Hermitized."""
    dim = x[0].shape[0]
    eye = np.eye(dim)
    z = [xj - xi[j] * eye for j, xj in enumerate(x)]
    out = phi * eye.astype(complex)
    for j, k in zip(*np.nonzero(H)):
        out = out + 0.5 * H[j, k] * (z[j] @ z[k])
    return 0.5 * (out + out.conj().T)


def default_scales(spec: SystemSpec) -> np.ndarray:
    """Per-mode scale ``sqrt(H_qq / H_pp)``, i.e. ``m omega`` for an oscillator."""
    n = spec.n
    H = np.asarray(spec.hessian)
    out = np.ones(n)
    for k in range(n):
        hq, hp = H[k, k], H[n + k, n + k]
        if hq > 0 and hp > 0:
            out[k] = np.sqrt(hq / hp)
    return out


def adapted_frame(spec: SystemSpec, margin: float = 0.15):
    """Symplectic frame and Fock scales in which ``e^{+-beta H/2}`` is well conditioned.

    Positive or negative definite ``H`` uses its normal modes, so the
    truncated Hamiltonian is exactly diagonal. For one mode a rank-one ``H``
    is rotated onto ``p^2`` with a scale keeping ``e^{beta H/2}`` applied to
    Fock states normalizable, and an indefinite ``H`` is brought to
    ``lambda (p^2 - q^2)/2``. Returns ``(frame, scales)``; ``frame`` is
    ``None`` when no adaptation applies.
    """
    from .dynamics import williamson

    H = np.asarray(spec.hessian, dtype=float)
    n = spec.n
    w = np.linalg.eigvalsh(H)
    tol = 1e-12 * max(1.0, np.max(np.abs(w)))
    if w[0] > tol or w[-1] < -tol:
        sign = 1.0 if w[0] > tol else -1.0
        _, S = williamson(sign * H)
        return np.linalg.inv(S), np.ones(n)
    if n != 1:
        return None, default_scales(spec)
    if np.all(np.abs(w) <= tol):
        return None, np.ones(1)
    vals, vecs = np.linalg.eigh(H)
    if np.linalg.det(vecs) < 0:
        vecs[:, 0] = -vecs[:, 0]
    if abs(vals[0]) <= tol or abs(vals[1]) <= tol:
        # rank one: H = lam v v^T; map v onto the momentum axis
        k = 0 if abs(vals[0]) > abs(vals[1]) else 1
        v = vecs[:, k]
        M = np.column_stack([np.array([-v[1], v[0]]), -v])
        lam = abs(vals[k])
        beta = float(np.max(spec.betas))
        s = min(1.0, 2 * margin / (spec.hbar * beta * lam))
        return M, np.array([s])
    # indefinite: rotate to Diag(h1 < 0, h2 > 0), then squeeze to lambda Diag(-1, 1)
    d = (vals[1] / -vals[0]) ** 0.25
    M = vecs @ np.diag([d, 1.0 / d])
    return M, np.ones(1)


def _check_dim(n_modes: int, N: int, limit: int = MAX_HILBERT_DIM):
    dim = N**n_modes
    if dim > limit:
        raise BudgetExceeded(f"Hilbert dimension {N}^{n_modes} = {dim} exceeds budget {limit}")
    return dim


@dataclass
class FockRep:
    """Truncated Fock representation of the phase-space operators.

    ``q``, ``p`` are the truncated matrices. ``hamiltonian`` and the
    ``second`` moment operators ``x_j x_k`` are the projections of the exact
    operators (computed with one extra level per mode) so they are exact on
    every state supported below the truncation edge.
    """

    n_modes: int
    N: int
    scales: np.ndarray
    hbar: float
    q: list
    p: list
    a: list
    hamiltonian: np.ndarray
    identity: np.ndarray
    occupations: np.ndarray
    second: np.ndarray = field(repr=False)
    spec: SystemSpec = field(repr=False, default=None)
    frame: np.ndarray = None

    @property
    def x(self) -> list:
        return self.q + self.p

    @property
    def dim(self) -> int:
        return self.identity.shape[0]

    def low_block(self, margin: int = 4) -> np.ndarray:
        """Indices of basis states with every occupation below ``N - margin``."""
        return np.nonzero(np.all(self.occupations < self.N - margin, axis=1))[0]

    def edge_population(self, rho, levels: int = 2) -> float:
        """Largest population, over modes, of the top ``levels`` Fock levels."""
        diag = np.real(np.diag(rho))
        return max(
            float(diag[self.occupations[:, k] >= self.N - levels].sum()) for k in range(self.n_modes)
        )

    def moments(self, rho):
        x = self.x
        mean = np.array([np.real(np.trace(rho @ xj)) for xj in x])
        second = np.real(np.einsum("jkab,ba->jk", self.second, rho))
        cov = 0.5 * (second + second.T) - np.outer(mean, mean)
        return mean, cov


def build_fock(
    spec: SystemSpec, N: int, scale=None, max_dim: int = MAX_HILBERT_DIM, frame=None
) -> FockRep:
    """Ladder-operator representation with ``q = sqrt(hbar/2s)(a + a^+)``, ``p = i sqrt(hbar s/2)(a^+ - a)``.

    ``frame`` is an optional real symplectic matrix ``M`` with ``x = M x_F``,
    where ``x_F`` are the Fock quadratures above; ``"auto"`` picks
    :func:`adapted_frame`.

    Raises
    ------
    BudgetExceeded
        If ``N**n`` is larger than ``max_dim``.
    """
    if N < 2:
        raise ValueError("truncation N must be >= 2")
    n = spec.n
    _check_dim(n, N, max_dim)
    if isinstance(frame, str):
        if frame != "auto":
            raise ValueError("frame must be a matrix, None or 'auto'")
        frame, auto_scales = adapted_frame(spec)
        if scale is None:
            scale = auto_scales
    scales = default_scales(spec) if scale is None else np.broadcast_to(np.asarray(scale, float), (n,)).copy()
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")
    if frame is not None:
        frame = np.asarray(frame, dtype=float)
        J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
        if np.linalg.norm(frame @ J @ frame.T - J) > 1e-10 * max(1.0, np.linalg.norm(frame) ** 2):
            raise ValueError("frame must be symplectic")
    hbar = spec.hbar
    a, x = _phase_ops(n, N, scales, hbar, frame)
    q, p = x[:n], x[n:]
    # one spare level per mode gives exact matrix elements of products
    _, xb = _phase_ops(n, N + 1, scales, hbar, frame)
    occ_big = _occupations(n, N + 1)
    keep = np.nonzero(np.all(occ_big < N, axis=1))[0]
    proj = np.ix_(keep, keep)
    second = np.array([[(xj @ xk)[proj] for xk in xb] for xj in xb])
    xi = np.zeros(2 * n) if spec.xi is None else np.asarray(spec.xi, float)
    Hbig = _quadratic_operator(xb, np.asarray(spec.hessian), xi, spec.phi)
    Hop = Hbig[proj]
    return FockRep(
        n, N, scales, hbar, q, p, a, Hop, np.eye(N**n, dtype=complex), _occupations(n, N), second, spec, frame
    )


@dataclass
class Superoperator:
    """``L(rho) = sum_k A_k rho B_k`` together with the construction it came from."""

    terms: list
    source: Source
    dim: int

    def apply(self, rho):
        out = np.zeros_like(rho, dtype=complex)
        for A, B in self.terms:
            out += A @ rho @ B
        return out

    def compact(self) -> "Superoperator":
        """Equivalent term list with shared right/left factors merged."""
        eye = np.eye(self.dim)
        left = np.zeros((self.dim, self.dim), dtype=complex)
        right = np.zeros((self.dim, self.dim), dtype=complex)
        groups = {}
        for A, B in self.terms:
            if np.array_equal(B, eye):
                left += A
            elif np.array_equal(A, eye):
                right += B
            else:
                key = id(B)
                if key in groups:
                    groups[key][0] += A
                else:
                    groups[key] = [A.astype(complex), B]
        terms = [(left, eye), (eye, right)] + [(A, B) for A, B in groups.values()]
        return Superoperator(terms, self.source, self.dim)

    def apply_adjoint(self, X):
        """Hilbert-Schmidt adjoint ``sum_k A_k^+ X B_k^+``."""
        out = np.zeros_like(X, dtype=complex)
        for A, B in self.terms:
            out += A.conj().T @ X @ B.conj().T
        return out

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        neg = [(-A, B) for A, B in other.terms]
        return Superoperator(self.terms + neg, self.source, self.dim)

    def scaled(self, c: complex) -> "Superoperator":
        return Superoperator([(c * A, B) for A, B in self.terms], self.source, self.dim)

    def matrix(self, max_bytes: int = MAX_DENSE_BYTES) -> np.ndarray:
        d2 = self.dim**2
        if 16 * d2 * d2 > max_bytes:
            raise BudgetExceeded(f"dense superoperator of size {d2}^2 exceeds {max_bytes} bytes")
        M = np.zeros((d2, d2), dtype=complex)
        for A, B in self.terms:
            M += np.kron(A, B.T)
        return M

    def block(self, idx) -> np.ndarray:
        """Matrix of the superoperator restricted to ``span{|a><b| : a, b in idx}``."""
        idx = np.asarray(idx)
        m = idx.size
        sub = np.ix_(idx, idx)
        out = np.zeros((m, m, m, m), dtype=complex)
        for A, B in self.terms:
            out += np.einsum("ca,bd->cdab", A[sub], B[sub])
        return out.reshape(m * m, m * m)

    def adjoint_identity(self) -> np.ndarray:
        """Left action on the identity, ``sum_k B_k A_k``; zero iff trace preserving."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for A, B in self.terms:
            out += B @ A
        return out

    def norm_estimate(self) -> float:
        return float(sum(np.linalg.norm(A, 2) * np.linalg.norm(B, 2) for A, B in self.terms))

    def trace_defect(self) -> float:
        return float(np.linalg.norm(self.adjoint_identity()))


def relative_block_distance(g1: Superoperator, g2: Superoperator, idx) -> float:
    """``|B1 - B2|_F / |B2|_F`` on the low-occupation block."""
    b2 = g2.block(idx)
    return float(np.linalg.norm(g1.block(idx) - b2) / np.linalg.norm(b2))


def _commutator_terms(Hop, hbar):
    eye = np.eye(Hop.shape[0])
    return [(-1j / hbar * Hop, eye), (eye, 1j / hbar * Hop)]


def _wick_conjugate(spec: SystemSpec, f: FockRep, beta: float, pad: int) -> list:
    """``e^{beta H/2} x_i e^{-beta H/2}`` computed in a padded space and projected."""
    n = spec.n
    W = f.N + pad
    _check_dim(n, W, 16 * MAX_HILBERT_DIM)
    _, x = _phase_ops(n, W, f.scales, spec.hbar, f.frame)
    xi = np.zeros(2 * n) if spec.xi is None else np.asarray(spec.xi, float)
    Hop = _quadratic_operator(x, np.asarray(spec.hessian), xi, spec.phi)
    w, V = np.linalg.eigh(Hop)
    # exp(beta (w_a - w_b)/2) directly avoids overflowing exp(beta w/2) alone
    expo = np.clip(0.5 * beta * (w[:, None] - w[None, :]), -700, 700)
    factor = np.exp(expo)
    keep = np.nonzero(np.all(_occupations(n, W) < f.N, axis=1))[0]
    proj = np.ix_(keep, keep)
    out = []
    for xj in x:
        xt = V.conj().T @ xj @ V
        # roundoff-level couplings would otherwise be amplified by the weights
        xt[np.abs(xt) < 1e-14 * np.abs(xt).max()] = 0.0
        y = V @ (xt * factor) @ V.conj().T
        out.append(y[proj])
    return out


def _pad_candidates(n_modes: int):
    return (8, 16, 24, 32, 40, 48, 56, 64, 72, 80) if n_modes == 1 else (4, 8, 12, 16)


def wick_conjugated_operators(spec: SystemSpec, f: FockRep, beta: float, pad="auto") -> list:
    """Projected ``y_i`` with the padding chosen where successive pads agree best."""
    if pad != "auto":
        return _wick_conjugate(spec, f, beta, int(pad))
    best, best_diff, prev = None, np.inf, None
    for pd in _pad_candidates(spec.n):
        try:
            cur = _wick_conjugate(spec, f, beta, pd)
        except BudgetExceeded:
            break
        if prev is not None:
            scale = max(np.linalg.norm(c) for c in cur)
            diff = max(np.linalg.norm(c - p) for c, p in zip(cur, prev)) / scale
            if not np.isfinite(diff):
                break
            if diff < best_diff:
                best, best_diff = cur, diff
            if diff < 1e-12:
                break
        prev = cur
    return best if best is not None else prev


def generator_direct(f: FockRep, spec: SystemSpec, pad="auto") -> Superoperator:
    """Commutator plus ``-(K_ii/hbar)[e^{-bH/2}[e^{bH/2} rho e^{bH/2}, x_i] e^{-bH/2}, x_i]``.

    The nested commutator is expanded with ``y_i = e^{beta_i H/2} x_i e^{-beta_i H/2}``.
    """
    hbar = spec.hbar
    K = np.diag(coupling_matrices(spec).K)
    eye = f.identity
    terms = _commutator_terms(f.hamiltonian, hbar)
    x = f.x
    cache = {}
    for i, beta in enumerate(spec.betas):
        c = K[i] / hbar
        if c == 0:
            continue
        if beta not in cache:
            cache[beta] = wick_conjugated_operators(spec, f, beta, pad)
        y = cache[beta][i]
        yd = y.conj().T
        xi_ = x[i]
        terms += [(-c * eye, y @ xi_), (-c * xi_ @ yd, eye), (c * xi_, y), (c * yd, xi_)]
    return Superoperator(terms, Source.DIRECT, f.dim)


def generator_qtcl(f: FockRep, Xi, eta=None, hamiltonian=None) -> Superoperator:
    """``-(1/hbar) sum (Xi^T_jk rho z_j z_k - Xi_H,jk z_j rho z_k + Xi^*_jk z_j z_k rho)`` plus commutator."""
    Xi = np.asarray(Xi, dtype=complex)
    dim2 = Xi.shape[0]
    eta = np.zeros(dim2) if eta is None else np.asarray(eta, float)
    hbar = f.hbar
    eye = f.identity
    Hop = f.hamiltonian if hamiltonian is None else hamiltonian
    terms = _commutator_terms(Hop, hbar)
    z = [xj - eta[j] * eye for j, xj in enumerate(f.x)]
    XH = Xi + Xi.conj().T
    for j in range(dim2):
        for k in range(dim2):
            zz = z[j] @ z[k]
            if Xi[k, j] != 0:
                terms.append((eye, -Xi[k, j] / hbar * zz))
            if XH[j, k] != 0:
                terms.append((XH[j, k] / hbar * z[j], z[k]))
            if Xi[j, k] != 0:
                terms.append((-np.conj(Xi[j, k]) / hbar * zz, eye))
    return Superoperator(terms, Source.QTCL, f.dim)


def generator_high_temp(f: FockRep, spec: SystemSpec) -> Superoperator:
    """First-order-in-beta truncation: commutator + ``D_0`` + ``D_1``.

    ``D_0 = -(K_ii/hbar)[x_i, [x_i, rho]]`` and
    ``D_1 = (beta_i K_ii/2 hbar)[{rho, [x_i, H]}, x_i]``, summed over all
    ``2n`` phase-space coordinates.
    """
    hbar = spec.hbar
    K = np.diag(coupling_matrices(spec).K)
    eye = f.identity
    Hop = f.hamiltonian
    terms = _commutator_terms(Hop, hbar)
    for i, (x, beta) in enumerate(zip(f.x, spec.betas)):
        c0 = K[i] / hbar
        if c0 == 0:
            continue
        terms += [(-c0 * eye, x @ x), (2 * c0 * x, x), (-c0 * x @ x, eye)]
        c1 = 0.5 * beta * K[i] / hbar
        C = x @ Hop - Hop @ x
        terms += [(c1 * eye, C @ x), (c1 * C, x), (-c1 * x, C), (-c1 * x @ C, eye)]
    return Superoperator(terms, Source.HIGH_TEMP, f.dim)


def generator_optics(f: FockRep, m: float, omega: float, beta: float, gamma_tilde: float) -> Superoperator:
    """Optical-style oscillator equation with friction and ``coth``-weighted double commutators.

    ``(i/hbar)[rho, H] - i (g/4hbar)([q, {p, rho}] - [p, {q, rho}])
    - (g/4hbar) coth(beta hbar omega/2) (m omega [q,[q,rho]] + [p,[p,rho]]/(m omega))``
    """
    if f.n_modes != 1:
        raise ValueError("optics equation is defined for one mode")
    hbar = f.hbar
    q, p = f.q[0], f.p[0]
    eye = f.identity
    terms = _commutator_terms(f.hamiltonian, hbar)
    c = -1j * gamma_tilde / (4 * hbar)
    # [q, {p, r}] = q p r + q r p - p r q - r p q ; minus the (q <-> p) copy
    terms += [
        (c * q @ p, eye), (c * q, p), (-c * p, q), (-c * eye, p @ q),
        (-c * p @ q, eye), (-c * p, q), (c * q, p), (c * eye, q @ p),
    ]
    d = -gamma_tilde / (4 * hbar) / np.tanh(0.5 * beta * hbar * omega)
    for op, w in ((q, m * omega), (p, 1.0 / (m * omega))):
        k = d * w
        terms += [(k * op @ op, eye), (-2 * k * op, op), (k * eye, op @ op)]
    return Superoperator(terms, Source.OPTICS, f.dim)


def generator_gtcl(f: FockRep, h_eff, lindblad_ops, signs, dissipator_only: bool = False) -> Superoperator:
    """``-(i/hbar)[H_eff, rho] + (1/hbar) sum g_mu (L rho L^+ - 1/2 {L^+ L, rho})``."""
    hbar = f.hbar
    eye = f.identity
    terms = [] if dissipator_only else _commutator_terms(h_eff, hbar)
    for L, g in zip(lindblad_ops, signs):
        Ld = L.conj().T
        LdL = Ld @ L
        c = g / hbar
        terms += [(c * L, Ld), (-0.5 * c * LdL, eye), (eye, -0.5 * c * LdL)]
    return Superoperator(terms, Source.GTCL, f.dim)


def lindblad_operators(f: FockRep, ls) -> list:
    """``L_mu = lambda_mu . (x - eta) + varsigma_mu`` as matrices."""
    eye = f.identity
    z = [xj - ls.eta[j] * eye for j, xj in enumerate(f.x)]
    return [sum(lam[j] * z[j] for j in range(len(z))) + off * eye for lam, off in zip(ls.lambdas, ls.offsets)]


def effective_hamiltonian_operator(f: FockRep, ls) -> np.ndarray:
    """``H + z.W.z + shift.z`` with ``z = x - eta`` and ``W`` the stored Hermitian kernel."""
    eye = f.identity
    z = [xj - ls.eta[j] * eye for j, xj in enumerate(f.x)]
    W = ls.h_eff[1]
    out = f.hamiltonian.copy()
    for j, k in zip(*np.nonzero(np.abs(W) > 0)):
        out = out + W[j, k] * (z[j] @ z[k])
    for j, s in enumerate(ls.shift):
        out = out + s * z[j]
    return 0.5 * (out + out.conj().T)


def generator_from_lindblad(f: FockRep, ls) -> Superoperator:
    return generator_gtcl(f, effective_hamiltonian_operator(f, ls), lindblad_operators(f, ls), ls.signs)


def thermal_state(f: FockRep, beta: float) -> np.ndarray:
    """``exp(-beta H)/Z`` from the Hermitian eigendecomposition of the truncated ``H``."""
    w, V = np.linalg.eigh(f.hamiltonian)
    pop = np.exp(-beta * (w - w[0]))
    pop /= pop.sum()
    return (V * pop) @ V.conj().T


def gaussian_pure_state(f: FockRep, mean=None, squeeze=None, pad: int = 40) -> np.ndarray:
    """Product of displaced squeezed vacua ``D(alpha) S(r) |0>`` as a density matrix.

    ``mean`` is the phase-space mean ``(q..., p...)``; ``squeeze`` holds one
    real ``r`` per Fock mode (``r > 0`` narrows that mode's ``q_F``).
    """
    n = f.n_modes
    mean = np.zeros(2 * n) if mean is None else np.asarray(mean, float)
    if f.frame is not None:
        mean = np.linalg.solve(f.frame, mean)
    squeeze = np.zeros(n) if squeeze is None else np.broadcast_to(np.asarray(squeeze, float), (n,))
    W = f.N + pad
    a = _ladder(W)
    ad = a.conj().T
    psi = None
    for k in range(n):
        s = f.scales[k]
        alpha = np.sqrt(s / (2 * f.hbar)) * mean[k] + 1j * mean[n + k] / np.sqrt(2 * f.hbar * s)
        r = squeeze[k]
        vac = np.zeros(W, dtype=complex)
        vac[0] = 1.0
        v = expm(0.5 * r * (a @ a - ad @ ad)) @ vac
        v = expm(alpha * ad - np.conj(alpha) * a) @ v
        v = v[: f.N]
        psi = v if psi is None else np.kron(psi, v)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


@dataclass(frozen=True)
class DensitySample:
    time: float
    rho: np.ndarray = field(repr=False)
    trace: float
    min_eigenvalue: float
    mean: np.ndarray
    cov: np.ndarray
    edge_population: float


DENSE_LIMIT = 24
_TINY = 1e-290


def _dense_ok(g: Superoperator, limit: int = DENSE_LIMIT) -> bool:
    return g.dim <= limit


def evolve_density(
    g: Superoperator,
    rho0,
    t_grid,
    f: FockRep,
    leak_tol: float = LEAK_TOL,
    check_leak: bool = True,
    dense_limit: int = DENSE_LIMIT,
) -> list:
    """Propagate ``vec(rho)`` with ``exp(g dt)`` and record diagnostics at each time.

    Spaces of dimension up to ``dense_limit`` use a cached dense propagator;
    larger ones apply the exponential to the vector (``expm_multiply``)
    through the term list.

    Raises
    ------
    TruncationBreach
        When the top two Fock levels of any mode carry more than ``leak_tol``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    dim = g.dim
    rho = np.asarray(rho0, dtype=complex)
    g = g.compact()
    dense = _dense_ok(g, dense_limit)
    if dense:
        M = g.matrix()
        cache = {}
    else:
        trace_a = sum(np.trace(A) * np.trace(B) for A, B in g.terms)

        def flush(v):
            # subnormal roundoff overflows the sign step of scipy's norm estimator
            v[np.abs(v) < _TINY] = 0
            return v

        def operator(dt):
            return LinearOperator(
                (dim * dim, dim * dim),
                matvec=lambda v: flush(dt * g.apply(v.reshape(dim, dim)).ravel()),
                rmatvec=lambda v: flush(np.conj(dt) * g.apply_adjoint(v.reshape(dim, dim)).ravel()),
                dtype=complex,
            )

    def sample(t, r):
        r = 0.5 * (r + r.conj().T)
        tr = float(np.real(np.trace(r)))
        evals = np.linalg.eigvalsh(r)
        mean, cov = f.moments(r / tr)
        leak = f.edge_population(r)
        if check_leak and leak > leak_tol:
            raise TruncationBreach(leak, t)
        return r, DensitySample(float(t), r, tr, float(evals[0]), mean, cov, leak)

    rho, s0 = sample(t_grid[0], rho)
    out = [s0]
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        dt = t1 - t0
        v = rho.ravel()
        if dense:
            key = round(dt, 15)
            if key not in cache:
                cache[key] = expm(M * dt)
            v = cache[key] @ v
        else:
            v = expm_multiply(operator(dt), v, traceA=trace_a * dt)
        rho, s = sample(t1, v.reshape(dim, dim))
        out.append(s)
    return out


def trace_distance(r1, r2) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(r1 - r2))))


def converged(fn, N: int, step: int = 4, tol: float = 1e-6):
    """Evaluate ``fn(N)`` and ``fn(N + step)``; return ``(value, change, ok)``.

    ``value`` is the larger-truncation result; ``ok`` says whether the change
    is below ``tol``.
    """
    v1 = np.asarray(fn(N))
    v2 = np.asarray(fn(N + step))
    change = float(np.max(np.abs(v2 - v1))) if v1.size else 0.0
    return v2, change, change <= tol


def oracle_report(source: Source, f: FockRep, samples) -> dict:
    """JSON-ready summary ``{source, N, scale, trace_drift, min_rho_eigenvalue, moment_series}``."""
    return {
        "source": source.value,
        "N": f.N,
        "scale": [float(s) for s in f.scales],
        "trace_drift": float(max(abs(s.trace - 1.0) for s in samples)),
        "min_rho_eigenvalue": float(min(s.min_eigenvalue for s in samples)),
        "moment_series": [
            {
                "t": s.time,
                "mean": [float(v) for v in s.mean],
                "cov": [[float(v) for v in row] for row in s.cov],
                "min_eigenvalue": s.min_eigenvalue,
            }
            for s in samples
        ],
    }
