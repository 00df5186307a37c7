"""Shared helpers and independent oracles for the test suite."""
from __future__ import annotations

import math
import sys

import numpy as np
import pytest

from quadcptp.model import BathSpec, SystemSpec, network_hessian


def taylor_expm(A, terms: int = 40) -> np.ndarray:
    """Matrix exponential by plain Taylor summation after halving to norm < 1/2.

    Deliberately independent of scipy's Pade scheme; used as an oracle.
    """
    A = np.asarray(A, dtype=complex)
    norm = np.linalg.norm(A, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    B = A / 2**s
    out = np.eye(A.shape[0], dtype=complex)
    term = np.eye(A.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ B / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def random_symmetric(rng, dim, kind="any", scale=1.0):
    """Random symmetric matrix; ``kind`` in {"any", "pd", "nd"}."""
    A = rng.normal(size=(dim, dim))
    S = 0.5 * (A + A.T)
    if kind == "pd":
        S = A @ A.T + 0.2 * np.eye(dim)
    elif kind == "nd":
        S = -(A @ A.T + 0.2 * np.eye(dim))
    return scale * S


def random_n1_hessian(rng, case):
    """2x2 Hessian of a requested sign class of ``det H``."""
    if case == "elliptic":
        return random_symmetric(rng, 2, "pd")
    if case == "hyperbolic":
        a, b = rng.uniform(0.3, 1.5, 2)
        R = rotation(rng.uniform(0, np.pi))
        return R @ np.diag([a, -b]) @ R.T
    if case == "parabolic":
        v = rng.normal(size=2)
        return rng.uniform(0.3, 1.5) * np.outer(v, v) / (v @ v)
    raise ValueError(case)


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_spec(rng, n=1, kind="pd", gamma=(0.05, 1.0), beta=(0.2, 2.0), hbar=1.0, xi=True):
    H = random_symmetric(rng, 2 * n, kind)
    baths = [BathSpec(*rng.uniform(*gamma, 2), rng.uniform(*beta)) for _ in range(n)]
    x = rng.normal(size=2 * n) * 0.3 if xi else None
    return SystemSpec(H, baths, x, float(rng.normal()), hbar)


def network_spec(omega=1.0, kappa=1.0, gq=(0.25, 0.25), gp=(0.25, 0.25), betas=(1.0, 1.0), hbar=1.0):
    return SystemSpec(
        network_hessian(omega, kappa),
        [BathSpec(gq[0], gp[0], betas[0]), BathSpec(gq[1], gp[1], betas[1])],
        hbar=hbar,
    )


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts, one line per criterion, at the end of the run."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
