"""Seeded generators for the synthetic experiments.

All randomness goes through :func:`make_rng`, which builds a numpy
``Philox`` counter-based generator keyed by a ``SeedSequence``. A seed may be
an int or a tuple of ints; experiments use ``(base_seed, trial, stream)``
so every replicate and every draw within it has its own stream, independent
of execution order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import expm

from .numerics import as_sym, psd_sqrt

Seed = Union[int, Sequence[int], np.random.Generator]

RNG_ALGORITHM = "numpy.random.Philox keyed by numpy.random.SeedSequence(seed)"

__all__ = [
    "CovSpec",
    "RNG_ALGORITHM",
    "ReluNetwork",
    "linear_labels",
    "make_covariance",
    "make_rng",
    "model_shift_delta",
    "random_beta",
    "random_orthogonal",
    "relu_labels",
    "rotate_basis",
    "sample_gaussian_design",
]


def make_rng(seed: Seed) -> np.random.Generator:
    """Philox generator for an int or int-tuple seed.

    A ``Generator`` passes through unchanged, for callers that manage their
    own stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (int, np.integer)):
        entropy = int(seed)
    else:
        entropy = [int(s) for s in seed]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def random_orthogonal(d: int, seed: Seed) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix)."""
    z = make_rng(seed).standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def rotate_basis(basis: np.ndarray, theta: float, seed: Seed) -> np.ndarray:
    """``expm(theta K) @ basis`` for a random skew-symmetric ``K`` of unit Frobenius norm.

    ``theta = 0`` returns ``basis``; the distance ``||result - basis||_F``
    grows with ``theta``.
    """
    d = basis.shape[0]
    a = make_rng(seed).standard_normal((d, d))
    k = a - a.T
    nk = np.linalg.norm(k)
    if nk > 0:
        k /= nk
    return expm(theta * k) @ basis


@dataclass(frozen=True)
class CovSpec:
    """Recipe for a second-moment matrix.

    Attributes
    ----------
    dim : int
    alpha : float, optional
        Power law ``lambda_i ∝ i^(-alpha)``. Ignored when ``eigvals`` is set.
    eigvals : sequence of float, optional
        Explicit (unnormalized) spectrum, in the order matching the basis columns.
    eigenspace : {"identity", "random"}
    """

    dim: int
    alpha: float = 0.0
    eigvals: Optional[tuple] = None
    eigenspace: str = "identity"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.eigenspace not in ("identity", "random"):
            raise ValueError(f"unknown eigenspace {self.eigenspace!r}")
        if self.eigvals is not None:
            ev = tuple(float(v) for v in self.eigvals)
            if len(ev) != self.dim or min(ev) < 0 or max(ev) <= 0:
                raise ValueError("eigvals must be dim nonnegative values, not all zero")
            object.__setattr__(self, "eigvals", ev)

    def spectrum(self) -> np.ndarray:
        """Eigenvalues rescaled so that their squares sum to ``dim``."""
        if self.eigvals is not None:
            lam = np.asarray(self.eigvals)
        else:
            lam = np.arange(1, self.dim + 1, dtype=float) ** (-float(self.alpha))
        return lam * math.sqrt(self.dim) / np.linalg.norm(lam)


def make_covariance(spec: CovSpec, rng_seed: Seed = 0, basis: np.ndarray = None) -> np.ndarray:
    """Build ``U diag(lambda) U^T`` with ``||Sigma||_F^2 = d``.

    ``basis`` overrides the eigenspace in ``spec`` (used by the eigenspace
    sweep to share or rotate bases between domains).
    """
    lam = spec.spectrum()
    if basis is None:
        u = np.eye(spec.dim) if spec.eigenspace == "identity" else random_orthogonal(spec.dim, rng_seed)
    else:
        u = np.asarray(basis, dtype=float)
    return as_sym((u * lam) @ u.T)


def sample_gaussian_design(n: int, sigma, rng_seed: Seed) -> np.ndarray:
    """``n`` rows drawn i.i.d. from ``N(0, sigma)`` as ``Z @ sigma^{1/2}``."""
    root = psd_sqrt(sigma)
    z = make_rng(rng_seed).standard_normal((int(n), root.shape[0]))
    return z @ root


def random_beta(d: int, norm_r: float, rng_seed: Seed) -> np.ndarray:
    """Standard normal direction rescaled to norm ``norm_r``."""
    if norm_r < 0:
        raise ValueError("norm must be nonnegative")
    if norm_r == 0:
        return np.zeros(d)
    z = make_rng(rng_seed).standard_normal(d)
    return z * (norm_r / np.linalg.norm(z))


def model_shift_delta(d: int, gamma: float, rng_seed: Seed) -> np.ndarray:
    """Random shift ``delta`` with ``||delta|| = gamma``."""
    return random_beta(d, gamma, rng_seed)


def linear_labels(x, beta, noise_std: float, rng_seed: Seed) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = x @ np.asarray(beta, dtype=float)
    if noise_std > 0:
        y = y + noise_std * make_rng(rng_seed).standard_normal(x.shape[0])
    return y


@dataclass(frozen=True)
class ReluNetwork:
    """One-hidden-layer network ``f(x) = (1/d) a^T (W x)_+``."""

    w: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)

    @classmethod
    def draw(cls, d: int, rng_seed: Seed, width: int = None) -> "ReluNetwork":
        """Standard normal ``W`` (width x d) and ``a``; width defaults to ``d``."""
        m = d if width is None else int(width)
        rng = make_rng(rng_seed)
        return cls(rng.standard_normal((m, d)), rng.standard_normal(m))

    @property
    def width(self) -> int:
        return self.w.shape[0]

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.maximum(x @ self.w.T, 0.0) @ self.a / x.shape[1]

    def best_linear(self) -> np.ndarray:
        """Best linear predictor under any centered Gaussian input law.

        Stein's identity gives ``E[x (w^T x)_+] = Sigma w / 2``, so
        ``Sigma^{-1} E[x f(x)] = W^T a / (2d)`` whatever ``Sigma`` is.
        """
        return self.w.T @ self.a / (2.0 * self.w.shape[1])


def relu_labels(x, w, a, noise_std: float, rng_seed: Seed) -> np.ndarray:
    """``(1/d) a^T (W x)_+`` plus Gaussian noise."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    net = ReluNetwork(np.atleast_2d(np.asarray(w, dtype=float)), np.asarray(a, dtype=float).reshape(-1))
    y = net(x)
    if noise_std > 0:
        y = y + noise_std * make_rng(rng_seed).standard_normal(x.shape[0])
    return y
