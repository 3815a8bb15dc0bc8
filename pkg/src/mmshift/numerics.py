"""Dense symmetric linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects. Functions that accept a
symmetric matrix symmetrize their input first, so callers may pass
matrices carrying tiny asymmetric round-off.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class NumericsError(ValueError):
    """Raised on non-finite or otherwise invalid matrix input."""


class SpectralDecomp(NamedTuple):
    """Eigendecomposition ``m = basis @ diag(eigvals) @ basis.T``.

    ``eigvals`` is sorted in non-increasing order and the columns of
    ``basis`` are the matching eigenvectors.
    """

    basis: np.ndarray
    eigvals: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.apply(lambda w: w)

    def apply(self, fn) -> np.ndarray:
        """Return ``basis @ diag(fn(eigvals)) @ basis.T``, exactly symmetric."""
        m = (self.basis * fn(self.eigvals)) @ self.basis.T
        return 0.5 * (m + m.T)


def as_sym(m) -> np.ndarray:
    """Validate a square matrix and return its symmetric part."""
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise NumericsError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericsError("matrix has non-finite entries")
    return 0.5 * (a + a.T)


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    # largest-|entry| of each column made positive; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def sym_eig(m) -> SpectralDecomp:
    """Eigendecomposition of a symmetric matrix with a deterministic sign convention.

    Eigenvalues come back sorted from largest to smallest. In every
    eigenvector the entry of largest magnitude is positive (ties go to the
    lowest index), which makes the output reproducible run to run.
    """
    a = as_sym(m)
    w, v = np.linalg.eigh(a)
    order = np.argsort(-w, kind="stable")
    return SpectralDecomp(_fix_signs(v[:, order]), w[order])


def _psd_eig(m, name: str = "matrix") -> SpectralDecomp:
    dec = sym_eig(m)
    lam_max = max(float(dec.eigvals[0]), 0.0)
    floor = -1e-10 * lam_max
    if dec.eigvals[-1] < floor:
        raise NumericsError(
            f"{name} is not PSD: smallest eigenvalue {dec.eigvals[-1]:.3e} "
            f"below tolerance {floor:.3e}"
        )
    return SpectralDecomp(dec.basis, np.clip(dec.eigvals, 0.0, None))


def is_psd(m, rtol: float = 1e-10) -> bool:
    w = np.linalg.eigvalsh(as_sym(m))
    return bool(w[0] >= -rtol * max(w[-1], 0.0))


def psd_sqrt(m) -> np.ndarray:
    """Symmetric PSD square root. Tiny negative eigenvalues are clamped to zero."""
    return _psd_eig(m).apply(np.sqrt)


def _pinv_cutoff(eigvals: np.ndarray) -> float:
    d = eigvals.shape[0]
    return 1e-12 * d * max(float(np.max(eigvals)), 0.0)


def psd_pinv(m) -> np.ndarray:
    """Pseudo-inverse of a PSD matrix.

    Eigenvalues at or below ``1e-12 * d * lambda_max`` are treated as zero.
    """
    dec = sym_eig(m)
    cut = _pinv_cutoff(dec.eigvals)
    keep = dec.eigvals > cut
    inv = np.zeros_like(dec.eigvals)
    inv[keep] = 1.0 / dec.eigvals[keep]
    return SpectralDecomp(dec.basis, inv).apply(lambda w: w)


def psd_inv_sqrt(m) -> np.ndarray:
    """Pseudo-inverse of the PSD square root, same cutoff as :func:`psd_pinv`."""
    dec = _psd_eig(m)
    cut = _pinv_cutoff(dec.eigvals)
    keep = dec.eigvals > cut
    inv = np.zeros_like(dec.eigvals)
    inv[keep] = 1.0 / np.sqrt(dec.eigvals[keep])
    return SpectralDecomp(dec.basis, inv).apply(lambda w: w)


def spd_solve(m, rhs) -> np.ndarray:
    """Return ``pinv(m) @ rhs`` for symmetric PSD ``m``.

    Directions with eigenvalue below ``1e-12 * d * lambda_max`` are
    annihilated rather than inverted.
    """
    b = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(b)):
        raise NumericsError("right-hand side has non-finite entries")
    return psd_pinv(m) @ b


def lambda_max(m) -> float:
    return float(np.linalg.eigvalsh(as_sym(m))[-1])


def op_norm_sq(b) -> float:
    """Squared spectral norm ``||b||_op^2``."""
    b = np.asarray(b, dtype=float)
    if b.size == 0:
        return 0.0
    return float(np.linalg.norm(b, 2) ** 2)


def commutator_norm(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a @ b - b @ a))


def commute(a, b, rtol: float = 1e-8) -> bool:
    """True when ``||ab - ba||_F < rtol * ||a||_F * ||b||_F``."""
    scale = np.linalg.norm(a) * np.linalg.norm(b)
    return commutator_norm(a, b) <= rtol * max(scale, np.finfo(float).tiny)


def joint_eigbasis(a, b) -> np.ndarray:
    """Orthogonal basis diagonalizing two commuting symmetric matrices.

    A generic linear combination separates the shared eigenspaces, so one
    eigendecomposition suffices.
    """
    a = as_sym(a)
    b = as_sym(b)
    na = np.linalg.norm(a) or 1.0
    nb = np.linalg.norm(b) or 1.0
    # irrational-ish mixing weight avoids accidental degeneracies
    mix = a / na + (np.sqrt(2.0) - 0.3) * b / nb
    return sym_eig(mix).basis
