"""Shared generators for the test suites."""
import numpy as np


def rng(seed=0):
    return np.random.default_rng(seed)


def rand_orth(g, d):
    q, r = np.linalg.qr(g.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def rand_spd(g, d, lo=0.2, hi=3.0):
    u = rand_orth(g, d)
    return (u * g.uniform(lo, hi, d)) @ u.T


def rand_psd_rank(g, d, rank):
    a = g.standard_normal((d, rank))
    return a @ a.T


def commuting_pair(g, d, lo=0.2, hi=3.0):
    """Two SPD matrices sharing a random eigenbasis, plus the basis and spectra."""
    u = rand_orth(g, d)
    s = g.uniform(lo, hi, d)
    t = g.uniform(lo, hi, d)
    return (u * s) @ u.T, (u * t) @ u.T, u, s, t


def rel_fro(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# filled by the acceptance suite, printed in the terminal summary
ACCEPTANCE_LINES = []
