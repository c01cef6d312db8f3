"""Slow, explicit reference computations used only by the tests."""

import itertools

import numpy as np


def kron_by_index(a, b):
    """``out[i*rb + k, j*cb + l] = a[i, j] * b[k, l]`` written as loops."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    ra, ca = a.shape
    rb, cb = b.shape
    out = np.zeros((ra * rb, ca * cb), dtype=complex)
    for i, j, k, l in itertools.product(range(ra), range(ca), range(rb), range(cb)):
        out[i * rb + k, j * cb + l] = a[i, j] * b[k, l]
    return out


def partial_trace_by_sum(rho, dims, keep):
    """Reduced matrix by explicit summation over every traced multi-index."""
    keep = sorted(keep)
    traced = [k for k in range(len(dims)) if k not in keep]
    kdims = [dims[k] for k in keep]
    tdims = [dims[k] for k in traced]
    dk = int(np.prod(kdims))
    out = np.zeros((dk, dk), dtype=complex)

    def flat(multi):
        idx = 0
        for d, x in zip(dims, multi):
            idx = idx * d + x
        return idx

    for a in itertools.product(*[range(d) for d in kdims]):
        for b in itertools.product(*[range(d) for d in kdims]):
            total = 0j
            for t in itertools.product(*[range(d) for d in tdims]):
                ma, mb = [0] * len(dims), [0] * len(dims)
                for pos, k in enumerate(keep):
                    ma[k], mb[k] = a[pos], b[pos]
                for pos, k in enumerate(traced):
                    ma[k] = mb[k] = t[pos]
                total += rho[flat(ma), flat(mb)]
            ia = int(np.ravel_multi_index(a, kdims)) if kdims else 0
            ib = int(np.ravel_multi_index(b, kdims)) if kdims else 0
            out[ia, ib] = total
    return out


def embed_two_factor_op(op, dims, i, j):
    """Full matrix of ``op`` acting on factors ``(i, j)`` of a ``dims`` space.

    Built by permuting basis indices one at a time; no tensor reshapes.
    """
    n = int(np.prod(dims))
    di, dj = dims[i], dims[j]
    full = np.zeros((n, n), dtype=complex)
    for col in range(n):
        multi = list(np.unravel_index(col, dims))
        src = multi[i] * dj + multi[j]
        for dst in range(di * dj):
            amp = op[dst, src]
            if amp == 0:
                continue
            out = list(multi)
            out[i], out[j] = divmod(dst, dj)
            full[np.ravel_multi_index(out, dims), col] += amp
    return full


def everett_brute_force(u, m, phi0):
    """Reduced state of each stream after ``m`` sequential interactions.

    ``u`` is a ``(ns*d, ns*d)`` matrix or a list of them (one per stream).
    Factors are ``(stream_1, ..., stream_m, observer)``.
    """
    us = u if isinstance(u, list) else [u] * m
    ns = us[0].shape[0] // phi0.size
    d = phi0.size
    dims = [ns] * m + [d]
    plus = np.full(ns, 1 / np.sqrt(ns))
    psi = phi0.astype(complex)
    for _ in range(m):
        psi = np.kron(plus, psi)
    for k, uk in enumerate(us):
        psi = embed_two_factor_op(uk, dims, k, m) @ psi
    rho = np.outer(psi, psi.conj())
    return [partial_trace_by_sum(rho, dims, [k]) for k in range(m)]


def trace_norm_distance(a, b):
    return 0.5 * np.abs(np.linalg.eigvalsh(a - b)).sum()
