"""Inner loops: quantum-jump propagation and coincidence counting.

Everything here is plain numpy/Python that numba can compile; see
:mod:`photon_sorter._accel` for the switch.  Pair-counting also has an
O(N²) reference used by the tests.
"""
from __future__ import annotations

import cmath
import math

import numpy as np

from ._accel import njit

# kernel exit codes
DONE = 0  # reached t_end
NEED_UNIFORMS = 1
BUFFER_FULL = 2


@njit(cache=True, nogil=True)
def _expm2(K, t, out):
    """out = exp(K t) for a 2×2 complex K."""
    m = 0.5 * (K[0, 0] + K[1, 1])
    a = K[0, 0] - m
    q = cmath.sqrt(a * a + K[0, 1] * K[1, 0])
    qt = q * t
    em = cmath.exp(m * t)
    ch = cmath.cosh(qt)
    if abs(qt) < 1e-8:
        sh = t * (1.0 + qt * qt / 6.0)
    else:
        sh = cmath.sinh(qt) / q
    out[0, 0] = em * (ch + sh * a)
    out[1, 1] = em * (ch - sh * a)
    out[0, 1] = em * sh * K[0, 1]
    out[1, 0] = em * sh * K[1, 0]


@njit(cache=True, nogil=True)
def _apply(M, psi, out):
    out[0] = M[0, 0] * psi[0] + M[0, 1] * psi[1]
    out[1] = M[1, 0] * psi[0] + M[1, 1] * psi[1]


@njit(cache=True, nogil=True)
def _norm2(v):
    return v[0].real ** 2 + v[0].imag ** 2 + v[1].real ** 2 + v[1].imag ** 2


@njit(cache=True, nogil=True)
def _decay_rate(J, v):
    """⟨v|J|v⟩ for Hermitian J (total jump rate, unnormalised)."""
    a = J[0, 0].real * (v[0].real ** 2 + v[0].imag ** 2)
    b = J[1, 1].real * (v[1].real ** 2 + v[1].imag ** 2)
    c = 2.0 * (J[0, 1] * v[1] * v[0].conjugate()).real
    return a + b + c


@njit(cache=True, nogil=True)
def jump_kernel(K, C1, C2, J, psi, t, t_end, t_record, uniforms, u_pos, out, n_out, dt_probe):
    """Advance a quantum-jump trajectory.

    ``K = −iH_eff`` generates the no-jump evolution, ``C1`` is the detected
    collapse operator, ``C2`` the undetected one and ``J = C1†C1 + C2†C2``.
    Each jump consumes two uniforms: the survival threshold and the channel
    choice.  Detected jumps at ``t >= t_record`` are appended to ``out``.

    ``psi`` is updated in place.  Returns (status, t, u_pos, n_out).
    """
    E = np.empty((2, 2), dtype=np.complex128)
    phi = np.empty(2, dtype=np.complex128)
    tmp = np.empty(2, dtype=np.complex128)
    n_u = uniforms.shape[0]
    cap = out.shape[0]
    while True:
        if t >= t_end:
            return DONE, t, u_pos, n_out
        if u_pos + 2 > n_u:
            return NEED_UNIFORMS, t, u_pos, n_out
        if n_out >= cap:
            return BUFFER_FULL, t, u_pos, n_out
        r = uniforms[u_pos]
        # survival norm starts at 1 (psi is normalised)
        lo = 0.0
        hi = dt_probe
        n_hi = 0.0
        crossed = False
        while True:
            if t + hi >= t_end:
                _expm2(K, t_end - t, E)
                _apply(E, psi, phi)
                if _norm2(phi) > r:
                    # no jump before the end of the run
                    nrm = math.sqrt(_norm2(phi))
                    psi[0] = phi[0] / nrm
                    psi[1] = phi[1] / nrm
                    t = t_end
                    u_pos += 2
                    break
                hi = t_end - t
            _expm2(K, hi, E)
            _apply(E, psi, phi)
            n_hi = _norm2(phi)
            if n_hi <= r:
                crossed = True
                break
            lo = hi
            hi = hi * 2.0
        if not crossed:
            continue
        # safeguarded Newton on f(s) = |exp(Ks)psi|² − r, bracketed in [lo, hi]
        s = 0.5 * (lo + hi)
        for _ in range(200):
            _expm2(K, s, E)
            _apply(E, psi, phi)
            f = _norm2(phi) - r
            if abs(f) < 1e-8 * r + 1e-300:
                break
            if f > 0:
                lo = s
            else:
                hi = s
            fp = -_decay_rate(J, phi)
            s_new = s - f / fp if fp < 0 else -1.0
            if not (lo < s_new < hi):
                s_new = 0.5 * (lo + hi)
            if hi - lo < 1e-15 * (1.0 + hi):
                break
            s = s_new
        t += s
        # channel choice
        _apply(C1, phi, tmp)
        w1 = _norm2(tmp)
        _apply(C2, phi, psi)
        w2 = _norm2(psi)
        if uniforms[u_pos + 1] * (w1 + w2) < w1:
            nrm = math.sqrt(w1)
            psi[0] = tmp[0] / nrm
            psi[1] = tmp[1] / nrm
            if t >= t_record and t < t_end:
                out[n_out] = t
                n_out += 1
        else:
            nrm = math.sqrt(w2)
            psi[0] = psi[0] / nrm
            psi[1] = psi[1] / nrm
        u_pos += 2


@njit(cache=True, nogil=True)
def pair_counts(times, bin_width, n_bins):
    """Ordered-pair delays τ = t_j − t_i > 0 binned with centres k·w, k = 0..n_bins−1.

    Bin k collects τ ∈ [(k−½)w, (k+½)w); bin 0 only sees τ ∈ (0, w/2).
    Two-pointer sweep: each i scans forward until the delay exceeds the
    last edge.
    """
    counts = np.zeros(n_bins, dtype=np.int64)
    edge = (n_bins - 0.5) * bin_width
    n = times.shape[0]
    for i in range(n):
        ti = times[i]
        j = i + 1
        while j < n:
            dt = times[j] - ti
            if dt >= edge:
                break
            k = int(dt / bin_width + 0.5)
            if k < n_bins:
                counts[k] += 1
            j += 1
    return counts


@njit(cache=True, nogil=True)
def pair_counts_tagged(times, tags, bin_width, n_bins):
    """Like :func:`pair_counts`, split into same-tag and cross-tag pairs."""
    same = np.zeros(n_bins, dtype=np.int64)
    cross = np.zeros(n_bins, dtype=np.int64)
    edge = (n_bins - 0.5) * bin_width
    n = times.shape[0]
    for i in range(n):
        ti = times[i]
        gi = tags[i]
        j = i + 1
        while j < n:
            dt = times[j] - ti
            if dt >= edge:
                break
            k = int(dt / bin_width + 0.5)
            if k < n_bins:
                if tags[j] == gi:
                    same[k] += 1
                else:
                    cross[k] += 1
            j += 1
    return same, cross


def pair_counts_bruteforce(times, bin_width, n_bins, tags=None):
    """O(N²) reference for the sweep kernels."""
    t = np.asarray(times, dtype=float)
    d = t[None, :] - t[:, None]
    iu = np.triu_indices(t.size, k=1)
    dt = d[iu]
    k = np.floor(dt / bin_width + 0.5).astype(np.int64)
    keep = (dt < (n_bins - 0.5) * bin_width) & (k < n_bins)
    if tags is None:
        return np.bincount(k[keep], minlength=n_bins)[:n_bins]
    g = np.asarray(tags)
    eq = (g[:, None] == g[None, :])[iu]
    same = np.bincount(k[keep & eq], minlength=n_bins)[:n_bins]
    cross = np.bincount(k[keep & ~eq], minlength=n_bins)[:n_bins]
    return same, cross
