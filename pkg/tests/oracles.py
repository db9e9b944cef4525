"""Independent reference implementations used only by the tests.

Density matrices are column-stacked here (the package uses Bloch vectors),
and the steady state comes from an SVD null space rather than a closed form.
"""
import numpy as np
from scipy.linalg import expm, null_space

HBAR = 0.6582119569


def ops(omega, delta_uev, gamma, deph=0.0):
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    sp = sm.conj().T
    D = delta_uev / HBAR
    H = -D * sp @ sm + 0.5 * omega * (sp + sm)
    cs = [np.sqrt(gamma) * sm]
    if deph > 0:
        cs.append(np.sqrt(deph / 2) * np.diag([-1.0, 1.0]).astype(complex))
    return H, cs


def liouvillian(H, cs):
    # vec(AXB) = (Bᵀ ⊗ A) vec(X) with column stacking
    I = np.eye(H.shape[0])
    L = -1j * (np.kron(I, H) - np.kron(H.T, I))
    for c in cs:
        cd = c.conj().T @ c
        L += np.kron(c.conj(), c) - 0.5 * np.kron(I, cd) - 0.5 * np.kron(cd.T, I)
    return L


def vec(r):
    return r.reshape(-1, order="F")


def unvec(v):
    return v.reshape(2, 2, order="F")


def steady(L):
    v = null_space(L)[:, 0]
    r = unvec(v)
    return r / np.trace(r)


def g2_qrt(beta, c, omega, delta_uev, gamma, taus, deph=0.0):
    H, cs = ops(omega, delta_uev, gamma, deph)
    L = liouvillian(H, cs)
    rho = steady(L)
    a = beta * np.eye(2) + c * np.array([[0, 1], [0, 0]], dtype=complex)
    n = a.conj().T @ a
    mean = np.trace(n @ rho).real
    rc = vec(a @ rho @ a.conj().T)
    out = []
    for t in taus:
        r = unvec(expm(L * t) @ rc)
        out.append(np.trace(n @ r).real / mean**2)
    return np.array(out)
