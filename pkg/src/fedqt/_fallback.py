"""Pure-numpy implementation of the ansatz kernel.

Mirrors ``_ckernel.pyx`` operation for operation so both backends produce the
same floating-point results.
"""
import numpy as np


def evolve(psi, cos_half, sin_half, src):
    """Apply ``L`` blocks of [CNOT chain, per-qubit Ry] to each row of ``psi`` in place.

    psi: (B, 2**n) float64, real amplitudes (the gate set keeps them real).
    cos_half, sin_half: (B, L, n) cosines/sines of half the Ry angles.
    src: (2**n,) gather index realising one CNOT chain, ``new = old[src]``.
    """
    b, dim = psi.shape
    _, n_layers, n = cos_half.shape
    for layer in range(n_layers):
        psi[:] = psi[:, src]
        for q in range(n):
            view = psi.reshape(b, 1 << q, 2, dim >> (q + 1))
            c = cos_half[:, layer, q][:, None, None]
            s = sin_half[:, layer, q][:, None, None]
            a0 = view[:, :, 0, :].copy()
            a1 = view[:, :, 1, :].copy()
            view[:, :, 0, :] = c * a0 - s * a1
            view[:, :, 1, :] = s * a0 + c * a1
    return psi
