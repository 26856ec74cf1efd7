"""Walk through the 2-D transform layer: forward, inverse, polar split.

Run: python demos/01_fourier_basics.py
"""

import numpy as np

from fedfreq import amp_phase, dft2, idft2, recompose

rng = np.random.default_rng(0)

print("A 2x2 delta matrix spreads evenly over every frequency:")
delta = np.array([[1.0, 0.0], [0.0, 0.0]])
print(dft2(delta))

print("\nA constant matrix is pure DC (all energy at frequency (0,0)):")
const = np.full((3, 3), 2.5)
print(np.round(dft2(const), 12))

print("\nRound trip on a random 16x12 matrix:")
m = rng.standard_normal((16, 12))
back, residue = idft2(dft2(m))
print(f"  max |idft2(dft2(m)) - m| = {np.max(np.abs(back - m)):.2e}")
print(f"  imaginary residue        = {residue:.2e}")

print("\nReal input makes a Hermitian spectrum: F(m,n) = conj(F(-m,-n)).")
f = dft2(rng.standard_normal((5, 4)))
ri = (-np.arange(5)) % 5
ci = (-np.arange(4)) % 4
print(f"  max pairing error = {np.max(np.abs(f - np.conj(f[np.ix_(ri, ci)]))):.2e}")

print("\nAmplitude/phase split and recomposition:")
ap = amp_phase(f)
print(f"  amplitudes >= 0: {bool(np.all(ap.amplitude >= 0))}")
print(f"  phases in (-pi, pi]: {bool(np.all((ap.phase > -np.pi) & (ap.phase <= np.pi)))}")
print(f"  max |recompose(split(F)) - F| = {np.max(np.abs(recompose(ap) - f)):.2e}")

print("\nParseval: energy is preserved up to the transform's normalization.")
lhs = np.sum(m**2) * m.size
rhs = np.sum(np.abs(dft2(m)) ** 2)
print(f"  sum|m|^2 * N = {lhs:.6f}   sum|F|^2 = {rhs:.6f}")
