"""Worked qubit example: thermalization margins and the tilt of xi.

A qubit whose final Bloch vectors spread mostly along one axis (Γ+ = 0.01,
Γ- = 1e-4), tilted by π/16 away from the mean Bloch vector (|f̄| = 0.1),
measured on R = 10 preparations of N = 20000 copies each.

Run with ``python3 demos/worked_qubit.py``.
"""

import numpy as np

from thermoscope import hamiltonian as ham
from thermoscope.hamiltonian import QubitGeometry

R, N = 10, 20000
geometry = QubitGeometry.from_parameters(gamma_plus=0.01, gamma_minus=1e-4, f_norm2=0.01, theta=np.pi / 16)

check = ham.qubit_thermal_conditions(geometry, R * N, R * np.log(N))
print(f"spread margin  (Λ/N over Γ-):          {check.margins[0]:.3f}")
print(f"tilt margin    (bracket over θ²/2):     {check.margins[1]:.3f}")
print(f"passes at margin factor {check.margin_factor:g}:              {check.passed}")
print(f"passes at margin factor 5:              {ham.qubit_thermal_conditions(geometry, R * N, R * np.log(N), 5).passed}")

xi = ham.qubit_xi_perturbative(geometry)
cosang = abs(xi @ geometry.gamma_dir) / (np.linalg.norm(xi) * np.linalg.norm(geometry.gamma_dir))
print(f"angle between xi and the spread axis:   {np.degrees(np.arccos(cosang)):.3f} deg")
print(f"asymptotic max log-likelihood of xi:    {ham.qubit_max_likelihood(geometry, R * N, R * np.log(N)):.2f}")
