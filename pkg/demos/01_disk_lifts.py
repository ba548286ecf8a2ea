"""
Boundary lifts of a disk eigenfunction on a concentric circle.

A disk mode J_l(lam r) e^{i l theta} restricts to a single Fourier mode on any
concentric circle, so every boundary lift collapses to a one-term formula.
This script computes the lifts from sampled Cauchy data and prints them next to
the closed forms, then compares the averages against the two limit states.

Run:  python demos/01_disk_lifts.py
"""

import numpy as np
from scipy import special

from qerlab import analytic_modes, build_curve, build_domain, cauchy_trace, compute_lifts, limit_state
from qerlab.psido import const1, gauss_xi, poly_xi

RHO = 0.6
disk = build_domain({"kind": "disk", "R": 1.0})
circle = build_curve({"kind": "circle", "rho": RHO}, disk)
L = circle.length

mode = analytic_modes(disk, [(7, 3)])[0]
trace = cauchy_trace(mode, circle)
print(f"mode l=7, k=3: lam^2 = {mode.lam2:.4f}, h = {mode.h:.4f}, {trace.n} nodes on the circle")

# closed form: both traces are amplitude * e^{i l s / rho}
ell, lam, h = 7, mode.lam, mode.h
c = 1 / (np.sqrt(np.pi) * abs(special.jv(ell + 1, lam)))
amp_d = c * special.jv(ell, lam * RHO)
amp_n = -(h / 1j) * c * lam * special.jvp(ell, lam * RHO)
xi0 = ell * h / RHO
print(f"tangential frequency xi0 = {xi0:.4f}")

for a in [const1(), poly_xi((1, 0, -0.5)), gauss_xi(0.2, 0.4)]:
    r = compute_lifts(a, trace, eps1=0.1)
    base = L * np.mean(a(np.linspace(0, L, 512, endpoint=False), xi0))
    print(f"\nsymbol {a.name}")
    print(f"  Neumann lift       {r.neumann.real:+.10f}   closed form {base * abs(amp_n) ** 2:+.10f}")
    print(f"  Dirichlet lift     {r.dirichlet.real:+.10f}   closed form {base * abs(amp_d) ** 2:+.10f}")
    rd = base * (1 - xi0**2) * abs(amp_d) ** 2
    print(f"  (1-xi^2) Dirichlet {r.renormalized_dirichlet.real:+.10f}   closed form {rd:+.10f}")
    print(f"  Cauchy sum         {r.cauchy.real:+.10f}   limit state (+1/2) {limit_state(a, 0.5, circle, disk).value:+.10f}")

print("\nOne mode does not equidistribute (the disk is integrable); the limit states")
print("are what a quantum-ergodic sequence would approach on average.")
