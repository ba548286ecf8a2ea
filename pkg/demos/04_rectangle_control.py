"""
Negative control: interior quantum variance on a rectangle does not decay.

Rectangle eigenfunctions sin(m pi x/a) sin(n pi y/b) carry momentum fixed in
direction, so observables weighted by the momentum component xi_x^2 keep an
order-one variance however high the frequency.  A purely spatial observable
still averages out.  The harness flags the domain as non-ergodic.

Run:  python demos/04_rectangle_control.py
"""

import numpy as np

from qerlab import analytic_modes, build_domain
from qerlab.harness import Observable, qe_diagnostic

a, b = 1.0, 0.7
rect = build_domain({"kind": "rectangle", "a": a, "b": b})
idx = [(m, n) for m in range(1, 60) for n in range(1, 60) if np.pi**2 * (m * m / a**2 + n * n / b**2) < 8000]
idx.sort(key=lambda t: t[0] ** 2 / a**2 + t[1] ** 2 / b**2)
modes = analytic_modes(rect, idx)
for i, m in enumerate(modes):
    m.mode_id = i

windows = [(500, 1000), (1000, 2000), (2000, 4000), (4000, 8000)]
observables = [
    Observable("xi_x^2", lambda x, y: np.ones_like(x), (2, 0)),
    Observable("(1 + cos(2 pi x/a)/2) xi_x^2", lambda x, y: 1 + 0.5 * np.cos(2 * np.pi * x / a), (2, 0)),
    Observable("(1 + cos(2 pi y/b)/2) xi_x^2", lambda x, y: 1 + 0.5 * np.cos(2 * np.pi * y / b), (2, 0)),
    Observable("cos(2 pi x/a)", lambda x, y: np.cos(2 * np.pi * x / a), (0, 0)),
]
out = qe_diagnostic(modes, observables, windows, delta=1 / 200)
print(f"{len(modes)} modes; ergodic hypothesis: {out['ergodic_hypothesis']}\n")
print(f"{'observable':32s}" + "".join(f"  [{lo},{hi})".rjust(14) for lo, hi in windows))
for o in observables:
    print(f"{o.name:32s}" + "".join(f"{s.variance:14.4f}" for s in out[o.name]))
