"""
Convergence of the collar Rellich identity on a rectangle eigenfunction.

The commutator identity relates an interior collar integral to boundary
terms on a chord.  For an exact eigenfunction the discrete defect should fall
like the square of the collar mesh spacing.

Run:  python demos/02_rellich_identity.py
"""

import numpy as np

from qerlab import analytic_modes, build_curve, build_domain, fermi_chart
from qerlab.psido import gauss_xi, s_window
from qerlab.rellich import default_profile, rellich_defect

square = build_domain({"kind": "rectangle", "a": 1, "b": 1})
chord = build_curve({"kind": "segment", "x0": 0.25, "y0": 0.45, "x1": 0.75, "y1": 0.45}, square)
symbol = s_window(0.1, 0.4, 0.08) * gauss_xi(0.3, 0.5)
profile = default_profile(symbol, 0.2)

for mn in [(2, 5), (4, 4)]:
    mode = analytic_modes(square, [mn])[0]
    print(f"\nmode {mn}: lam^2 = {mode.lam2:.2f}")
    print(f"  {'n_s':>6} {'n_n':>6} {'lhs':>14} {'rhs':>14} {'defect':>10} {'order':>6}")
    prev = None
    for ns, nn in [(128, 321), (256, 641), (512, 1281), (1024, 2561)]:
        r = rellich_defect(mode, profile, fermi_chart(chord, 0.2, ns, nn))
        order = "" if prev is None else f"{np.log2(prev / r.defect):6.2f}"
        print(f"  {ns:6d} {nn:6d} {r.lhs.real:14.10f} {r.rhs.real:14.10f} {r.defect:10.2e} {order:>6}")
        prev = r.defect
