"""Communication graph algebra and the two excitation/connectivity checks.

The estimator needs the regressors to be cooperatively persistently
exciting and the graph to be connected on average. Both are checked over
a window; the second example shows a switching graph that is never
connected at any instant but is connected on average.
"""

import numpy as np

from distinertia import CommGraph, connectivity_report, incidence_and_laplacian, pe_report

k3_then_path = CommGraph(3, ((0.0, ((1, 2), (1, 3), (2, 3))), (5.0, ((1, 2), (1, 3)))))
for t in (0.0, 5.0):
    mats = incidence_and_laplacian(k3_then_path, t)
    print(f"t={t}: L =\n{mats.L}\neigenvalues {np.linalg.eigvalsh(mats.L).round(6)}")

print("window [0, 20]:", connectivity_report(k3_then_path, 0.0, 20.0))
alternating = CommGraph(3, tuple((float(s), ((1, 2),) if s % 2 == 0 else ((2, 3),))
                                 for s in range(20)))
print("alternating single links:", connectivity_report(alternating, 0.0, 20.0))

t = np.arange(0.0, 20.0, 1e-3)
rich = np.column_stack([np.sin(t), np.cos(0.7 * t), 0.2 * np.sin(3 * t)])
print("PE with three excited areas:", pe_report(rich, 1e-3, 20.0).pe_satisfied)
rich[:, 2] = 0.0
print("PE with a silent area:", pe_report(rich, 1e-3, 20.0).pe_satisfied)
