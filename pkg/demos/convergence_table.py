"""Mesh-refinement study of the evolved pendulum density.

Runs the same initial bump on grids from 50 to 400 cells per axis, evolves
each to t = pi with the step rule dt = h / (2 pi + 1), and measures the L1
distance between consecutive levels after exact prolongation.  The
effective order -log2 of the successive-difference ratio starts below 1/2
while the sheared filaments are under-resolved and climbs as the mesh
catches up.

The defaults of ``fpfvm converge`` run exactly this study.
"""

import numpy as np

import fpfvm as F

pi = np.pi

domain = F.BoxDomain((-pi, -pi), (pi, pi))
bc = ("periodic", "neumann")
field = F.pendulum_field()

# squared-exponential bump exp(-|x - mu|^2 / 0.64), i.e. variance 0.32
# per axis, centered at (0.6 pi, 0); projected by the midpoint rule and
# left unnormalized (truncation to the box is part of the object measured)
pdf = F.gaussian_pdf((0.6 * pi, 0.0), 0.32)

rows = F.convergence_study(
    field, domain, bc, pdf,
    t_final=pi,
    n_list=(50, 100, 200, 400),
    xi=pi / (2 * pi + 1),
    dt_fn=lambda h: h / (2 * pi + 1),
)

print(F.format_convergence_table(rows))
F.write_convergence_csv(rows, "convergence.csv")
print("\nwrote convergence.csv")
print("reference values: 0.25398, 0.19553, 0.14697 "
      "(orders 0.3855, 0.4037)")
