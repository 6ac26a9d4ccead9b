"""A negative feedback loop: one Morse set made of four walls.

The combinatorial dynamics cycle through the four cells around the central
grid point.  The trapping region for the top attractor is the whole box,
glued from four cores, four wall collars and the central square.  We also
follow one trajectory around the loop, then knock a collar out of the region
and watch trajectories leak.
"""

from fractions import Fraction

import numpy as np

from conley_switch.corpus import load
from conley_switch.field import integrate, make_fdelta
from conley_switch.pipeline import analyze, build_region_lattice
from conley_switch.verify import check_forward_invariance

a = analyze(load("negative_feedback").system)
(morse_set,) = a.morse.morse_sets
print("Morse set:", ", ".join(map(str, sorted(morse_set))))

delta = Fraction(1, 50)
rl = build_region_lattice(a, delta)
top = rl.top
print("top region:", top.counts())
for key in sorted(top.inventory, key=repr):
    print("  ", key)

sampler = make_fdelta(a.system, delta)
tr = integrate(sampler, (1.5, 1.5), dt=1e-3, horizon=30)
cells = [(int(x > 1), int(y > 1)) for x, y in tr.states[::50]]
visits = [c for k, c in enumerate(cells) if k == 0 or c != cells[k - 1]]
print("\ncell visits from (1.5, 1.5):", " -> ".join(map(str, visits[:9])), "...")
print("final state:", np.round(tr.final, 4))

rep = check_forward_invariance(sampler, top, n_traj=300, horizon=20)
print(f"\nintact region: {rep.escapes} escapes out of {rep.n_traj}")
collar = sorted(k for k in top.inventory if k[0] == "G1")[0]
rep = check_forward_invariance(sampler, top.without(collar), n_traj=300, horizon=20)
print(f"without {collar}: {rep.escapes} escapes out of {rep.n_traj}")
