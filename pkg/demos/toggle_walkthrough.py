"""Walk the toggle switch from its wiring table to verified trapping regions.

Two mutually repressing genes: each cell of the threshold grid has a constant
production rate, and the combinatorial model predicts two stable states.
Run with ``python3 demos/toggle_walkthrough.py``.
"""

from fractions import Fraction

from conley_switch.corpus import load
from conley_switch.pipeline import VerifySettings, analyze, build_region_lattice, verify_regions
from conley_switch.switching import classify_cell

system = load("toggle").system
print("cells and their types")
for cell in system.cells():
    print(f"  {cell}: focal point {tuple(map(str, system.focal(cell)))}, type {classify_cell(system, cell).value}")

a = analyze(system)
c = a.constants
print(f"\nmu={c.mu} lambda={c.lam} rho={c.rho} gamma_bar={c.gamma_bar} delta*={c.delta_star:.6f}")

print(f"\nMorse graph: {len(a.morse.nodes)} nodes, {len(a.morse.edges)} edges")
for p, m in enumerate(a.morse.morse_sets):
    print(f"  M{p} = {{{', '.join(map(str, sorted(m)))}}}")
print(f"attractor lattice has {len(a.attractors.lattice)} elements")

# a collar width comfortably below delta*
rl = build_region_lattice(a, Fraction(1, 50))
for k, region in enumerate(rl.regions):
    print(f"  region {k}: {region.counts()}")

# a short run keeps the demo quick; the CLI defaults use 1000 trajectories over T=50
v = verify_regions(a, rl, VerifySettings(trajectories=200, horizon=10))
for r in v.regions:
    print(f"  region {r.index}: worst edge margin {r.transversality.worst.margin:+.3f}, "
          f"escapes {r.invariance.escapes}")
print("verification:", "PASS" if v.passed else f"FAIL ({v.first_failure})")
