"""How big may the collars be?  Chips, their quadratic and the safe bound.

Regions that turn a corner around a grid point use small triangles (chips)
inside wall collars.  Each chip carries a quadratic in delta whose first
positive root bounds the collar width for which the chip's hypotenuse stays
transverse.  This script lists the bounds for a system with both narrow and
wide chips, then pushes delta past delta* and shows the check failing.
"""

from fractions import Fraction

from conley_switch.corpus import load
from conley_switch.field import make_fdelta
from conley_switch.pipeline import analyze, build_region_lattice
from conley_switch.verify import check_transversality, chip_quadratic

a = analyze(load("leaky_cycle").system)
ds = a.constants.delta_star
print(f"delta* = {ds:.6f}")

rl = build_region_lattice(a)
delta = rl.regions[0].tiles.delta
print(f"default delta = {delta} ({float(delta):.6f})\n")
seen = set()
for region in rl.regions:
    for key, chip in region.chips.items():
        if key in seen:
            continue
        seen.add(key)
        cert = chip_quadratic(a.system, chip, delta)
        print(f"{chip.kind:6s} chip {key}: bound {cert.bound:.4f} (>= delta*: {cert.bound >= ds})")

big = Fraction(1, 5)
rl = build_region_lattice(a, big, allow_unsafe=True)
sampler = make_fdelta(a.system, big)
print(f"\nwith delta = {big}, well above delta*:")
for k, region in enumerate(rl.regions):
    if region.is_empty:
        continue
    rep = check_transversality(sampler, region)
    worst = rep.worst
    print(f"  region {k}: {'pass' if rep.passed else 'FAIL'}, worst margin {worst.margin:+.4f} on cases {worst.cases}")
