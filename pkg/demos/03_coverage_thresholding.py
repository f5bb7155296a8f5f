"""Interactive-style threshold sweep: user 0-10 scale, strict cut, pixel
counts, and the populated/depopulated percentages.

Run from the repository root:  python demos/03_coverage_thresholding.py
"""

import tempfile
from pathlib import Path

from canecover.coverage import coverage_report, map_threshold, pseudocolor
from canecover.images import save_image, to_grayscale
from canecover.synth import FieldSpec, generate_field

out = Path(tempfile.mkdtemp(prefix="canecover_demo_"))

spec = FieldSpec(width=128, height=128, gap_fraction_target=0.25, seed=7)
field, _, truth = generate_field(spec)
print(f"ground-truth gap fraction: {truth:.4f}")
print(f"ideal user threshold (midpoint of textures): {spec.ideal_threshold_user():.2f}")

print("\nuser  gray  populated%  depopulated%")
for user in (0, 2, 4, spec.ideal_threshold_user(), 8, 10):
    report, mask = coverage_report(field, user)
    print(
        f"{user:4.1f}  {map_threshold(user):4d}  "
        f"{float(report.populated_pct):9.2f}  {float(report.depopulated_pct):11.2f}"
    )

report, mask = coverage_report(field, spec.ideal_threshold_user())
print(f"\nat the ideal threshold: depopulated {float(report.depopulated_pct):.2f}% "
      f"(truth {100 * truth:.2f}%)")
print("low-contrast warning:", report.low_contrast)

save_image(mask.to_image(), out / "mask.pgm")
save_image(pseudocolor(to_grayscale(field), [(20, 20, 80), (240, 220, 60)]), out / "colored.png")
print("wrote", out / "mask.pgm", "and", out / "colored.png")
