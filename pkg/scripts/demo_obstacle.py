"""Manufactured obstacle solution ((x - t)_+)^2/2: errors under refinement, then a 2-D curved front."""
from bhlab.obstacle import front_experiment, manufactured_experiment

print(f"{'h':>8} {'sup err/h':>10} {'FB err/h':>9} {'exact quotient':>15} {'discrete quotient':>18}")
for k in (4, 5, 6):
    r = manufactured_experiment(2.0 ** -k)
    print(f"  1/{2 ** k:<4d} {r['sup_error_over_h']:10.4f} {r['fb_error_over_h']:9.4f} "
          f"{r['exact_quotient_seminorm']:15.2e} {r['discrete_quotient_seminorm']:18.4f}")

for k in (5, 6):
    sol, fb, rec = front_experiment(2.0 ** -k)
    print(f"2-D front h=1/{2 ** k}: FB samples {len(fb.t)}, Lipschitz {fb.lipschitz:.3f}, "
          f"normal seminorm {rec.normal_seminorm:.3f}, FB exponent {rec.fb_exponent:.3f}")
