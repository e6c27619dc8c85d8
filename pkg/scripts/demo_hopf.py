"""Hopf recurrences in exact arithmetic and the linear growth rate on a Dini domain."""
from bhlab.hopf import DiniModulus, dini_domain, hopf_constants, hopf_experiment

for om in (DiniModulus.power(0.005, 0.5), DiniModulus.log_squared(0.01)):
    hc = hopf_constants(om, k_max=60)
    print(f"{om.label:>18}: Dini integral {om.integral:.5f}, min a_k {float(min(hc.a)):.6f} "
          f"(floor c1/12 = {float(hc.c1 / 12):.4f}), claims {hc.claim_a and hc.claim_b}")

dom = dini_domain(lambda s: 0.05 * s ** 0.3)
for budget in (0.0, 0.5, 1.0):
    fits = [hopf_experiment(dom, h, budget=budget).c_fit for h in (1 / 16, 1 / 32)]
    print(f"budget {budget:.1f}: min_r u(r e_n, 0)/r = {fits[0]:.4f} (h=1/16), {fits[1]:.4f} (h=1/32)")
