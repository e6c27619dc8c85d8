"""Homogeneity mu(eta) of caloric cone solutions on two meshes, with the extrapolated mu(0)."""
from bhlab.ou_spectral import SelfSimilarMesh, continuity_bound, principal_eigenpair, richardson

meshes = [SelfSimilarMesh(1 / 32), SelfSimilarMesh(1 / 64)]
etas = [-0.25, -0.1, 0.0, 0.1, 0.25]

print(f"{'eta':>7} {'mu h=1/32':>11} {'mu h=1/64':>11} {'extrap.':>9}")
rows = []
for eta in etas:
    mus = [principal_eigenpair(eta, m).mu for m in meshes]
    rows.append((eta, richardson(mus)))
    print(f"{eta:+7.2f} {mus[0]:11.6f} {mus[1]:11.6f} {rows[-1][1]:9.6f}")

print("\nadjacent ratios rho2/rho1 against the continuity bound")
for (e1, m1), (e2, m2) in zip(rows, rows[1:]):
    print(f"  ({e1:+.2f}, {e2:+.2f})  ratio {m2 / m1:.4f}  bound {continuity_bound(e1, e2):.4f}")
