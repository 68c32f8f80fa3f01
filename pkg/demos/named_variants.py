"""
Known algorithms inside the same family
=======================================

Conservative value iteration is a change of variables of MD-VI, and speedy
Q-learning is DA-VI with a vanishing KL weight.
"""
import numpy as np

from mdvi import SchemeConfig, TabularMdp, run, total_variation

rng = np.random.default_rng(2)
mdp = TabularMdp(rng.dirichlet(np.ones(5), size=(5, 3)), rng.random((5, 3)), 0.9)

md = run(mdp, SchemeConfig("MD", lam=0.2, tau=0.1, iterations=50))
cvi = run(mdp, SchemeConfig("CVI", lam=0.2, tau=0.1, iterations=50))
print("CVI vs MD-VI policy gap:", max(total_variation(md.policy(k), cvi.policy(k)) for k in range(51)))

# pick a small MDP whose greedy action never ties, where the limit is clean
for seed in range(100):
    rng = np.random.default_rng(seed)
    small = TabularMdp(rng.dirichlet(np.ones(4), size=(4, 2)), rng.random((4, 2)), 0.9)
    sql = run(small, SchemeConfig("SQL", iterations=100))
    if np.abs(np.diff(sql.h, axis=2))[1:].min() > 1e-3:
        break
da = run(small, SchemeConfig("DA", lam=1e-8, iterations=100))
print("SQL vs DA-VI(lam=1e-8) on seed", seed, ":", np.abs(sql.h - da.h).max())
