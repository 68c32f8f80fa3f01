"""
Mirror descent and dual averaging give the same iterates
========================================================

MD-VI regularizes each greedy step towards the previous policy. DA-VI
instead acts greedily on an average of past q-tables. Fed the same noise,
the two trajectories agree to round-off.
"""
import numpy as np

from mdvi import ErrorModel, GarnetParams, SchemeConfig, generate, make_rng, run, total_variation

mdp = generate(GarnetParams(num_states=30, num_actions=4, branching=4), make_rng(0, 0))
noise = np.random.default_rng(1).normal(scale=0.3, size=(100, *mdp.shape))

for lam, tau in [(0.1, 0.0), (0.09, 0.01)]:
    em = ErrorModel.prescribed(noise)
    md = run(mdp, SchemeConfig("MD", lam=lam, tau=tau, iterations=100, error_model=em))
    da = run(mdp, SchemeConfig("DA", lam=lam, tau=tau, iterations=100, error_model=em))
    q_gap = np.abs(md.q - da.q).max()
    tv = max(total_variation(md.policy(k), da.policy(k)) for k in range(101))
    print(f"lam={lam} tau={tau}: max |q_MD - q_DA| = {q_gap:.1e}, max TV = {tv:.1e}")
