"""
Regularized greedy steps
========================

A KL penalty towards the previous policy keeps the update close to it, an
entropy bonus keeps it stochastic. Both come out of one closed form.
"""
import numpy as np

from mdvi import Policy
from mdvi.regularization import GreedyParams, entropy, kl_divergence, regularized_greedy

q = np.array([[1.0, 0.5, 0.0]])
previous = Policy.from_probs([[0.1, 0.3, 0.6]])

for lam, tau in [(0.0, 0.1), (1.0, 0.0), (1.0, 0.1), (10.0, 0.0)]:
    pi = regularized_greedy(q, previous, GreedyParams(lam, tau))
    print(f"lam={lam:<5} tau={tau:<4} pi={np.round(pi.probs[0], 3)} "
          f"KL={kl_divergence(pi, previous)[0]:.3f} H={entropy(pi)[0]:.3f}")

# a large lam barely moves away from the previous policy; tau alone ignores it
