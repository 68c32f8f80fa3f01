"""
Averaging washes out sampling noise
===================================

With a generative model, AVI keeps the full noise of each sample. DA-VI
averages it away. The weighted average E^beta of i.i.d. unit noise has
stationary variance (1 - beta) / (1 + beta).
"""
import numpy as np

from mdvi import ErrorModel, GarnetParams, SchemeConfig, generate, make_rng, run
from mdvi.bounds import error_moving_average, normalized_error_curve

em = ErrorModel.generative()
for label, cfg in [("AVI", SchemeConfig("AVI", iterations=300, error_model=em)),
                   ("DA lam=1", SchemeConfig("DA", lam=1.0, iterations=300, error_model=em))]:
    finals = []
    for i in range(5):
        mdp = generate(GarnetParams(), make_rng(3, i))
        finals.append(normalized_error_curve(run(mdp, cfg, make_rng(3, i, 0)))[-1])
    print(f"{label:9s} normalized error at k=300: {np.mean(finals):.4f}")

eps = np.random.default_rng(4).standard_normal((201, 10_000))
for beta in (0.5, 0.9, 0.99):
    var = error_moving_average(eps, beta)[-1].var()
    print(f"beta={beta}: var {var:.4f}  vs (1-beta)/(1+beta) = {(1 - beta) / (1 + beta):.4f}")
