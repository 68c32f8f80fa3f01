"""
Checking the error-propagation bounds on a real run
===================================================

Each bound is evaluated entry by entry from the recorded errors and
policies. The moving-average bound has two forms: the plus-signed one as
usually written and a minus-signed one that follows from a corrected
derivation. On this run only the minus form holds.
"""
from mdvi import ErrorModel, GarnetParams, SchemeConfig, generate, make_rng, run
from mdvi.bounds import certify_thm1, certify_thm2

mdp = generate(GarnetParams(), make_rng(1, 1))
em = ErrorModel.generative()

flat = run(mdp, SchemeConfig("DA", lam=0.1, iterations=400, error_model=em), make_rng(2, 0))
report = certify_thm1(flat)
print(f"averaged errors: certified={report.certified} min slack={report.min_slack:.3f}")

soft = run(mdp, SchemeConfig("DA", lam=9e-3, tau=1e-3, iterations=200, error_model=em), make_rng(2, 1))
for form in ("stated", "corrected"):
    report = certify_thm2(soft, stride=10, form=form)
    print(f"moving-average errors, {form} form: certified={report.certified} "
          f"min slack={report.min_slack:.4f} at k={int(report.ks[report.slack_per_k.argmin()])}")
