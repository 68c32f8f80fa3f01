"""Mirror-descent / dual-averaging regularized value iteration on tabular MDPs."""
from .exceptions import (
    ConfigError,
    DegenerateMdpError,
    DimensionError,
    DomainError,
    MdviError,
    TraceDataError,
)
from .policy import Policy, total_variation
from .regularization import (
    GreedyParams,
    entropy,
    greedy_objective,
    hard_greedy,
    kl_divergence,
    mellowmax,
    regularized_greedy,
    regularized_max,
    smooth_max,
)
from .mdp import (
    Resolvent,
    TabularMdp,
    bellman_apply,
    optimal_value,
    policy_value,
    regularized_bellman_apply,
    regularized_policy_value,
    sampled_regularized_bellman,
    vmax,
)
from .garnet import GarnetParams, garnet_suite, generate, make_rng
from .schemes import (
    INFINITY,
    ErrorModel,
    RunTrace,
    SchemeConfig,
    Variant,
    evaluation_step,
    read_trace,
    run,
    run_da,
    run_md,
    run_variant,
    write_trace,
)
