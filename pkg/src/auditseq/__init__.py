"""Risk-limiting election audits via betting martingales and confidence sequences.

Ballots sampled without replacement from a bounded finite population are fed
to nonnegative betting martingales; Ville's inequality turns the running
wealth into anytime-valid tests, and inverting those tests over candidate
means gives time-uniform confidence sequences.  An audit certifies a reported
outcome once the confidence sequence for every pairwise assertion excludes
the losing hypothesis.
"""

from auditseq.population import (
    AssorterPopulation,
    Assertion,
    ContestResult,
    encode_plurality_pairwise,
    population_mean,
    rescale_to_unit,
)
from auditseq.martingale import (
    ConditionalMeanState,
    ConvexGrid,
    FixedLambda,
    MartingaleState,
    TwoSided,
    WeightVector,
    apriori_kelly_lambda,
    conditional_mean,
    init_state,
    kelly_lambda_numeric,
    log_wealth_path,
    logical_refutation_check,
    make_weights,
    update_martingale,
)
from auditseq.confseq import (
    ConfidenceConfig,
    ConfidenceState,
    anytime_p_value,
    anytime_p_values,
    interval,
    lower_bound,
)

__version__ = "0.1.0"
