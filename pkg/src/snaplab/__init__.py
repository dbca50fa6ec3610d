"""Property inference through label-flip poisoning: data, models, closed-form
analysis, attacks and an experiment harness."""

from .attack import (
    AttackConfig,
    AttackOutcome,
    DistinguishingTest,
    EstimationTrace,
    calibrate_clean,
    derive_seed,
    distinguish,
    estimate_property_size,
    label_only_distinguish,
    label_only_poison_rate,
    learn_confidence_model,
    property_existence,
    split_attacker_pool,
)
from .data import (
    DataError,
    PropertyPredicate,
    Record,
    Schema,
    SynthSpec,
    TabularDataset,
    construct_world,
    exact_marginals,
    load_csv,
    mix_poison_spec,
    sample_query_set,
    split,
    synth_sample,
    write_csv,
)
from .harness import ExperimentPlan, ExperimentReport, emit_plot_data, load_report, run_experiment
from .models import ModelSpec, TrainConfig, TrainedModel, bayes_from_spec, evaluate, logit, predict_confidence, train
from .poison import PoisonConfig, build_poison_set, choose_labels
from .synthetic import census_like
from .theory import (
    GaussianPair,
    TheoryParams,
    label_only_rate,
    optimal_threshold,
    poisoned_logit,
    poisoned_moments,
    required_queries,
    select_poison_rate_by_variance,
)

__version__ = "0.1.0"
