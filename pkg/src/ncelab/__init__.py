"""Contrastive-estimation laboratory.

Synthetic populations, score-function families (tabular, MLP, and the
unified dual/poly/multi-vector/sum-of-max encoder form), candidate-softmax
losses with exact gradients, negative-example strategies, gradient-bias
analysis, training loops, and a toy retrieval benchmark.
"""

from .population import (
    LabelSpace,
    PopulationDistribution,
    SyntheticPopulationConfig,
    build_synthetic_population,
    marginal,
    sample_pair,
)
from .scorers import MlpScorer, TabularScorer, model_distribution
from .encoders import EncoderScorer, IndexedEncoderScorer, UnifiedScoreConfig, \
    instantiate_named
from .losses import CandidateTuple, LossValue, cross_entropy_exact, \
    hard_nce_empirical, hard_nce_expected, nce_discriminator, \
    prior_corrected_loss, adversarial_loss
from .negatives import SamplerSpec, make_sampler, mixed_split, sample_uniform, \
    sample_hard_distinct, sample_model_iid, sample_mixed, greedy_top
from .bias import BiasReport, GammaTable, bias_direct, bias_monte_carlo, \
    bias_theorem1, gamma_exact, gamma_heuristic
from .training import ExperimentConfig, ExperimentTrace, OptimizerState, \
    optimizer_step, run_figure1, train
from .retrieval import ToyCorpus, generate_toy_corpus, rank_all, recall_at_k, \
    two_stage

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
