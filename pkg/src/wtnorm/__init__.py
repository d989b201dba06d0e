"""Matrix completion with weighted and partially weighted trace-norm regularization."""
from .errors import DivergenceError, InvalidInputError, ParseError
from .linalg import (FactorPair, mask, numerical_rank, reconstruct, singular_values,
                     singular_values_factored)
from .norms import (ComplexityReport, Marginals, complexity_report, factored_weighted_penalty,
                    tc, tc_pq, trace_norm, weighted_trace_norm)
from .synth import (ObservationSet, SamplingDistribution, gen_orthogonal_lowrank, marginals_of,
                    sample_observations, two_block_distribution, uniform_distribution)
from .data import RatingsDataset, Split, empirical_marginals, load_triplets, save_triplets, split
from .train import FactorModel, TrainConfig, objective, objective_true_marginals, sgd_step, sweep, train
from .evaluate import EvalReport, excess_error, holdout_rmse, weighted_mse
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"
