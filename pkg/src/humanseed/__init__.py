"""Crowd-ranked feature importance as initial weights for binary classifiers."""

from .dataset import Dataset, FeatureSchema, SampleSpec, biased_sample, load_csv, standardize, train_test_split
from .errors import DomainError
from .rank_aggregation import Ranking, RankingProfile, borda, kemeny_young, kendall_tau, mc4
from .weight_seed import SeedWeights, seed_from_aggregate, seed_from_profile

__version__ = "0.1.0"
