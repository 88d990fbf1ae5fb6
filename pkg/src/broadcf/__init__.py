"""Rating prediction from neighbour rating vectors fed to a Broad Learning System."""

from .bls import BlsHyperparams, BlsModel, count_trainable, forward, init_random, train
from .encoding import TrainingSet, build_training_set, collaborative_vector, one_hot
from .errors import (
    BroadCFError,
    ConfigError,
    ContractViolation,
    DataError,
    EmptyDatasetError,
    ModelFormatError,
    ModelStateError,
    ParseError,
    RatingRangeError,
    SolverError,
)
from .evaluation import EvalReport, decode_rating, evaluate, improvement_percent, mae, rmse, user_mean_baseline
from .neighbors import NeighborIndex, build_index, cosine_similarity, knu_rating_vector, lni_rating_vector
from .ratings import DatasetSplit, RatingMatrix, load_ratings, split
from .recommender import BroadCF

__version__ = "0.1.0"
