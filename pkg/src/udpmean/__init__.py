"""User-level differentially private mean estimation with few users."""

__version__ = "0.1.0"

from .accounting import PrivacyBudget, strong_compose, weak_compose
from .amplify import AmplifyParams, dp_estimate_2
from .blockwise import InterpolationParams, choose_k, dp_estimate_interpolated
from .mechanism import EstimateOutcome, MechanismParams, Outcome, dp_estimate_1
from .userlevel import (DiscreteSamples, UserDataset, dp_estimate_user,
                        learn_discrete_distribution, user_means)

__all__ = [
    "PrivacyBudget", "strong_compose", "weak_compose",
    "AmplifyParams", "dp_estimate_2",
    "InterpolationParams", "choose_k", "dp_estimate_interpolated",
    "EstimateOutcome", "MechanismParams", "Outcome", "dp_estimate_1",
    "DiscreteSamples", "UserDataset", "dp_estimate_user",
    "learn_discrete_distribution", "user_means",
]
