"""Expectile regression and expectile neural networks for genetic data."""

from .core import (
    DiscreteDist,
    ExpectileLevel,
    FinitePXY,
    als_loss,
    als_loss_dt,
    bounds_suite,
    dist_expectile,
    empirical_expectile,
    inner_risk,
    lemma1_check,
    theorem1_check,
)
from .models import Dataset, EnnArchitecture, ExpectileModel, ParamVector, gene_mask
from .optim import OptimOptions, OptimResult, bfgs_minimize, multi_start
from .pipeline import StudyConfig, fit_with_lambda_search, run_study, split
from .simgen import SimulationSpec, simulate

__version__ = "0.1.0"
