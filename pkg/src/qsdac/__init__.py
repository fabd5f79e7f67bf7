"""Learning quasi-stationary distributions of killed Markov chains by actor-critic."""
from .actor_critic import TrainerConfig, TrainResult, train
from .baselines import run_baseline
from .exact import exact_policy_gradient, policy_tables, qsd_power, stationary
from .kernel import SubMarkovKernel, load_kernel, save_kernel, validate
from .policy import SoftmaxPolicy, ValueTable, alpha_of

__all__ = [
    "SoftmaxPolicy",
    "SubMarkovKernel",
    "TrainResult",
    "TrainerConfig",
    "ValueTable",
    "alpha_of",
    "exact_policy_gradient",
    "load_kernel",
    "policy_tables",
    "qsd_power",
    "run_baseline",
    "save_kernel",
    "stationary",
    "train",
    "validate",
]

__version__ = "0.1.0"
