"""Network reconstruction for noisy leader-follower consensus with hidden leaders."""

from .arfit import BlockEstimates, LagCovariances, estimate_blocks, fit, lag_covariances
from .evaluate import align_leader_permutation, convergence_sweep, evaluate, support_metrics
from .multi_recovery import MultiLeaderResult, recover_multi
from .network import DynamicsMatrix, NetworkSpec, assemble, check_stability, generate_paper_network
from .simulate import Trajectory, run, simulate
from .single_recovery import SingleLeaderResult, recover_single

__version__ = "0.1.0"

__all__ = [
    "BlockEstimates", "DynamicsMatrix", "LagCovariances", "MultiLeaderResult", "NetworkSpec",
    "SingleLeaderResult", "Trajectory", "align_leader_permutation", "assemble", "check_stability",
    "convergence_sweep", "estimate_blocks", "evaluate", "fit", "generate_paper_network",
    "lag_covariances", "recover_multi", "recover_single", "run", "simulate", "support_metrics",
]
