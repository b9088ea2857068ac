"""Tensor-network formulation of finite-horizon MDPs.

Expected returns are contracted as a three-layer network (policies,
transition tensors, reward MPO) and policies are optimized with greedy
DMRG-style sweeps. Includes the 1D walker environments, a model-based
planning loop and SVD factorization of joint two-agent tensors.
"""

from .tensor import (DenseTensor, DuplicateAxisError, ShapeMismatchError, SvdFactors,
                     contract, outer, reshape, svd_truncated)
from .fmdp import (FmdpSpec, InitialDistribution, PolicySet, TransitionModel, Violation,
                   copy_tensor, flat, uniform_policy, validate)
from .mpo import ReturnMpo, build_sarl_mpo, build_snake_mpo, fuse_per_timestep
from .contraction import (DimensionError, EnvironmentTensor, ReturnNetwork,
                          environment_tensor, expected_return, total_probability)
from .optimize import SweepReport, greedy_update, optimize_marl, optimize_sarl
from .walker import (TrajectoryRecord, WalkerConfig, build_marl_walker, build_sarl_walker,
                     discretize_normal, sample_trajectories)
from .planning import EpochLog, PlanConfig, init_uniform_model, plan, update_model
from .decompose import (DecomposedTransition, decompose_joint, expected_return_decomposed,
                        reconstruction_error, svd_scan)

__version__ = "0.1.0"
