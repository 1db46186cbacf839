"""Closed-form privacy and utility accounting for the noised Q-learner.

Everything here is a pure function of run constants: the minimum compliant
noise level for a target (epsilon, delta) budget over the training horizon,
the effective delta including the kernel-tail term, the classic Gaussian
mechanism calibration, the learning-error bound, and numeric estimators for
the two quantities the bounds treat as given -- the reward sensitivity of
the cost model and the Lipschitz constant of the learned Q-network.

Two noise calibrations are exposed deliberately: ``min_sigma`` multiplies by
the squared-norm bound J as the composed guarantee states it, while
``gaussian_mechanism_sigma`` takes a plain sensitivity (use sqrt(J) for the
per-update check).  The dimensional mismatch between them is preserved from
the source analysis rather than resolved here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import EnvConfig, TaskSpec, execution_cost, local_cost, offload_cost
from .fgpm import psi as psi_factor
from .qnet import MlpParams


class BudgetOutOfRangeError(Exception):
    """The privacy budget must satisfy 0 < epsilon < 1."""


@dataclass(frozen=True)
class AccountantInputs:
    epsilon: float
    delta: float
    alpha: float = 0.002
    z: float = 1.0
    batch: int = 64
    lipschitz: float = 1.0         # D, of the Q-function approximation
    sensitivity: float = 1.0       # Delta_F, max reward gap of adjacent pairs
    episodes_trained: int = 280    # episodes after warmup
    horizon: int = 100
    sigma: float = 0.1             # actual noise level of the run
    state_count: int = 1000        # n, cardinality of the (discretized) state space
    gamma: float = 0.98

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.lipschitz < 0 or self.sensitivity < 0 or self.sigma < 0:
            raise ValueError("lipschitz, sensitivity, sigma must be >= 0")
        if self.state_count < 1 or self.episodes_trained < 0 or self.horizon < 1:
            raise ValueError("state_count >= 1, episodes_trained >= 0, horizon >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")

    @property
    def total_steps(self) -> int:
        return self.episodes_trained * self.horizon

    @property
    def psi(self) -> float:
        return psi_factor(self.alpha, self.z, self.batch)


@dataclass(frozen=True)
class PrivacyReport:
    sigma_min: float
    delta_effective: float
    z_condition_met: bool
    rkhs_bound: float       # J, bound on the squared kernel-space norm
    utility_bound: float

    def as_dict(self) -> dict:
        return {
            "sigma_min": self.sigma_min,
            "delta_effective": self.delta_effective,
            "z_condition_met": self.z_condition_met,
            "rkhs_bound": self.rkhs_bound,
            "utility_bound": self.utility_bound,
        }


def j_factor(alpha: float, z: float, batch: int, lipschitz: float) -> float:
    """((4a(z+1)/batch)^2 + 4a(z+1)/batch) * D^2 -- the squared-norm bound
    on the Q-value gap of reward-adjacent inputs."""
    if alpha <= 0 or batch <= 0 or z < 0 or lipschitz < 0:
        raise ValueError("need alpha > 0, batch > 0, z >= 0, lipschitz >= 0")
    u = 4.0 * alpha * (z + 1.0) / batch
    return (u * u + u) * lipschitz ** 2


def min_sigma(inputs: AccountantInputs) -> float:
    """Smallest noise level meeting the composed (epsilon, delta) budget over
    all post-warmup updates."""
    if not 0.0 < inputs.epsilon < 1.0:
        raise BudgetOutOfRangeError(
            f"epsilon must satisfy 0 < epsilon < 1, got {inputs.epsilon}")
    j = j_factor(inputs.alpha, inputs.z, inputs.batch, inputs.lipschitz)
    compositions = inputs.total_steps / inputs.batch
    root = math.sqrt(2.0 * compositions
                     * math.log(math.e + inputs.epsilon / inputs.delta))
    return j * inputs.sensitivity * root / inputs.epsilon


def effective_delta(z: float, psi: float, sigma: float,
                    delta: float) -> tuple[float, bool]:
    """delta plus the kernel-tail term exp(-(2z - 8.68 sqrt(psi) sigma)^2 / 2),
    and whether the side condition 2z > 8.68 sqrt(psi) sigma holds."""
    margin = 2.0 * z - 8.68 * math.sqrt(psi) * sigma
    return delta + math.exp(-margin * margin / 2.0), margin > 0.0


def gaussian_mechanism_sigma(delta: float, sensitivity: float,
                             epsilon: float) -> float:
    """Classic Gaussian-mechanism calibration sqrt(2 ln(1.25/delta)) * Delta / epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise BudgetOutOfRangeError(
            f"epsilon must satisfy 0 < epsilon < 1, got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return math.sqrt(2.0 * math.log(1.25 / delta)) * sensitivity / epsilon


def utility_bound(sigma: float, state_count: int, gamma: float) -> float:
    """Expected L1 learning error bound: 2 sqrt(2) sigma / (sqrt(n pi) (1 - gamma))."""
    if state_count < 1:
        raise ValueError("state_count must be >= 1")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    return 2.0 * math.sqrt(2.0) * sigma / (math.sqrt(state_count * math.pi)
                                           * (1.0 - gamma))


def estimate_sensitivity(cfg: EnvConfig,
                         reward_clip: float | None = 100.0) -> float:
    """Reward sensitivity from the cost model, drop-free and with an empty
    local queue: the widest per-action execution-cost spread over the task
    parameter box corners.

    Pairs under the same decision differ only through the task draw, which
    is what the adjacency notion quantifies; the cross-action gap is a
    policy difference, not a data one.  The unclipped worst case is
    unbounded (the drop-rate multiplier diverges as the drop rate
    approaches one), so the estimate is capped at ``reward_clip`` when one
    is given.
    """
    corners = [TaskSpec(size=s, cycles=c, arrival_slot=0)
               for s in (cfg.size_min, cfg.size_max)
               for c in (cfg.cycles_min, cfg.cycles_max)]
    spread = 0.0
    for action in (0, 1):
        costs = [execution_cost(action, local_cost(0.0, t, cfg),
                                offload_cost(t, cfg), cfg.psi_weight)
                 for t in corners]
        spread = max(spread, max(costs) - min(costs))
    if reward_clip is not None:
        spread = min(spread, reward_clip)
    return spread


def estimate_lipschitz(params: MlpParams, iters: int = 50,
                       tol: float = 1e-6) -> float:
    """Upper bound on the network's Lipschitz constant: the product of layer
    spectral norms (ReLU is 1-Lipschitz), each by power iteration."""
    bound = 1.0
    for w in params.weights:
        bound *= _spectral_norm(w, iters, tol)
    return bound


def _spectral_norm(w: np.ndarray, iters: int, tol: float) -> float:
    rng = np.random.default_rng(0)  # fixed internal seed: deterministic output
    v = rng.standard_normal(w.shape[1])
    norm_v = np.linalg.norm(v)
    if norm_v == 0.0:
        return 0.0
    v /= norm_v
    sigma = 0.0
    for _ in range(iters):
        u = w @ v
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return 0.0
        u /= norm_u
        v = w.T @ u
        new_sigma = np.linalg.norm(v)
        if new_sigma == 0.0:
            return 0.0
        v /= new_sigma
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            sigma = new_sigma
            break
        sigma = new_sigma
    return float(sigma)


def build_report(inputs: AccountantInputs) -> PrivacyReport:
    """Assemble the full accountant output for one run configuration."""
    d_eff, z_ok = effective_delta(inputs.z, inputs.psi, inputs.sigma,
                                  inputs.delta)
    return PrivacyReport(
        sigma_min=min_sigma(inputs),
        delta_effective=d_eff,
        z_condition_met=z_ok,
        rkhs_bound=j_factor(inputs.alpha, inputs.z, inputs.batch,
                            inputs.lipschitz),
        utility_bound=utility_bound(inputs.sigma, inputs.state_count,
                                    inputs.gamma),
    )
