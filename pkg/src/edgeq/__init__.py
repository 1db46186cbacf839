"""Privacy-aware deep Q-learning for edge-server task offloading."""

from .agent import (EpisodeLog, TrainConfig, evaluate_policy, greedy_policy,
                    make_q_policy, train_dpdqo, train_dqn_baseline)
from .env import (AllDroppedError, CostBreakdown, EnvConfig, EnvState,
                  IllegalActionError, TaskSpec)
from .fgpm import DegenerateGeometryError, FgpmConfig, NoiseStore
from .privacy import (AccountantInputs, BudgetOutOfRangeError, PrivacyReport,
                      build_report)
from .qnet import MlpParams, NonFiniteGradientError, ReplayBuffer, Transition

__version__ = "0.1.0"
