from .config import MappoConfig  # noqa
from .gae import compute_gae, standardize  # noqa
from .per import SumTree, PerBuffer, TransitionEntry, per_insert, per_update, per_sample, raw_weights  # noqa
from .rollout import EnvPool, Rollout, collect_rollout, recompute_log_probs, episode_summary  # noqa
from .losses import OnlineBatch, critic_loss, actor_loss, clipped_surrogate  # noqa
from .train import (Curriculum, Learner, new_online_networks, compute_advantages, train_online, ablation,  # noqa
                    CURVE_COLUMNS, ARMS)
