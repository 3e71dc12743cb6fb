from .layers import Module, Linear, Mlp, Normalizer, glorot_uniform  # noqa
from .attention import MultiHeadSelfAttention, ObsEncoder, mhsa_forward  # noqa
from .actor import (Actor, RoleActorSet, actor_forward, log_prob_and_entropy, to_physical, to_normalized,  # noqa
                    default_arch, ACTION_DIM, LOG_STD_MIN, LOG_STD_MAX)
from .critic import QNet, TwinCritic, ValueNet, twin_q_forward, soft_update  # noqa
from .optimizer import Adam, AdamState, adam_step, grad_clip, global_norm, NonFiniteGradientError  # noqa
from .io import save_run, load_run, load_manifest, save_module, load_module  # noqa
