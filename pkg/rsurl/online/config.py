from rsurl.object2 import SlotsObject


class MappoConfig(SlotsObject):
    __slots__ = ("gamma", "lam",
                 "clip", "c2",
                 "n_epochs", "minibatch_size",
                 "horizon", "n_envs",           # env steps per env and rollout, 2048 transitions per rollout
                 "lr_actor", "lr_critic",
                 "max_grad_norm",
                 "alpha_per", "beta_start", "beta_end", "eps_per",
                 "use_per", "normalize_weights", "standardize_advantages",
                 "use_attention",
                 "hidden", "n_heads", "d_model", "d_k",
                 "stages", "success_threshold", "success_window", "n_episodes",
                 "log_every")

    def __init__(self):
        self.gamma = 0.99
        self.lam = 0.95
        self.clip = 0.2
        self.c2 = 0.01
        self.n_epochs = 4
        self.minibatch_size = 256
        self.horizon = 256
        self.n_envs = 8
        self.lr_actor = 3e-4
        self.lr_critic = 1e-3
        self.max_grad_norm = 0.5

        self.alpha_per = 0.6
        self.beta_start = 0.4  # annealed linearly to beta_end over n_episodes
        self.beta_end = 1.0
        self.eps_per = 1e-4
        self.use_per = True
        self.normalize_weights = True  # divide the IS weights by their batch maximum
        self.standardize_advantages = True

        self.use_attention = True
        self.hidden = (128, 128)
        self.n_heads = 4
        self.d_model = 64
        self.d_k = 16

        self.stages = (1, 2, 3)  # CAVs per curriculum stage
        self.success_threshold = 0.85
        self.success_window = 200  # episodes
        self.n_episodes = 3000  # total over all stages
        self.log_every = 10  # rollouts

    @property
    def rollout_size(self):
        return self.horizon * self.n_envs

    def beta(self, progress):
        """IS exponent after the fraction progress of the training budget."""
        progress = min(max(progress, 0.0), 1.0)
        return self.beta_start + (self.beta_end - self.beta_start) * progress

    def validate(self):
        if not (0 < self.gamma <= 1 and 0 < self.lam <= 1):
            raise ValueError(f"gamma and lam must be in (0, 1], got {self.gamma}, {self.lam}")
        if not 0 < self.clip <= 0.5:
            raise ValueError(f"clip must be in (0, 0.5], got {self.clip}")
        if self.c2 < 0:
            raise ValueError(f"Entropy coefficient c2 must be >= 0, got {self.c2}")
        if self.n_epochs < 1 or self.minibatch_size < 1 or self.horizon < 1 or self.n_envs < 1:
            raise ValueError(f"Invalid n_epochs {self.n_epochs}, minibatch_size {self.minibatch_size}, "
                             f"horizon {self.horizon} or n_envs {self.n_envs}")
        if self.lr_actor < 0 or self.lr_critic < 0:
            raise ValueError(f"Learning rates must be >= 0, got {self.lr_actor}, {self.lr_critic}")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ValueError(f"max_grad_norm must be positive or None, got {self.max_grad_norm}")
        if self.alpha_per < 0 or self.eps_per <= 0:
            raise ValueError(f"Need alpha_per >= 0 and eps_per > 0, got {self.alpha_per}, {self.eps_per}")
        if not (0 <= self.beta_start <= 1 and 0 <= self.beta_end <= 1):
            raise ValueError(f"beta_start and beta_end must be in [0, 1], got {self.beta_start}, {self.beta_end}")
        if not self.stages or any(s not in (1, 2, 3) for s in self.stages) or list(self.stages) != sorted(self.stages):
            raise ValueError(f"stages must be an increasing sequence of CAV counts in [1, 3], got {self.stages}")
        if not 0 < self.success_threshold <= 1 or self.success_window < 1:
            raise ValueError(f"Invalid curriculum threshold {self.success_threshold} or window {self.success_window}")
        if self.n_episodes < 0:
            raise ValueError(f"n_episodes must be >= 0, got {self.n_episodes}")
        return self
