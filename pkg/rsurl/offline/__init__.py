from .dataset import (SchemaError, DataError, TrajectoryRecord, Track, Batch, EpisodeRecord, OfflineDataset,  # noqa
                      ingest_trajectories, select_tracks, estimate_actions, relabel, partition_by_role,
                      datasets_summary)
from .expert import ExpertPolicy, generate_corpus, save_corpus  # noqa
from .cql import CqlBcConfig, cql_critic_loss, bc_actor_loss, bc_error, td_target  # noqa
from .train import train_offline, train_role, reward_improvement, METRIC_COLUMNS  # noqa
