from .codec import (V2iStateReport, V2iCommand, encode, decode, DecodeError, TruncatedError, BadMagicError,  # noqa
                    ChecksumError, UnknownTypeError, UNDECLARED)
from .link import LinkConfig, Link, link_deliver  # noqa
from .coordinator import (RsuConfig, RsuState, MissingWeightsError, StaleSnapshotError, assign_role,  # noqa
                          infer_role, tick, mean_action, in_process_policy, SAFE_STOP, MONITOR_COLUMNS)
from .loop import CavClient, run_rsu_episode, monitoring_frame, save_monitoring  # noqa
