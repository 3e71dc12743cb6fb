from .evaluate import (EvalSummary, evaluate, evaluate_episode, summarize, running_frame, episodes_frame,  # noqa
                       save_evaluation, load_summary, check_compatible, scripted_policy, POLICIES)
from .curves import rolling_mean, smooth_frame, episodes_to_threshold, ablation_summary, emit_curves, WINDOW  # noqa
from .cli import (Experiment, RunConfig, load_scenario, cmd_gen_data, cmd_train_offline, cmd_train_online,  # noqa
                  cmd_evaluate, cmd_generalize, cmd_emit_curves, main)
