"""Action-side toolkit for reasoning driving policies.

Unicycle trajectory encoding, action tokens, a flow-matching action expert,
meta-action and scenario detection, Chain-of-Causation records, rewards,
GRPO arithmetic and evaluation metrics.
"""

from .codec import ActionTokenizer, QuantizerSpec, dequantize, quantize
from .dynamics import (
    ControlFitter,
    ControlSequence,
    EgoState,
    FitConfig,
    Trajectory,
    fit_controls,
    integrate_controls,
)
from .episode import Episode
from .flow import FlowMatchingExpert
from .meta_actions import detect_meta_actions, select_keyframe, tag_proactive_scenarios, tag_reactive_scenarios
from .metrics import ade, alpasim_scores, comfort_fraction, min_ade, run_episode_metrics, token_budget
from .rewards import consistency_reward, total_reward, traj_quality

__version__ = "0.1.0"

__all__ = [
    "ActionTokenizer",
    "QuantizerSpec",
    "dequantize",
    "quantize",
    "ControlFitter",
    "ControlSequence",
    "EgoState",
    "FitConfig",
    "Trajectory",
    "fit_controls",
    "integrate_controls",
    "Episode",
    "FlowMatchingExpert",
    "detect_meta_actions",
    "select_keyframe",
    "tag_proactive_scenarios",
    "tag_reactive_scenarios",
    "ade",
    "alpasim_scores",
    "comfort_fraction",
    "min_ade",
    "run_episode_metrics",
    "token_budget",
    "consistency_reward",
    "total_reward",
    "traj_quality",
]
