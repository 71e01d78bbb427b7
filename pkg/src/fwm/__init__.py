"""Object-centric surrogate world model.

Pipeline: render simulator states into exact-palette frames, segment them
into labeled object masks, use mask centroids as interpretable latent
states, forecast future latents with a pluggable predictor (chat-completions
LLM or deterministic baselines), rebuild frames by per-object pixel
displacement, and score state accuracy and horizon-k safety predictions.
"""

from .envsim import (
    ENV_CARTPOLE,
    ENV_LANDER,
    Action,
    CartPoleAction,
    CartPoleParams,
    CartPoleState,
    ControllerConfig,
    LanderAction,
    LanderParams,
    LanderState,
    SimState,
    control,
    default_params,
    rollout,
    step,
)
from .episode import Episode, load_episode, save_episode
from .metrics import (
    MetricConfig,
    MetricReport,
    angle_from_centroids,
    centroid_distance,
    image_mse,
    report,
    ssim_global,
)
from .predictor import (
    LlmClient,
    LlmEndpointConfig,
    OraclePredictor,
    Prediction,
    PredictionRequest,
    PromptFragments,
    SamplingParams,
    assemble_prompt,
    parse_prediction,
    predict_const_velocity,
    predict_llm,
    predict_persistence,
)
from .reconstruct import Displacement, PredictedTrajectory, closed_loop_rollout, disassemble
from .render import Observation, Palette, cartpole_palette, default_palette, lander_palette, render
from .safety import (
    CartPoleSafety,
    ConfusionStats,
    LanderSafety,
    SafetyVerdict,
    confusion_stats,
    default_safety,
    horizon_verdict,
    phi,
)
from .segment import (
    Centroid,
    LatentState,
    SegmentMask,
    centroid,
    extract_latent,
    filter_static,
    import_masks,
    segment,
)

__version__ = "0.1.0"
