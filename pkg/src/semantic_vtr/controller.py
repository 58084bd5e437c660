"""Funnel-lane heading control from object landmarks.

Each matched object contributes three horizontal landmarks (left edge,
centre, right edge). Image x is mapped to [-1, 1] about the optical centre.
A positive response means "turn right" (toward positive image x); the
command layer converts that to a world-frame yaw change.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_index, check_memory
from .descriptor import Detection, MatchConfig, ReferenceMemory, SceneDescriptor, match_objects
from .relocalization import LocalizationEstimate

SQRT1_2 = 1.0 / math.sqrt(2.0)

MODES = ("search", "align", "advance", "done")


@dataclass(frozen=True)
class ControlConfig:
    gain: float = 12.0
    funnel_window: int = 30
    virtual_window: int = 70
    blend: float = 0.7
    yaw_threshold: float = 0.1
    forward_speed: float = 0.3
    search_yaw_rate: float = 0.5
    # radians of yaw per unit of heading response, applied per align step
    yaw_gain: float = 0.15
    # actuator limit on a single rotate-on-the-spot step
    max_yaw_step: float = 0.25
    dt: float = 0.1
    end_window: int = 3
    end_score: float = 0.5

    def __post_init__(self):
        if self.funnel_window < 1 or self.virtual_window < 1:
            raise ValueError("windows must be >= 1")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend must be in [0, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.yaw_gain <= 0:
            raise ValueError("yaw_gain must be positive")
        if self.yaw_threshold < 0 or self.max_yaw_step <= 0:
            raise ValueError("yaw_threshold must be >= 0 and max_yaw_step > 0")


@dataclass(frozen=True)
class ControlCommand:
    yaw_adjust: float
    advance: bool
    mode: str
    theta_funnel: float = 0.0
    theta_virtual: float = 0.0
    theta_total: float = 0.0


def to_signed(x: float) -> float:
    """Normalized image x in [0, 1] -> [-1, 1] with 0 at the image centre."""
    return 2.0 * x - 1.0


def landmark_response(c: float, d: float, gain: float) -> float:
    """Funnel response for one landmark at ``c`` whose taught position is ``d``."""
    phi = SQRT1_2 * (c - d)
    if c > 0 and c > d:
        return gain * min(c, phi)
    if c < 0 and c < d:
        return gain * max(c, phi)
    return 0.0


def object_landmarks(det: Detection) -> tuple[float, float, float]:
    b = det.box
    return to_signed(b.x_min), to_signed(b.x_center), to_signed(b.x_max)


def object_response(ref: Detection, cur: Detection, gain: float) -> float:
    cs = object_landmarks(cur)
    ds = object_landmarks(ref)
    return sum(landmark_response(c, d, gain) for c, d in zip(cs, ds)) / 3.0


def scene_response(
    ref: SceneDescriptor, cur: SceneDescriptor, match_cfg: MatchConfig, gain: float
) -> float:
    """Mean object response over matched pairs; 0 when nothing matches."""
    pairs = match_objects(ref, cur, match_cfg)
    if not pairs:
        return 0.0
    return sum(object_response(ref[i], cur[j], gain) for i, j in pairs) / len(pairs)


def funnel_window_response(
    cur: SceneDescriptor,
    mem: ReferenceMemory,
    matched_index: int,
    cfg: ControlConfig,
    match_cfg: MatchConfig,
) -> float:
    m = len(mem)
    check_index(matched_index, m, "matched_index")
    last = min(matched_index + cfg.funnel_window, m - 1)
    idx = range(matched_index + 1, last + 1)
    if not idx:
        return 0.0
    return sum(scene_response(mem.keyframes[i], cur, match_cfg, cfg.gain) for i in idx) / len(idx)


def consecutive_responses(mem: ReferenceMemory, match_cfg: MatchConfig, gain: float) -> np.ndarray:
    """Response of keyframe i seen against keyframe i+1 as the target, i = 0..M-2."""
    kfs = mem.keyframes
    return np.array(
        [scene_response(kfs[i + 1], kfs[i], match_cfg, gain) for i in range(len(kfs) - 1)]
    )


def virtual_funnel_response(
    mem: ReferenceMemory,
    matched_index: int,
    cfg: ControlConfig,
    match_cfg: MatchConfig,
    pair_responses: np.ndarray | None = None,
) -> float:
    """Look-ahead response replayed over stored keyframes only.

    Averages consecutive-pair responses for i in [I_m, min(I_m + W_v, M-1) - 1].
    ``pair_responses`` lets callers pass the precomputed per-pair values.
    """
    m = len(mem)
    check_index(matched_index, m, "matched_index")
    stop = min(matched_index + cfg.virtual_window, m - 1)
    if stop <= matched_index:
        return 0.0
    if pair_responses is None:
        kfs = mem.keyframes
        vals = [
            scene_response(kfs[i + 1], kfs[i], match_cfg, cfg.gain)
            for i in range(matched_index, stop)
        ]
        return sum(vals) / len(vals)
    return float(np.mean(pair_responses[matched_index:stop]))


def blend(theta_f: float, theta_v: float, alpha_blend: float) -> float:
    return alpha_blend * theta_f + (1.0 - alpha_blend) * theta_v


def end_reached(
    loc: LocalizationEstimate | None, mem: ReferenceMemory, end_window: int = 3, end_score: float = 0.5
) -> bool:
    if loc is None or not loc.localized:
        return False
    return loc.matched_index >= len(mem) - end_window and loc.score >= end_score


def control_step(
    loc: LocalizationEstimate | None,
    cur: SceneDescriptor,
    mem: ReferenceMemory,
    cfg: ControlConfig,
    match_cfg: MatchConfig | None = None,
    pair_responses: np.ndarray | None = None,
) -> ControlCommand:
    """Decoupled rotate-or-advance decision for one control period."""
    match_cfg = match_cfg or MatchConfig()
    if loc is None or not loc.localized:
        return ControlCommand(cfg.search_yaw_rate * cfg.dt, False, "search")
    if end_reached(loc, mem, cfg.end_window, cfg.end_score):
        return ControlCommand(0.0, False, "done")

    theta_f = funnel_window_response(cur, mem, loc.matched_index, cfg, match_cfg)
    theta_v = virtual_funnel_response(mem, loc.matched_index, cfg, match_cfg, pair_responses)
    theta = blend(theta_f, theta_v, cfg.blend)
    # positive theta turns toward +image x, i.e. clockwise (negative world yaw)
    yaw_adjust = -cfg.yaw_gain * theta
    if abs(theta) >= cfg.yaw_threshold:
        return ControlCommand(yaw_adjust, False, "align", theta_f, theta_v, theta)
    return ControlCommand(yaw_adjust, True, "advance", theta_f, theta_v, theta)


class FunnelLaneController(BaseEstimator):
    """Two-window funnel-lane controller fitted to a reference memory.

    Fitting caches the consecutive-keyframe responses used by the virtual
    look-ahead window, so each control step only evaluates the live window.
    """

    def __init__(
        self,
        gain=12.0,
        funnel_window=30,
        virtual_window=70,
        blend=0.7,
        yaw_threshold=0.1,
        forward_speed=0.3,
        search_yaw_rate=0.5,
        yaw_gain=0.15,
        max_yaw_step=0.25,
        dt=0.1,
        end_window=3,
        end_score=0.5,
        alpha=4.0,
    ):
        self.gain = gain
        self.funnel_window = funnel_window
        self.virtual_window = virtual_window
        self.blend = blend
        self.yaw_threshold = yaw_threshold
        self.forward_speed = forward_speed
        self.search_yaw_rate = search_yaw_rate
        self.yaw_gain = yaw_gain
        self.max_yaw_step = max_yaw_step
        self.dt = dt
        self.end_window = end_window
        self.end_score = end_score
        self.alpha = alpha

    @property
    def control_config(self) -> ControlConfig:
        params = self.get_params()
        params.pop("alpha")
        return ControlConfig(**params)

    @property
    def match_config(self) -> MatchConfig:
        return MatchConfig(alpha=self.alpha)

    def fit(self, memory, y=None):
        memory = check_memory(memory)
        self.control_config_ = self.control_config
        self.memory_ = memory
        self.pair_responses_ = consecutive_responses(memory, self.match_config, self.gain)
        return self

    def predict(self, loc, cur) -> ControlCommand:
        check_is_fitted(self, "pair_responses_")
        return control_step(
            loc, cur, self.memory_, self.control_config_, self.match_config, self.pair_responses_
        )
