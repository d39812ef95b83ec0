"""Local (L3) and remote (L4) confidence oracles and the escalation protocol.

Neither oracle runs a model. Confidence is a closed-form function of capture
quality, so the best sensor setting for a scene is known analytically. The
remote path only ever sees a frame payload and returns a timestamped
prediction; it has no handle on sensor control.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import check_finite_nonneg, check_positive, check_unit_interval
from .sensecam import Frame, laplacian_variance

BACKGROUND = "background"
OBJECT_CLASSES = ("teddy", "racket", "tennis_ball", "ping_pong_ball",
                  "orange", "carton", "water_bottle", "laptop")
LOCAL_LATENCY_MS = 32.0
REMOTE_LATENCY_MS = 2220.0


@dataclass(frozen=True)
class Prediction:
    label: str
    confidence: float
    source: str
    frame_timestamp: float

    def __post_init__(self):
        check_unit_interval(self.confidence, "confidence")
        if self.source not in ("local", "remote"):
            raise ValueError(f"source must be 'local' or 'remote', got {self.source!r}")


@dataclass(frozen=True)
class LocalOracleParams:
    brightness_peak: float = 0.5
    brightness_width: float = 0.5
    sharp_half: float = 150.0
    conf_noise_sd: float = 0.05
    infer_latency_ms: float = LOCAL_LATENCY_MS
    classes: tuple = OBJECT_CLASSES

    def __post_init__(self):
        check_unit_interval(self.brightness_peak, "brightness_peak", open_=True)
        check_positive(self.brightness_width, "brightness_width")
        check_positive(self.sharp_half, "sharp_half")
        check_finite_nonneg(self.conf_noise_sd, "conf_noise_sd")
        check_positive(self.infer_latency_ms, "infer_latency_ms")
        _check_classes(self.classes)


@dataclass(frozen=True)
class RemoteOracleParams:
    capability_boost: float = 0.25
    misalign_prob: float = 0.1
    infer_latency_ms: float = REMOTE_LATENCY_MS
    # (true class, misaligned label) or (true class, misaligned label, probability)
    confusable_pairs: tuple = (("ping_pong_ball", "golf_ball"),)
    classes: tuple = OBJECT_CLASSES
    # share of the payload's class difficulty the remote model also suffers
    difficulty_weight: float = 1.0

    def __post_init__(self):
        check_unit_interval(self.capability_boost, "capability_boost")
        check_unit_interval(self.misalign_prob, "misalign_prob")
        check_positive(self.infer_latency_ms, "infer_latency_ms")
        check_unit_interval(self.difficulty_weight, "difficulty_weight")
        _check_classes(self.classes)
        pairs = []
        for pair in self.confusable_pairs:
            if len(pair) not in (2, 3):
                raise ValueError(f"confusable pair must be (true, wrong[, prob]), got {pair!r}")
            prob = check_unit_interval(pair[2], "pair probability") if len(pair) == 3 else self.misalign_prob
            pairs.append((str(pair[0]), str(pair[1]), prob))
        if any(a == b for a, b, _ in pairs):
            raise ValueError("a misaligned label must differ from the true label")
        object.__setattr__(self, "confusable_pairs", tuple(pairs))

    @property
    def confusions(self) -> dict:
        """true class -> (misaligned label, probability)"""
        return {a: (b, prob) for a, b, prob in self.confusable_pairs}


def _check_classes(classes) -> None:
    if len(classes) < 2 or len(set(classes)) != len(classes) or BACKGROUND in classes:
        raise ValueError("classes must hold >= 2 distinct labels and exclude the background label")


@dataclass(frozen=True)
class EscalationRequest:
    payload: Frame
    budget_ms: float
    origin_timestamp: float

    def __post_init__(self):
        check_positive(self.budget_ms, "budget_ms")


@dataclass(frozen=True)
class EscalationResponse:
    prediction: Prediction
    origin_timestamp: float
    arrival_time: float

    def __post_init__(self):
        if self.arrival_time < self.origin_timestamp:
            raise ValueError("a response cannot arrive before its request was issued")


def tent(x: float, peak: float, width: float) -> float:
    return max(0.0, 1.0 - abs(x - peak) / width)


def quality_score(f: Frame, p: LocalOracleParams, lapvar: Optional[float] = None,
                  difficulty_weight: float = 1.0) -> float:
    """Capture quality in [0, 1]; brightness is judged on the object region."""
    if not f.visible:
        return 0.0
    lv = laplacian_variance(f) if lapvar is None else lapvar
    mean = float(f.roi_pixels().mean())
    q = (tent(mean, p.brightness_peak, p.brightness_width) * (lv / (lv + p.sharp_half))
         * (1.0 - difficulty_weight * f.difficulty))
    return min(1.0, max(0.0, q))


def _draw_label(truth: str, p_correct: float, classes: tuple, u: float, k: int) -> str:
    if u < p_correct:
        return truth
    wrong = [c for c in classes if c != truth]
    return wrong[k % len(wrong)]


def l3_infer(f: Frame, p: LocalOracleParams, rng: np.random.Generator,
             lapvar: Optional[float] = None) -> Prediction:
    # fixed number of draws per call keeps the stream aligned across settings
    noise = rng.normal(0.0, 1.0) * p.conf_noise_sd
    u = rng.random()
    k = int(rng.integers(1 << 30))
    if not f.visible:
        return Prediction(BACKGROUND, min(1.0, abs(noise)), "local", f.timestamp)
    q = quality_score(f, p, lapvar)
    conf = min(1.0, max(0.0, q + noise))
    return Prediction(_draw_label(f.object_id, q, p.classes, u, k), conf, "local", f.timestamp)


def l4_infer(req: EscalationRequest, p: RemoteOracleParams, now: float, rng: np.random.Generator,
             local: Optional[LocalOracleParams] = None) -> EscalationResponse:
    """Remote prediction for ``req``, delivered ``infer_latency_ms`` after ``now``."""
    local = local or LocalOracleParams()
    u_mis, u, k = rng.random(), rng.random(), int(rng.integers(1 << 30))
    f = req.payload
    arrival = now + p.infer_latency_ms
    if not f.visible:
        # background content is filtered to zero confidence
        pred = Prediction(BACKGROUND, 0.0, "remote", f.timestamp)
        return EscalationResponse(pred, req.origin_timestamp, arrival)
    conf = min(1.0, quality_score(f, local, difficulty_weight=p.difficulty_weight) + p.capability_boost)
    misaligned = p.confusions.get(f.object_id)
    if misaligned is not None and u_mis < misaligned[1]:
        label = misaligned[0]
    else:
        label = _draw_label(f.object_id, conf, p.classes, u, k)
    return EscalationResponse(Prediction(label, conf, "remote", f.timestamp), req.origin_timestamp, arrival)


def is_stale(resp: EscalationResponse, scene_epoch_end: float) -> bool:
    # arriving exactly at the horizon still counts
    return resp.arrival_time > scene_epoch_end


def latency_ratio(local: LocalOracleParams = LocalOracleParams(),
                  remote: RemoteOracleParams = RemoteOracleParams()) -> float:
    return remote.infer_latency_ms / local.infer_latency_ms
