"""Scene risk intensity: the scalar the passive-alert threshold is set against."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..fusion import PerceptionProduct


@dataclass(frozen=True)
class RiskConfig:
    w_ttc: float = 0.5
    w_proximity: float = 0.3
    w_violation: float = 0.2
    ttc_horizon_s: float = 5.0
    proximity_range_m: float = 10.0
    # detections this close to the ego are taken to be the ego itself
    ego_exclusion_m: float = 3.0


@dataclass(frozen=True)
class RiskScore:
    value: float
    ttc_term: float
    proximity_term: float
    violation_term: float

    def weighted_components(self, cfg: "RiskConfig" = RiskConfig()) -> tuple[float, float, float]:
        return (
            cfg.w_ttc * self.ttc_term,
            cfg.w_proximity * self.proximity_term,
            cfg.w_violation * self.violation_term,
        )


def compute_risk_intensity(
    product: PerceptionProduct,
    ego_xy: tuple[float, float] | None = None,
    violation_flag: bool = False,
    cfg: RiskConfig = RiskConfig(),
) -> RiskScore:
    """clamp(w_ttc*(1 - minTTC/horizon) + w_prox*(1 - d_min/range) + w_viol*flag).

    minTTC ranges over all predicted collisions (infinite when none); d_min is
    the nearest detection to the ego, skipping detections inside the ego's own
    exclusion radius.
    """
    min_ttc = min((c.ttc_s for c in product.collisions), default=math.inf)
    ttc_term = 0.0 if math.isinf(min_ttc) else max(0.0, 1.0 - min_ttc / cfg.ttc_horizon_s)

    d_min = math.inf
    if ego_xy is not None:
        for det in product.detections:
            d = math.hypot(det.x - ego_xy[0], det.y - ego_xy[1])
            if d > cfg.ego_exclusion_m:
                d_min = min(d_min, d)
    proximity_term = 0.0 if math.isinf(d_min) else max(0.0, 1.0 - d_min / cfg.proximity_range_m)

    violation_term = 1.0 if violation_flag else 0.0
    value = (
        cfg.w_ttc * ttc_term
        + cfg.w_proximity * proximity_term
        + cfg.w_violation * violation_term
    )
    return RiskScore(
        value=min(1.0, max(0.0, value)),
        ttc_term=ttc_term,
        proximity_term=proximity_term,
        violation_term=violation_term,
    )
