"""Least-squares convergence-rate fits in log-log coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import ValidationError


@dataclass(frozen=True)
class RateFit:
    points: list
    slope: float
    intercept: float
    r_squared: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points], "slope": self.slope,
                "intercept": self.intercept, "r_squared": self.r_squared,
                "notes": list(self.notes)}


def fit_rate(points) -> RateFit:
    """Fit ``log(error) = slope * log(scale) + intercept``.

    Points with a zero error are dropped (and noted); at least three usable
    points are required.
    """
    notes = []
    usable = []
    for scale, err in points:
        scale, err = float(scale), float(err)
        if not (np.isfinite(scale) and np.isfinite(err)) or scale <= 0 or err < 0:
            raise ValidationError(f"invalid rate point ({scale}, {err})")
        if err == 0.0:
            notes.append(f"dropped zero error at scale {scale!r}")
            continue
        usable.append((scale, err))
    if len(usable) < 3:
        raise ValidationError(f"need at least 3 usable points, got {len(usable)}")
    lx = np.log([p[0] for p in usable])
    ly = np.log([p[1] for p in usable])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RateFit(usable, float(slope), float(intercept), r2, notes)
