"""Dielectric phantoms as predicates on coordinates.

Each evaluator maps coordinate arrays (X, Y, Z) to c.  Closed sets are
tested with a 1e-9 slack so that points on the analytic boundary stay in the
set regardless of rounding in the lattice coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SLACK = 1e-9


def ellipsoid5_set(X, Y, Z):
    return 0.6 * X**2 + Y**2 + (Z + 0.7) ** 2 <= 0.2**2 + SLACK


def ring3_set(X, Y, Z):
    r2 = X**2 + Y**2
    return (r2 >= 0.35**2 - SLACK) & (r2 <= 0.5**2 + SLACK) & (Z >= -0.8 - SLACK) & (Z <= -0.65 + SLACK)


# Letter Y in the plane z = -0.7: a stem and two arms, each a rectangular bar.
LETTER_Y = dict(
    z_center=-0.7, z_half=0.1, half_width=0.08,
    bars=[((0.0, -0.5), (0.0, 0.0)), ((0.0, 0.0), (-0.35, 0.4)), ((0.0, 0.0), (0.35, 0.4))],
)


def _bar(X, Y, p, q, half_width):
    p, q = np.asarray(p), np.asarray(q)
    d = q - p
    length = np.hypot(*d)
    t = ((X - p[0]) * d[0] + (Y - p[1]) * d[1]) / length
    n = (-(X - p[0]) * d[1] + (Y - p[1]) * d[0]) / length
    return (t >= -SLACK) & (t <= length + SLACK) & (np.abs(n) <= half_width + SLACK)


def letterY2_set(X, Y, Z, spec=LETTER_Y):
    inside = np.zeros(np.shape(X), dtype=bool)
    for p, q in spec["bars"]:
        inside |= _bar(X, Y, p, q, spec["half_width"])
    return inside & (np.abs(Z - spec["z_center"]) <= spec["z_half"] + SLACK)


@dataclass
class PhantomSpec:
    id: str
    value: float = 1.0
    params: dict = field(default_factory=dict)

    def __call__(self, X, Y, Z) -> np.ndarray:
        X, Y, Z = np.asarray(X), np.asarray(Y), np.asarray(Z)
        if self.id == "uniform":
            return np.ones(np.broadcast(X, Y, Z).shape)
        mask = self.indicator(X, Y, Z)
        return np.where(mask, self.value, 1.0)

    def indicator(self, X, Y, Z) -> np.ndarray:
        if self.id == "uniform":
            return np.zeros(np.broadcast(X, Y, Z).shape, dtype=bool)
        if self.id == "ellipsoid5":
            return ellipsoid5_set(X, Y, Z)
        if self.id == "ring3":
            return ring3_set(X, Y, Z)
        if self.id == "letterY2":
            return letterY2_set(X, Y, Z, self.params or LETTER_Y)
        if self.id == "custom":
            return _custom_set(X, Y, Z, self.params["shapes"])
        raise ValueError(f"unknown phantom {self.id!r}")

    @property
    def true_max(self) -> float:
        return 1.0 if self.id == "uniform" else float(self.value)

    @property
    def center(self) -> tuple:
        """Nominal target centre (centroid of the analytic set)."""
        return {
            "ellipsoid5": (0.0, 0.0, -0.7),
            "ring3": (0.0, 0.0, -0.725),
        }.get(self.id, tuple(self.params.get("center", (np.nan,) * 3)))


def _custom_set(X, Y, Z, shapes):
    inside = np.zeros(np.broadcast(X, Y, Z).shape, dtype=bool)
    for s in shapes:
        c = np.asarray(s["center"], dtype=float)
        if s["type"] == "ellipsoid":
            a = np.asarray(s["semi_axes"], dtype=float)
            inside |= ((X - c[0]) / a[0]) ** 2 + ((Y - c[1]) / a[1]) ** 2 + ((Z - c[2]) / a[2]) ** 2 <= 1 + SLACK
        elif s["type"] == "box":
            a = np.asarray(s["half_sizes"], dtype=float)
            inside |= ((np.abs(X - c[0]) <= a[0] + SLACK) & (np.abs(Y - c[1]) <= a[1] + SLACK)
                       & (np.abs(Z - c[2]) <= a[2] + SLACK))
        else:
            raise ValueError(f"unknown shape type {s['type']!r}")
    return inside


LIBRARY = {
    "uniform": PhantomSpec("uniform"),
    "ellipsoid5": PhantomSpec("ellipsoid5", 5.0),
    "ring3": PhantomSpec("ring3", 3.0),
    # true maximum 2.0 is inferred from the reported relative error
    "letterY2": PhantomSpec("letterY2", 2.0, dict(LETTER_Y, center=(0.0, 0.0, -0.7))),
}


def get_phantom(name: str, path: str | None = None) -> PhantomSpec:
    """Library phantom by id, or ``custom`` loaded from a JSON description.

    The JSON file holds ``{"value": 2.0, "shapes": [{"type": "ellipsoid",
    "center": [...], "semi_axes": [...]}, {"type": "box", "center": [...],
    "half_sizes": [...]}]}``.
    """
    if name == "custom":
        if path is None:
            raise ValueError("custom phantom needs phantom_file")
        d = json.loads(Path(path).read_text())
        return PhantomSpec("custom", float(d["value"]), {"shapes": d["shapes"], **({"center": d["center"]} if "center" in d else {})})
    try:
        return LIBRARY[name]
    except KeyError:
        raise ValueError(f"unknown phantom {name!r}; choose from {sorted(LIBRARY)} or 'custom'") from None
