"""Distance-banded dispatch among direct, upsampled and QBX evaluation.

Every (target, object) pair is classified by the distance d_Gamma from the
target to the object's surface: direct quadrature for d >= d_U1, the i-th
upsampled region for d_Ui >= d >= d_U(i+1) (ending at d_QBX), and QBX for
d <= d_QBX.  At a shared threshold the outer (cheaper) region wins.  The
QBX region must satisfy d_QBX <= 2*gamma*r_QBX with the flat-surface safety
factor gamma = (1 + 1/sqrt(2))/2, which guarantees every point of the region
lies in a ball of convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import distance_to_surface

#: safety factor for the ball-of-convergence coverage of the QBX region
GAMMA = 0.5 * (1.0 + 1.0 / np.sqrt(2.0))


@dataclass
class SpecialQuadParams:
    """Per-object thresholds of the combined special quadrature.

    ``d_upsampled[i]`` is the outer threshold of the region with upsampling
    factor ``kappa_upsampled[i]`` (by default kappa_i = i + 2).  ``n_patches``
    is the wall patch-neighbourhood size N_P, fixed to 9.
    """

    d_upsampled: tuple = ()
    kappa_upsampled: tuple = ()
    d_qbx: float = 0.0
    r_qbx: float = 0.0
    p_qbx: int = 0
    kappa_qbx: int = 0
    n_patches: int = 9

    def __post_init__(self):
        self.d_upsampled = tuple(float(d) for d in self.d_upsampled)
        if not self.kappa_upsampled:
            self.kappa_upsampled = tuple(i + 2 for i in range(len(self.d_upsampled)))
        self.kappa_upsampled = tuple(int(k) for k in self.kappa_upsampled)
        ds = list(self.d_upsampled) + [self.d_qbx]
        if any(a <= b for a, b in zip(ds, ds[1:])):
            raise ValueError(f"thresholds must decrease strictly: {ds}")
        if any(b <= a for a, b in zip(self.kappa_upsampled, self.kappa_upsampled[1:])):
            raise ValueError("upsampling factors must increase")
        if self.d_qbx > 0 and self.d_qbx > 2.0 * GAMMA * self.r_qbx * (1 + 1e-12):
            raise ValueError(
                f"d_qbx={self.d_qbx} violates d_qbx <= 2*gamma*r_qbx="
                f"{2.0 * GAMMA * self.r_qbx}"
            )

    @property
    def n_upsampled(self) -> int:
        return len(self.d_upsampled)

    @property
    def d_direct(self) -> float:
        """Outer threshold of the special quadrature (start of direct region)."""
        return self.d_upsampled[0] if self.d_upsampled else self.d_qbx

    def to_dict(self) -> dict:
        return {
            "d_upsampled": list(self.d_upsampled),
            "kappa_upsampled": list(self.kappa_upsampled),
            "d_qbx": self.d_qbx,
            "r_qbx": self.r_qbx,
            "p_qbx": self.p_qbx,
            "kappa_qbx": self.kappa_qbx,
            "n_patches": self.n_patches,
        }

    @staticmethod
    def from_dict(d: dict) -> "SpecialQuadParams":
        return SpecialQuadParams(
            d_upsampled=tuple(d["d_upsampled"]),
            kappa_upsampled=tuple(d.get("kappa_upsampled") or ()),
            d_qbx=d["d_qbx"],
            r_qbx=d["r_qbx"],
            p_qbx=int(d["p_qbx"]),
            kappa_qbx=int(d["kappa_qbx"]),
            n_patches=int(d.get("n_patches", 9)),
        )


@dataclass(frozen=True)
class Region:
    kind: str  # "direct" | "upsampled" | "qbx"
    index: int = 0  # upsampled region index (0-based)
    kappa: int = 1

    def __str__(self):
        if self.kind == "upsampled":
            return f"upsampled({self.index + 1}, kappa={self.kappa})"
        return self.kind


def classify_distance(d: float, params: SpecialQuadParams) -> Region:
    """Region of a target at distance ``d`` from the surface."""
    if not params.d_upsampled and params.d_qbx <= 0:
        return Region("direct")
    if params.d_upsampled and d >= params.d_upsampled[0]:
        return Region("direct")
    if not params.d_upsampled and d >= params.d_qbx:
        return Region("direct")
    inner = list(params.d_upsampled[1:]) + [params.d_qbx]
    for i, d_next in enumerate(inner):
        if d >= d_next:
            return Region("upsampled", i, params.kappa_upsampled[i])
    return Region("qbx")


def classify(target, obj, params: SpecialQuadParams, pose=None) -> Region:
    """Classify ``target`` against ``obj`` by its distance to the surface."""
    d = distance_to_surface(np.asarray(target, dtype=float), obj, pose=pose)
    return classify_distance(d, params)
