"""Object parameters and planar forward kinematics for wall-floor pivoting.

World frame: origin at the floor contact B, x to the right, y up, wall on the
left. The body frame is attached at B with its x-axis along the object's
length; ``theta`` is the body x-axis angle. Contact A is the top corner of the
wall-side end face, P sits on the far end face at body coordinate ``(reach, p_y)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np

G_MAG = 9.81
POSE_TOL = 1e-8


def _mm(v: float) -> float:
    """Metres (or kilograms) to milli-units, rounded so configs round-trip exactly."""
    return round(v * 1e3, 9)


class DomainError(ValueError):
    """Raised for poses or parameters outside their admissible ranges."""


@dataclass(frozen=True)
class RectProfile:
    l: float
    w: float

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0):
            raise DomainError(f"rectangle dimensions must be positive, got {self.l}, {self.w}")

    @property
    def wall_height(self) -> float:
        return self.w

    @property
    def reach(self) -> float:
        return self.l

    @property
    def face_length(self) -> float:
        return self.w

    @property
    def centroid(self) -> tuple[float, float]:
        return 0.5 * self.l, 0.5 * self.w

    def outline(self) -> np.ndarray:
        return np.array([[0.0, 0.0], [self.l, 0.0], [self.l, self.w], [0.0, self.w]])

    def to_dict(self) -> dict:
        return {"type": "rect", "l_mm": _mm(self.l), "w_mm": _mm(self.w)}


@dataclass(frozen=True)
class SteppedProfile:
    """Two bottom-aligned rectangles: (l1, w1) against the wall, (l2, w2) at the far end.

    The wall-side section must be at least as tall as the far one, otherwise
    the shoulder corner crosses the wall line before the object is upright.
    """

    l1: float
    w1: float
    l2: float
    w2: float

    def __post_init__(self):
        if min(self.l1, self.w1, self.l2, self.w2) <= 0:
            raise DomainError("stepped profile dimensions must be positive")
        if self.w2 > self.w1:
            raise DomainError("wall-side section (w1) must be at least as tall as the far section (w2)")

    @property
    def wall_height(self) -> float:
        return self.w1

    @property
    def reach(self) -> float:
        return self.l1 + self.l2

    @property
    def face_length(self) -> float:
        return self.w2

    @property
    def centroid(self) -> tuple[float, float]:
        a1 = self.l1 * self.w1
        a2 = self.l2 * self.w2
        cx = (a1 * 0.5 * self.l1 + a2 * (self.l1 + 0.5 * self.l2)) / (a1 + a2)
        cy = (a1 * 0.5 * self.w1 + a2 * 0.5 * self.w2) / (a1 + a2)
        return cx, cy

    def outline(self) -> np.ndarray:
        L = self.l1 + self.l2
        return np.array([
            [0.0, 0.0], [L, 0.0], [L, self.w2], [self.l1, self.w2], [self.l1, self.w1], [0.0, self.w1],
        ])

    def to_dict(self) -> dict:
        return {"type": "stepped", "l1_mm": _mm(self.l1), "w1_mm": _mm(self.w1),
                "l2_mm": _mm(self.l2), "w2_mm": _mm(self.w2)}


Profile = Union[RectProfile, SteppedProfile]


@dataclass(frozen=True)
class ObjectParams:
    name: str
    m: float
    profile: Profile
    mu_A: float
    mu_B: float
    mu_P: float
    f_u: float
    g_mag: float = G_MAG

    def __post_init__(self):
        if self.m <= 0 or self.g_mag <= 0 or self.f_u <= 0:
            raise DomainError("mass, gravity and force bound must be positive")
        if min(self.mu_A, self.mu_B, self.mu_P) < 0:
            raise DomainError("friction coefficients must be nonnegative")

    @property
    def weight(self) -> float:
        return self.m * self.g_mag

    @property
    def mu(self) -> tuple[float, float, float]:
        return self.mu_A, self.mu_B, self.mu_P

    def with_mass(self, m: float) -> "ObjectParams":
        return ObjectParams(self.name, m, self.profile, self.mu_A, self.mu_B, self.mu_P, self.f_u, self.g_mag)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mass_g": _mm(self.m),
            "profile": self.profile.to_dict(),
            "mu": [self.mu_A, self.mu_B, self.mu_P],
            "f_u_N": self.f_u,
            "g": self.g_mag,
        }


@dataclass(frozen=True)
class PoseState:
    theta: float
    p_y: float


@dataclass(frozen=True)
class ContactGeometry:
    """World-frame contact points at one pose.

    ``R`` maps the P contact frame (inward normal, +p_y tangent) to the world,
    so ``(f_x, f_y) = R @ (f_nP, f_tP)``.
    """

    theta: float
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    C: np.ndarray
    R: np.ndarray = field(repr=False)


def profile_from_dict(d: dict) -> Profile:
    kind = d.get("type")
    if kind == "rect":
        return RectProfile(d["l_mm"] * 1e-3, d["w_mm"] * 1e-3)
    if kind == "stepped":
        return SteppedProfile(d["l1_mm"] * 1e-3, d["w1_mm"] * 1e-3, d["l2_mm"] * 1e-3, d["w2_mm"] * 1e-3)
    raise DomainError(f"unknown profile type {kind!r}")


def object_from_dict(d: dict) -> ObjectParams:
    mu = d["mu"]
    if len(mu) != 3:
        raise DomainError("mu must list [mu_A, mu_B, mu_P]")
    return ObjectParams(
        name=d.get("name", "object"),
        m=d["mass_g"] * 1e-3,
        profile=profile_from_dict(d["profile"]),
        mu_A=float(mu[0]),
        mu_B=float(mu[1]),
        mu_P=float(mu[2]),
        f_u=float(d["f_u_N"]),
        g_mag=float(d.get("g", G_MAG)),
    )


BUNDLED = ("gear1", "gear2", "peg1", "peg2")


def load_object(source: Union[str, Path]) -> ObjectParams:
    """Load an object config from a JSON path or a bundled name (gear1, gear2, peg1, peg2)."""
    if str(source) in BUNDLED:
        text = resources.files("pivotal").joinpath("data", f"{source}.json").read_text()
    else:
        text = Path(source).read_text()
    return object_from_dict(json.loads(text))


def check_pose(obj: ObjectParams, x: PoseState) -> None:
    if not (-POSE_TOL <= x.theta <= 0.5 * math.pi + POSE_TOL):
        raise DomainError(f"theta={x.theta} outside [0, pi/2]")
    if not (-POSE_TOL <= x.p_y <= obj.profile.face_length + POSE_TOL):
        raise DomainError(f"p_y={x.p_y} outside [0, {obj.profile.face_length}]")


def contact_geometry(obj: ObjectParams, x: PoseState) -> ContactGeometry:
    check_pose(obj, x)
    c, s = math.cos(x.theta), math.sin(x.theta)
    prof = obj.profile
    body = np.array([[c, -s], [s, c]])
    cx, cy = prof.centroid
    A = body @ np.array([0.0, prof.wall_height])
    P = body @ np.array([prof.reach, x.p_y])
    C = body @ np.array([cx, cy])
    R = np.array([[-c, -s], [-s, c]])
    return ContactGeometry(theta=x.theta, A=A, B=np.zeros(2), P=P, C=C, R=R)


def com_offset_world(dx: float, dy: float, theta: float) -> float:
    """Horizontal world-frame shift of the CoM for a body-frame offset (dx, dy)."""
    d = math.hypot(dx, dy)
    theta_d = math.atan2(dy, dx)
    return d * math.cos(theta + theta_d)


def body_to_world(points: np.ndarray, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.asarray(points) @ np.array([[c, s], [-s, c]])
