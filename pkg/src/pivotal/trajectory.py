from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mechanics import ContactForces, SlipSlacks
from .objects import ContactGeometry, ObjectParams, PoseState, contact_geometry, object_from_dict

FORCE_FIELDS = ("f_nP", "f_tP", "f_nA", "f_tA", "f_nB", "f_tB")
SLIP_FIELDS = ("pdot_A_plus", "pdot_A_minus", "pdot_B_plus", "pdot_B_minus", "pdot_y_plus", "pdot_y_minus")


@dataclass
class Trajectory:
    """States at k = 0..N, controls, contact forces and slip slacks at k = 0..N-1."""

    theta: np.ndarray
    p_y: np.ndarray
    f_nP: np.ndarray
    f_tP: np.ndarray
    f_nA: np.ndarray
    f_tA: np.ndarray
    f_nB: np.ndarray
    f_tB: np.ndarray
    slip: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("theta", "p_y") + FORCE_FIELDS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.f_nP)
        if len(self.theta) != n + 1 or len(self.p_y) != n + 1:
            raise ValueError("trajectory needs N+1 states for N controls")
        for name in FORCE_FIELDS:
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have length {n}")
        self.slip = {k: np.asarray(self.slip.get(k, np.zeros(n)), dtype=float) for k in SLIP_FIELDS}

    @property
    def N(self) -> int:
        return len(self.f_nP)

    @property
    def controls(self) -> np.ndarray:
        return np.column_stack([self.f_nP, self.f_tP])

    @property
    def mode(self) -> str:
        return self.metadata.get("mode", "nominal")

    def pose(self, k: int) -> PoseState:
        return PoseState(float(self.theta[k]), float(self.p_y[k]))

    def geometry(self, obj: ObjectParams, k: int) -> ContactGeometry:
        return contact_geometry(obj, self.pose(k))

    def forces(self, geom: ContactGeometry, k: int) -> ContactForces:
        return ContactForces.from_body(geom, self.f_nA[k], self.f_tA[k], self.f_nB[k], self.f_tB[k],
                                       self.f_nP[k], self.f_tP[k])

    def slacks(self, k: int) -> SlipSlacks:
        return SlipSlacks(**{name: float(self.slip[name][k]) for name in SLIP_FIELDS})

    def object_params(self) -> ObjectParams:
        if "object" not in self.metadata:
            raise KeyError("trajectory metadata carries no object config")
        return object_from_dict(self.metadata["object"])

    def to_dict(self) -> dict:
        d = {name: getattr(self, name).tolist() for name in ("theta", "p_y") + FORCE_FIELDS}
        d["slip"] = {k: v.tolist() for k, v in self.slip.items()}
        d["metadata"] = self.metadata
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        fields = {name: d[name] for name in ("theta", "p_y") + FORCE_FIELDS}
        return cls(**fields, slip=d.get("slip", {}), metadata=d.get("metadata", {}))

    def dumps(self, meta: bool = True) -> str:
        """JSON text; ``meta=False`` drops run-dependent fields such as wall times."""
        d = self.to_dict()
        if not meta:
            d["metadata"] = _strip(d["metadata"])
        return json.dumps(d, indent=1, sort_keys=True, default=_jsonable) + "\n"

    def save(self, path, meta: bool = True) -> None:
        Path(path).write_text(self.dumps(meta))

    @classmethod
    def load(cls, path) -> "Trajectory":
        d = json.loads(Path(path).read_text())
        if not isinstance(d, dict) or not d.get("f_nP"):
            raise ValueError(f"{path}: empty trajectory")
        return cls.from_dict(d)


VOLATILE_KEYS = ("wall_time_s", "created")


def _strip(d):
    if isinstance(d, dict):
        return {k: _strip(v) for k, v in d.items() if k not in VOLATILE_KEYS}
    if isinstance(d, list):
        return [_strip(v) for v in d]
    return d


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v)}")
