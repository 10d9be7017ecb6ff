"""Pipeline configuration: one JSON file describing body, garments, pose,
solver settings, and loss weights.

All relative paths inside a config resolve against the directory containing
the config file. Referenced files are checked for existence at load time so a
bad path fails before any output is produced. Unknown keys are rejected to
catch typos early.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .energy import LossWeights, MaterialParams, merge_material
from .errors import ConfigError, ValidationError
from .rig import Pose, RiggedBody, ToyBodyConfig, generate_toy_body, load_body
from .solver import SolverConfig

_TOP_KEYS = {
    "body", "toy_body", "garments", "shape", "pose", "pose_file",
    "material", "solver", "weights", "out_dir",
}
_GARMENT_KEYS = {"name", "mesh", "layer", "material", "held"}


@dataclass
class GarmentSpec:
    name: str
    mesh_path: str
    layer: int
    material_overrides: dict = field(default_factory=dict)
    held: bool | None = None


@dataclass
class PipelineConfig:
    """Validated, path-resolved pipeline description."""

    base_dir: str
    body_path: str | None
    toy_body: dict
    garments: list[GarmentSpec]
    shape: np.ndarray
    pose_rotations: np.ndarray | None
    pose_translation: np.ndarray
    material: MaterialParams
    solver: SolverConfig
    weights: LossWeights
    out_dir: str

    def load_rigged_body(self) -> RiggedBody:
        if self.body_path is not None:
            return load_body(self.body_path)
        return generate_toy_body(ToyBodyConfig(**self.toy_body))

    def pose_for(self, body: RiggedBody) -> Pose:
        j = body.num_joints
        if self.pose_rotations is None:
            return Pose(np.zeros((j, 3)), self.pose_translation)
        if self.pose_rotations.shape != (j, 3):
            raise ConfigError(
                f"pose has {self.pose_rotations.shape[0]} joints, body has {j}"
            )
        return Pose(self.pose_rotations, self.pose_translation)

    def garment_material(self, spec: GarmentSpec) -> MaterialParams:
        try:
            return merge_material(self.material, spec.material_overrides)
        except ValidationError as exc:
            raise ConfigError(f"garment {spec.name}: {exc}") from None


def _build_dataclass(cls, payload: dict, what: str):
    valid = set(cls.__dataclass_fields__)
    bad = sorted(set(payload) - valid)
    if bad:
        raise ConfigError(f"unknown {what} keys: {bad}")
    try:
        obj = cls(**payload)
        obj.validate()
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"bad {what} settings: {exc}") from None
    return obj


def _load_pose_payload(payload: dict, num_hint: str) -> tuple[np.ndarray | None, np.ndarray]:
    if not isinstance(payload, dict):
        raise ConfigError(f"{num_hint} must be an object with rotations/root_translation")
    extra = set(payload) - {"rotations", "root_translation"}
    if extra:
        raise ConfigError(f"unknown pose keys: {sorted(extra)}")
    rot = payload.get("rotations")
    rotations = None if rot is None else np.asarray(rot, dtype=np.float64)
    if rotations is not None and (rotations.ndim != 2 or rotations.shape[1] != 3):
        raise ConfigError(f"pose rotations must be (J, 3), got {rotations.shape}")
    translation = np.asarray(payload.get("root_translation", (0.0, 0.0, 0.0)), dtype=np.float64)
    if translation.shape != (3,):
        raise ConfigError("root_translation must have 3 components")
    return rotations, translation


def load_config(path: str) -> PipelineConfig:
    """Parse and validate a pipeline config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    extra = set(payload) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    body_path = payload.get("body")
    toy_body = payload.get("toy_body", {})
    if body_path is not None and payload.get("toy_body") is not None:
        raise ConfigError("give either a body file or toy_body parameters, not both")
    if body_path is not None:
        body_path = resolve(str(body_path))
        if not os.path.isfile(body_path):
            raise ConfigError(f"body file does not exist: {body_path}")
    if toy_body:
        bad = sorted(set(toy_body) - set(ToyBodyConfig.__dataclass_fields__))
        if bad:
            raise ConfigError(f"unknown toy_body keys: {bad}")

    raw_garments = payload.get("garments", [])
    if not isinstance(raw_garments, list) or not raw_garments:
        raise ConfigError("config needs a non-empty garments list")
    garments: list[GarmentSpec] = []
    for idx, entry in enumerate(raw_garments):
        if not isinstance(entry, dict):
            raise ConfigError(f"garment entry {idx} must be an object")
        extra = set(entry) - _GARMENT_KEYS
        if extra:
            raise ConfigError(f"garment entry {idx}: unknown keys {sorted(extra)}")
        if "mesh" not in entry:
            raise ConfigError(f"garment entry {idx} is missing a mesh path")
        mesh_path = resolve(str(entry["mesh"]))
        if not os.path.isfile(mesh_path):
            raise ConfigError(f"garment mesh does not exist: {mesh_path}")
        name = str(entry.get("name", os.path.splitext(os.path.basename(mesh_path))[0]))
        layer = entry.get("layer", idx + 1)
        if not isinstance(layer, int):
            raise ConfigError(f"garment {name}: layer must be an integer")
        held = entry.get("held")
        if held is not None and not isinstance(held, bool):
            raise ConfigError(f"garment {name}: held must be true, false, or omitted")
        overrides = entry.get("material", {})
        if not isinstance(overrides, dict):
            raise ConfigError(f"garment {name}: material overrides must be an object")
        garments.append(GarmentSpec(name, mesh_path, layer, overrides, held))
    layers = sorted(g.layer for g in garments)
    if layers != list(range(1, len(garments) + 1)):
        raise ConfigError(f"layer indices must be 1..{len(garments)} without gaps, got {layers}")
    names = [g.name for g in garments]
    if len(set(names)) != len(names):
        raise ConfigError("garment names must be unique")
    garments.sort(key=lambda g: g.layer)

    shape = np.asarray(payload.get("shape", []), dtype=np.float64)
    if shape.ndim != 1:
        raise ConfigError("shape must be a flat list of coefficients")

    if payload.get("pose") is not None and payload.get("pose_file") is not None:
        raise ConfigError("give either pose or pose_file, not both")
    if payload.get("pose_file") is not None:
        pose_path = resolve(str(payload["pose_file"]))
        if not os.path.isfile(pose_path):
            raise ConfigError(f"pose file does not exist: {pose_path}")
        try:
            with open(pose_path, encoding="utf-8") as fh:
                pose_payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read pose file {pose_path}: {exc}") from None
        rotations, translation = _load_pose_payload(pose_payload, "pose file")
    elif payload.get("pose") is not None:
        rotations, translation = _load_pose_payload(payload["pose"], "pose")
    else:
        rotations, translation = None, np.zeros(3)

    try:
        material = merge_material(MaterialParams(), payload.get("material", {}))
    except ValidationError as exc:
        raise ConfigError(f"bad material settings: {exc}") from None
    solver = _build_dataclass(SolverConfig, payload.get("solver", {}), "solver")
    weights = _build_dataclass(LossWeights, payload.get("weights", {}), "loss weight")
    out_dir = resolve(str(payload.get("out_dir", "out")))

    return PipelineConfig(
        base_dir=base,
        body_path=body_path,
        toy_body=dict(toy_body),
        garments=garments,
        shape=shape,
        pose_rotations=rotations,
        pose_translation=translation,
        material=material,
        solver=solver,
        weights=weights,
        out_dir=out_dir,
    )
