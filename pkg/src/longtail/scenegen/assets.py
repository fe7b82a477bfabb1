"""Parameterized animal and prop models, and the asset library.

Animal models are low-poly articulated meshes assembled from primitive
parts. Each part hangs off a parent part and may bind a pose channel
(a rotation about a fixed pivot), so a pose is just a mapping of channel
names to angles. Clips are keyframe sequences over those channels; a
continuous phase in [0, 1) interpolates cyclically, which is how a clip is
"frozen" at an arbitrary time point.

Models and props serialize to JSON descriptor files so a library directory
is a self-contained, reproducible input to the renderer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import AssetError
from ..rng import derive_rng
from . import mesh as gm

POSE_CHANNELS = ("leg_fl", "leg_fr", "leg_bl", "leg_br", "neck_pitch", "head_yaw", "tail")


@dataclass
class Part:
    name: str
    mesh: gm.Mesh  # authored in model frame (rest pose)
    parent: str | None = None
    pivot: np.ndarray | None = None  # model-frame pivot of the channel rotation
    channel: str | None = None
    axis: str = "x"


@dataclass
class AnimalModel:
    model_id: str
    family: str
    parts: list[Part]
    eye_points: np.ndarray  # (2, 3) model frame, attached to the head chain
    eye_radius: float
    clips: dict[str, list[dict[str, float]]]
    swing_scale: float = 1.0

    def clip_ids(self) -> list[str]:
        return sorted(self.clips)

    def pose_at(self, clip_id: str, phase: float) -> dict[str, float]:
        """Cyclic keyframe interpolation at phase in [0, 1)."""
        if clip_id not in self.clips:
            raise AssetError(f"model {self.model_id} has no clip {clip_id!r}")
        keys = self.clips[clip_id]
        k = (phase % 1.0) * len(keys)
        i0 = int(k) % len(keys)
        i1 = (i0 + 1) % len(keys)
        t = k - int(k)
        channels = set(keys[i0]) | set(keys[i1])
        return {
            ch: (1 - t) * keys[i0].get(ch, 0.0) + t * keys[i1].get(ch, 0.0)
            for ch in channels
        }

    def _chain_transforms(self, pose: dict[str, float]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        transforms: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for part in self.parts:  # parts are stored parent-first
            if part.channel is None or part.pivot is None:
                local = (np.eye(3), np.zeros(3))
            else:
                angle = pose.get(part.channel, 0.0) * (
                    self.swing_scale if part.channel.startswith("leg") else 1.0
                )
                rot = gm.AXES[part.axis](angle)
                local = (rot, part.pivot - rot @ part.pivot)
            if part.parent is None:
                transforms[part.name] = local
            else:
                pr, pt = transforms[part.parent]
                lr, lt = local
                transforms[part.name] = (pr @ lr, pr @ lt + pt)
        return transforms

    def build(self, pose: dict[str, float]) -> tuple[gm.Mesh, np.ndarray]:
        """Posed mesh plus eye points, both in the model frame."""
        transforms = self._chain_transforms(pose)
        pieces = []
        for part in self.parts:
            rot, trans = transforms[part.name]
            m = part.mesh.copy()
            m.verts = m.verts @ rot.T + trans
            pieces.append(m)
        head = next((p.name for p in self.parts if p.name == "head"), None)
        if head is not None:
            rot, trans = transforms[head]
            eyes = self.eye_points @ rot.T + trans
        else:
            eyes = self.eye_points.copy()
        return gm.merge(pieces), eyes


@dataclass
class PropShape:
    shape_id: str
    family: str
    mesh: gm.Mesh
    footprint_radius: float


@dataclass
class PlacementRule:
    family: str
    count_range: tuple[int, int]


# ---------------------------------------------------------------------------
# Animal archetypes
# ---------------------------------------------------------------------------


@dataclass
class FamilyParams:
    name: str
    size: float = 1.0  # overall scale multiplier
    body_len: float = 0.62  # half-length (y)
    body_r: float = 0.26  # vertical radius
    body_w: float = 0.22  # half-width (x)
    leg_len: float = 0.62
    leg_r: float = 0.055
    neck_len: float = 0.34
    neck_angle: float = 48.0  # rest elevation of the neck, degrees
    head_r: float = 0.13
    snout_len: float = 0.14
    ear_size: float = 0.09
    antler_size: float = 0.0
    tail_len: float = 0.12
    color: tuple[float, float, float] = (0.55, 0.42, 0.28)
    belly_light: float = 0.3
    spot_density: float = 0.0
    swing_scale: float = 1.0


FAMILIES: dict[str, FamilyParams] = {
    p.name: p
    for p in [
        # the rare-class archetype sits in the crowded mid-brown band and
        # shares bulk proportions with suid/felid, so 44 examples cannot
        # cover its pose/lighting/variant spread
        FamilyParams(
            "cervid", size=1.05, leg_len=0.72, neck_len=0.40, antler_size=0.30,
            color=(0.56, 0.42, 0.27), tail_len=0.10,
        ),
        FamilyParams(
            "canid", size=0.82, body_len=0.52, body_r=0.21, leg_len=0.50,
            neck_angle=35.0, ear_size=0.13, tail_len=0.36,
            color=(0.46, 0.52, 0.60), belly_light=0.55,
        ),
        FamilyParams(
            "felid", size=0.72, body_len=0.55, body_r=0.19, leg_len=0.42,
            neck_angle=28.0, ear_size=0.07, tail_len=0.42,
            color=(0.78, 0.62, 0.28), spot_density=0.45,
        ),
        FamilyParams(
            "ursid", size=1.3, body_len=0.68, body_r=0.40, body_w=0.35,
            leg_len=0.44, leg_r=0.11, neck_len=0.20, neck_angle=22.0,
            head_r=0.16, ear_size=0.06, tail_len=0.04,
            color=(0.20, 0.14, 0.10), belly_light=0.0, swing_scale=0.6,
        ),
        FamilyParams(
            "leporid", size=0.38, body_len=0.42, body_r=0.26, leg_len=0.24,
            leg_r=0.045, neck_len=0.12, neck_angle=40.0, head_r=0.15,
            ear_size=0.30, tail_len=0.05, color=(0.72, 0.68, 0.60),
            belly_light=0.5, swing_scale=0.5,
        ),
        FamilyParams(
            "suid", size=0.85, body_len=0.60, body_r=0.33, body_w=0.27,
            leg_len=0.32, leg_r=0.06, neck_len=0.13, neck_angle=8.0,
            head_r=0.14, snout_len=0.24, ear_size=0.08, tail_len=0.10,
            color=(0.48, 0.37, 0.34), belly_light=0.1, swing_scale=0.7,
        ),
        FamilyParams(
            "bovid", size=1.4, body_len=0.74, body_r=0.42, body_w=0.36,
            leg_len=0.56, leg_r=0.10, neck_len=0.22, neck_angle=16.0,
            head_r=0.18, antler_size=0.14, ear_size=0.07, tail_len=0.32,
            color=(0.12, 0.12, 0.13), belly_light=0.0, swing_scale=0.6,
        ),
        FamilyParams(
            "mustelid", size=0.52, body_len=0.72, body_r=0.15, body_w=0.13,
            leg_len=0.17, leg_r=0.035, neck_len=0.16, neck_angle=20.0,
            head_r=0.09, ear_size=0.04, tail_len=0.32,
            color=(0.26, 0.22, 0.18), belly_light=0.9, swing_scale=0.8,
        ),
        # visually-similar stand-in for canid, used by the common-class
        # simulation experiment
        FamilyParams(
            "canid_proxy", size=0.92, body_len=0.54, body_r=0.22, leg_len=0.53,
            neck_angle=33.0, ear_size=0.13, tail_len=0.37,
            color=(0.50, 0.55, 0.62), belly_light=0.5,
        ),
    ]
}

_CLIP_TEMPLATE: dict[str, list[dict[str, float]]] = {
    "stand": [{"neck_pitch": -4.0, "tail": 5.0}],
    "walk": [
        {"leg_fl": 26, "leg_fr": -24, "leg_bl": -22, "leg_br": 25, "neck_pitch": -8, "tail": 8},
        {"leg_fl": 2, "leg_fr": -2, "leg_bl": -2, "leg_br": 2, "neck_pitch": -3, "tail": 2},
        {"leg_fl": -24, "leg_fr": 26, "leg_bl": 25, "leg_br": -22, "neck_pitch": -8, "tail": -8},
        {"leg_fl": -2, "leg_fr": 2, "leg_bl": 2, "leg_br": -2, "neck_pitch": -3, "tail": -2},
    ],
    "graze": [
        {"neck_pitch": -66, "leg_fl": 6, "leg_br": 5, "tail": 4},
        {"neck_pitch": -56, "leg_fl": 4, "leg_br": 3, "tail": -4},
    ],
    "alert": [
        {"neck_pitch": 14, "head_yaw": 32, "tail": 12},
        {"neck_pitch": 16, "head_yaw": 10},
        {"neck_pitch": 14, "head_yaw": -30, "tail": -12},
        {"neck_pitch": 16, "head_yaw": -8},
    ],
}


def _shade(m: gm.Mesh, color, rng, jitter=0.12) -> gm.Mesh:
    return gm.tint(m, color, shade_jitter=jitter, rng=rng)


def build_animal(family: str, variant: int, lib_seed: int = 0) -> AnimalModel:
    """Construct one model variant of a family; deterministic in all arguments."""
    if family not in FAMILIES:
        raise AssetError(f"unknown animal family {family!r}")
    p = FAMILIES[family]
    rng = derive_rng(lib_seed, "animal", family, variant)

    def jit(v, rel=0.10):
        return v * (1.0 + rel * (rng.random() * 2 - 1))

    size = jit(p.size, 0.12)
    body_len, body_r, body_w = jit(p.body_len), jit(p.body_r), jit(p.body_w)
    leg_len, leg_r = jit(p.leg_len), jit(p.leg_r, 0.15)
    neck_len, head_r = jit(p.neck_len), jit(p.head_r)
    hue = np.asarray(p.color) * (1.0 + 0.12 * (rng.random(3) - 0.5))
    hue = np.clip(hue, 0.05, 0.95)

    z0 = leg_len + body_r * 0.75
    parts: list[Part] = []

    body = _shade(gm.ellipsoid((body_w, body_len, body_r), (0, 0, z0), 5, 9), hue, rng)
    centroids = body.verts[body.tris].mean(axis=1)
    below = centroids[:, 2] < z0
    body.colors[below] = np.clip(
        body.colors[below] * (1 + p.belly_light) + 0.04, 0, 1
    )
    if p.spot_density > 0:
        spots = rng.random(len(body.tris)) < p.spot_density
        body.colors[spots] *= 0.55
    parts.append(Part("body", body))

    neck_base = np.array([0.0, body_len * 0.78, z0 + body_r * 0.35])
    a = np.radians(p.neck_angle)
    neck_end = neck_base + neck_len * np.array([0.0, np.cos(a), np.sin(a)])
    neck = _shade(gm.frustum(neck_base, neck_end, body_r * 0.42, head_r * 0.72, 5), hue, rng)
    parts.append(Part("neck", neck, parent="body", pivot=neck_base, channel="neck_pitch", axis="x"))

    head_c = neck_end + np.array([0.0, head_r * 0.45, head_r * 0.25])
    head = _shade(
        gm.ellipsoid((head_r * 0.8, head_r * 1.1, head_r * 0.85), head_c, 4, 7), hue, rng
    )
    parts.append(Part("head", head, parent="neck", pivot=neck_end, channel="head_yaw", axis="z"))

    snout_tip = head_c + np.array([0.0, head_r + p.snout_len * jit(1.0), -head_r * 0.25])
    snout = _shade(
        gm.frustum(head_c + np.array([0.0, head_r * 0.6, -head_r * 0.1]), snout_tip,
                   head_r * 0.45, head_r * 0.22, 4),
        hue * 0.85, rng,
    )
    parts.append(Part("snout", snout, parent="head"))

    ear = jit(p.ear_size, 0.2)
    for sx in (-1.0, 1.0):
        base = head_c + np.array([sx * head_r * 0.55, -head_r * 0.25, head_r * 0.6])
        apex = base + np.array([sx * ear * 0.35, -ear * 0.2, ear])
        parts.append(
            Part(f"ear_{'l' if sx < 0 else 'r'}",
                 _shade(gm.cone(base, apex, ear * 0.38, 4), hue * 0.9, rng),
                 parent="head")
        )

    if p.antler_size > 0:
        asz = jit(p.antler_size, 0.2)
        antler_color = np.array([0.62, 0.55, 0.45])
        for sx in (-1.0, 1.0):
            base = head_c + np.array([sx * head_r * 0.4, 0.0, head_r * 0.7])
            mid = base + np.array([sx * asz * 0.5, -asz * 0.25, asz * 0.9])
            tip = mid + np.array([sx * asz * 0.3, asz * 0.35, asz * 0.55])
            main = _shade(gm.frustum(base, mid, 0.025, 0.018, 4), antler_color, rng)
            branch = _shade(gm.frustum(mid, tip, 0.016, 0.008, 3), antler_color, rng)
            parts.append(Part(f"antler_{'l' if sx < 0 else 'r'}", gm.merge([main, branch]),
                              parent="head"))

    for name, sx, sy in (
        ("leg_fl", -1, 1), ("leg_fr", 1, 1), ("leg_bl", -1, -1), ("leg_br", 1, -1),
    ):
        hip = np.array([sx * body_w * 0.55, sy * body_len * 0.62, z0])
        foot = np.array([hip[0], hip[1], 0.02])
        leg = _shade(gm.frustum(hip, foot, leg_r, leg_r * 0.65, 4), hue * 0.92, rng)
        parts.append(Part(name, leg, parent="body", pivot=hip, channel=name, axis="x"))

    tail_base = np.array([0.0, -body_len * 0.95, z0 + body_r * 0.3])
    tail_tip = tail_base + np.array([0.0, -p.tail_len * jit(1.0), -p.tail_len * 0.3])
    tail = _shade(gm.frustum(tail_base, tail_tip, body_r * 0.16, body_r * 0.05, 4), hue, rng)
    parts.append(Part("tail", tail, parent="body", pivot=tail_base, channel="tail", axis="x"))

    eyes = np.array(
        [
            [-head_r * 0.52, head_c[1] + head_r * 0.55, head_c[2] + head_r * 0.28],
            [head_r * 0.52, head_c[1] + head_r * 0.55, head_c[2] + head_r * 0.28],
        ]
    )

    model = AnimalModel(
        model_id=f"{family}-{variant}",
        family=family,
        parts=parts,
        eye_points=eyes,
        eye_radius=0.045 * size,
        clips={k: [dict(f) for f in frames] for k, frames in _CLIP_TEMPLATE.items()},
        swing_scale=p.swing_scale,
    )
    # overall size applied to rest geometry (feet stay on the ground plane)
    for part in model.parts:
        part.mesh.verts *= size
        if part.pivot is not None:
            part.pivot = part.pivot * size
    model.eye_points = model.eye_points * size
    return model


# ---------------------------------------------------------------------------
# Props
# ---------------------------------------------------------------------------

PROP_FAMILIES = ("tree", "rock", "log", "bush", "grass")


def build_prop(family: str, variant: int, lib_seed: int = 0) -> PropShape:
    rng = derive_rng(lib_seed, "prop", family, variant)

    def u(lo, hi):
        return float(lo + (hi - lo) * rng.random())

    if family == "tree":
        trunk_h = u(1.6, 2.6)
        canopy_r = u(0.9, 1.5)
        trunk = gm.tint(gm.cylinder((0, 0, 0), (0, 0, trunk_h), u(0.10, 0.18), 5),
                        (0.34, 0.24, 0.15), 0.15, rng)
        c1 = gm.tint(gm.cone((0, 0, trunk_h * 0.8), (0, 0, trunk_h + canopy_r * 2.2),
                             canopy_r, 8), (0.16, 0.34, 0.14), 0.25, rng)
        c2 = gm.tint(gm.cone((0, 0, trunk_h + canopy_r * 0.9),
                             (0, 0, trunk_h + canopy_r * 2.9), canopy_r * 0.62, 7),
                     (0.18, 0.38, 0.16), 0.25, rng)
        m = gm.merge([trunk, c1, c2])
        radius = canopy_r * 0.75
    elif family == "rock":
        r = u(0.35, 0.75)
        m = gm.tint(gm.blob(r, rng, roughness=0.3), (0.46, 0.45, 0.43), 0.2, rng)
        radius = r
    elif family == "log":
        half = u(0.6, 1.1)
        m = gm.tint(gm.cylinder((0, -half, 0.12), (0, half, 0.12), u(0.10, 0.16), 6),
                    (0.33, 0.25, 0.17), 0.2, rng)
        radius = half * 0.7
    elif family == "bush":
        r = u(0.55, 1.0)
        m = gm.tint(gm.ellipsoid((r, r * u(0.8, 1.1), r * 0.62), (0, 0, r * 0.5), 4, 8),
                    (0.18, 0.32, 0.13), 0.3, rng)
        radius = r * 0.8
    elif family == "grass":
        blades = []
        for _ in range(int(u(3, 6))):
            dx, dy = (rng.random(2) - 0.5) * 0.4
            h = u(0.22, 0.45)
            blades.append(gm.cone((dx, dy, 0), (dx * 1.3, dy * 1.3, h), u(0.04, 0.09), 4))
        m = gm.merge(blades)
        m = gm.tint(m, (0.42, 0.48, 0.20), 0.3, rng)
        radius = 0.3
    else:
        raise AssetError(f"unknown prop family {family!r}")
    return PropShape(shape_id=f"{family}-{variant}", family=family, mesh=m,
                     footprint_radius=radius)


DEFAULT_PLACEMENT = [
    PlacementRule("tree", (3, 7)),
    PlacementRule("rock", (2, 5)),
    PlacementRule("log", (1, 3)),
    PlacementRule("bush", (4, 9)),
    PlacementRule("grass", (8, 16)),
]


# ---------------------------------------------------------------------------
# Library
# ---------------------------------------------------------------------------


@dataclass
class AssetLibrary:
    animals: dict[str, AnimalModel] = field(default_factory=dict)
    props: dict[str, PropShape] = field(default_factory=dict)
    placement: list[PlacementRule] = field(default_factory=list)

    def animal_families(self) -> list[str]:
        return sorted({m.family for m in self.animals.values()})

    def family_models(self, family: str) -> list[str]:
        ids = sorted(m.model_id for m in self.animals.values() if m.family == family)
        if not ids:
            raise AssetError(f"no models for family {family!r}")
        return ids

    def prop_family_shapes(self, family: str) -> list[str]:
        ids = sorted(s.shape_id for s in self.props.values() if s.family == family)
        if not ids:
            raise AssetError(f"no prop shapes for family {family!r}")
        return ids

    def get_animal(self, model_id: str) -> AnimalModel:
        if model_id not in self.animals:
            raise AssetError(f"unknown animal model {model_id!r}")
        return self.animals[model_id]

    def get_prop(self, shape_id: str) -> PropShape:
        if shape_id not in self.props:
            raise AssetError(f"unknown prop shape {shape_id!r}")
        return self.props[shape_id]

    # -- persistence --------------------------------------------------------

    def save(self, root: str | Path) -> None:
        root = Path(root)
        (root / "animals").mkdir(parents=True, exist_ok=True)
        (root / "props").mkdir(parents=True, exist_ok=True)
        for model in self.animals.values():
            doc = {
                "model_id": model.model_id,
                "family": model.family,
                "eye_points": model.eye_points.tolist(),
                "eye_radius": model.eye_radius,
                "swing_scale": model.swing_scale,
                "clips": model.clips,
                "parts": [
                    {
                        "name": part.name,
                        "parent": part.parent,
                        "pivot": None if part.pivot is None else part.pivot.tolist(),
                        "channel": part.channel,
                        "axis": part.axis,
                        "verts": part.mesh.verts.tolist(),
                        "tris": part.mesh.tris.tolist(),
                        "colors": part.mesh.colors.tolist(),
                    }
                    for part in model.parts
                ],
            }
            (root / "animals" / f"{model.model_id}.json").write_text(
                json.dumps(doc, sort_keys=True), encoding="utf-8"
            )
        for shape in self.props.values():
            doc = {
                "shape_id": shape.shape_id,
                "family": shape.family,
                "footprint_radius": shape.footprint_radius,
                "verts": shape.mesh.verts.tolist(),
                "tris": shape.mesh.tris.tolist(),
                "colors": shape.mesh.colors.tolist(),
            }
            (root / "props" / f"{shape.shape_id}.json").write_text(
                json.dumps(doc, sort_keys=True), encoding="utf-8"
            )
        index = {
            "animals": sorted(self.animals),
            "props": sorted(self.props),
            "placement": [
                {"family": r.family, "count_range": list(r.count_range)}
                for r in self.placement
            ],
        }
        (root / "library.json").write_text(json.dumps(index, sort_keys=True, indent=1),
                                           encoding="utf-8")

    @classmethod
    def load(cls, root: str | Path) -> "AssetLibrary":
        root = Path(root)
        index_path = root / "library.json"
        if not index_path.exists():
            raise AssetError(f"no library.json under {root}")
        index = json.loads(index_path.read_text(encoding="utf-8"))
        lib = cls()
        for model_id in index["animals"]:
            doc = json.loads((root / "animals" / f"{model_id}.json").read_text("utf-8"))
            parts = [
                Part(
                    name=d["name"],
                    parent=d["parent"],
                    pivot=None if d["pivot"] is None else np.asarray(d["pivot"], float),
                    channel=d["channel"],
                    axis=d["axis"],
                    mesh=gm.Mesh(
                        np.asarray(d["verts"], float),
                        np.asarray(d["tris"], np.int32),
                        np.asarray(d["colors"], np.float32),
                    ),
                )
                for d in doc["parts"]
            ]
            lib.animals[model_id] = AnimalModel(
                model_id=doc["model_id"],
                family=doc["family"],
                parts=parts,
                eye_points=np.asarray(doc["eye_points"], float),
                eye_radius=float(doc["eye_radius"]),
                clips={k: [dict(f) for f in v] for k, v in doc["clips"].items()},
                swing_scale=float(doc.get("swing_scale", 1.0)),
            )
        for shape_id in index["props"]:
            doc = json.loads((root / "props" / f"{shape_id}.json").read_text("utf-8"))
            lib.props[shape_id] = PropShape(
                shape_id=doc["shape_id"],
                family=doc["family"],
                footprint_radius=float(doc["footprint_radius"]),
                mesh=gm.Mesh(
                    np.asarray(doc["verts"], float),
                    np.asarray(doc["tris"], np.int32),
                    np.asarray(doc["colors"], np.float32),
                ),
            )
        lib.placement = [
            PlacementRule(d["family"], tuple(d["count_range"])) for d in index["placement"]
        ]
        return lib


def builtin_library(
    families: list[str] | None = None,
    n_variants: int = 4,
    prop_variants: int = 3,
    seed: int = 0,
) -> AssetLibrary:
    """The default menagerie: every family in FAMILIES, plus all prop shapes."""
    lib = AssetLibrary(placement=[PlacementRule(r.family, r.count_range) for r in DEFAULT_PLACEMENT])
    for family in families or sorted(FAMILIES):
        for variant in range(n_variants):
            model = build_animal(family, variant, lib_seed=seed)
            lib.animals[model.model_id] = model
    for family in PROP_FAMILIES:
        for variant in range(prop_variants):
            shape = build_prop(family, variant, lib_seed=seed)
            lib.props[shape.shape_id] = shape
    return lib
