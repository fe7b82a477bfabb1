"""Triangle-mesh primitives and rigid transforms.

World frame: x east, y north, z up. Model frame for animals: +y is the
facing direction, origin under the body center at ground level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Mesh:
    verts: np.ndarray  # (V, 3) float64
    tris: np.ndarray  # (T, 3) int32 indices into verts
    colors: np.ndarray  # (T, 3) float32 base color per triangle

    def copy(self) -> "Mesh":
        return Mesh(self.verts.copy(), self.tris.copy(), self.colors.copy())


def merge(meshes: list[Mesh]) -> Mesh:
    verts, tris, colors = [], [], []
    offset = 0
    for m in meshes:
        verts.append(m.verts)
        tris.append(m.tris + offset)
        colors.append(m.colors)
        offset += len(m.verts)
    if not verts:
        return Mesh(
            np.zeros((0, 3)), np.zeros((0, 3), np.int32), np.zeros((0, 3), np.float32)
        )
    return Mesh(np.vstack(verts), np.vstack(tris).astype(np.int32), np.vstack(colors))


def rot_x(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def rot_z(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


AXES = {"x": rot_x, "y": rot_y, "z": rot_z}


def rotate_about(points: np.ndarray, rot: np.ndarray, pivot: np.ndarray) -> np.ndarray:
    return (points - pivot) @ rot.T + pivot


def box(size, center=(0.0, 0.0, 0.0)) -> Mesh:
    """Axis-aligned box; size = (sx, sy, sz) full extents."""
    sx, sy, sz = np.asarray(size, float) / 2.0
    cx, cy, cz = center
    v = np.array(
        [
            [cx - sx, cy - sy, cz - sz],
            [cx + sx, cy - sy, cz - sz],
            [cx + sx, cy + sy, cz - sz],
            [cx - sx, cy + sy, cz - sz],
            [cx - sx, cy - sy, cz + sz],
            [cx + sx, cy - sy, cz + sz],
            [cx + sx, cy + sy, cz + sz],
            [cx - sx, cy + sy, cz + sz],
        ]
    )
    t = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # front (-y)
            [2, 3, 7], [2, 7, 6],  # back (+y)
            [1, 2, 6], [1, 6, 5],  # right
            [3, 0, 4], [3, 4, 7],  # left
        ],
        np.int32,
    )
    return Mesh(v, t, np.ones((len(t), 3), np.float32))


def frustum(p0, p1, r0: float, r1: float, n: int = 4) -> Mesh:
    """Tapered tube from p0 (radius r0) to p1 (radius r1); square by default."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    axis = p1 - p0
    length = np.linalg.norm(axis)
    if length < 1e-9:
        axis = np.array([0.0, 0.0, 1.0])
    else:
        axis = axis / length
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, ref)
    u /= np.linalg.norm(u)
    w = np.cross(axis, u)
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    ring0 = p0 + r0 * (np.outer(np.cos(ang), u) + np.outer(np.sin(ang), w))
    ring1 = p1 + r1 * (np.outer(np.cos(ang), u) + np.outer(np.sin(ang), w))
    verts = np.vstack([ring0, ring1, p0[None], p1[None]])
    tris = []
    for i in range(n):
        j = (i + 1) % n
        tris += [[i, j, n + i], [j, n + j, n + i]]
        tris += [[2 * n, j, i], [2 * n + 1, n + i, n + j]]  # caps
    t = np.array(tris, np.int32)
    return Mesh(verts, t, np.ones((len(t), 3), np.float32))


def cylinder(p0, p1, radius: float, n: int = 6) -> Mesh:
    return frustum(p0, p1, radius, radius, n=n)


def cone(base_center, apex, radius: float, n: int = 7) -> Mesh:
    base_center = np.asarray(base_center, float)
    apex = np.asarray(apex, float)
    axis = apex - base_center
    length = np.linalg.norm(axis)
    axis = axis / length if length > 1e-9 else np.array([0.0, 0.0, 1.0])
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, ref)
    u /= np.linalg.norm(u)
    w = np.cross(axis, u)
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    ring = base_center + radius * (np.outer(np.cos(ang), u) + np.outer(np.sin(ang), w))
    verts = np.vstack([ring, apex[None], base_center[None]])
    tris = []
    for i in range(n):
        j = (i + 1) % n
        tris += [[i, j, n], [n + 1, j, i]]
    t = np.array(tris, np.int32)
    return Mesh(verts, t, np.ones((len(t), 3), np.float32))


def ellipsoid(radii, center=(0.0, 0.0, 0.0), n_lat: int = 5, n_lon: int = 8) -> Mesh:
    rx, ry, rz = radii
    cx, cy, cz = center
    verts = [np.array([cx, cy, cz + rz])]
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat
        for j in range(n_lon):
            phi = 2 * np.pi * j / n_lon
            verts.append(
                np.array(
                    [
                        cx + rx * np.sin(theta) * np.cos(phi),
                        cy + ry * np.sin(theta) * np.sin(phi),
                        cz + rz * np.cos(theta),
                    ]
                )
            )
    verts.append(np.array([cx, cy, cz - rz]))
    v = np.vstack(verts)
    tris = []
    for j in range(n_lon):
        tris.append([0, 1 + j, 1 + (j + 1) % n_lon])
    for i in range(n_lat - 2):
        r0 = 1 + i * n_lon
        r1 = 1 + (i + 1) * n_lon
        for j in range(n_lon):
            j1 = (j + 1) % n_lon
            tris += [[r0 + j, r1 + j, r1 + j1], [r0 + j, r1 + j1, r0 + j1]]
    last = len(v) - 1
    r0 = 1 + (n_lat - 2) * n_lon
    for j in range(n_lon):
        tris.append([last, r0 + (j + 1) % n_lon, r0 + j])
    t = np.array(tris, np.int32)
    return Mesh(v, t, np.ones((len(t), 3), np.float32))


def blob(radius: float, rng: np.random.Generator, roughness: float = 0.25,
         squash: float = 0.6, n_lat: int = 4, n_lon: int = 7) -> Mesh:
    """Rock-like deformed ellipsoid; deterministic for the passed generator."""
    m = ellipsoid((radius, radius, radius * squash), n_lat=n_lat, n_lon=n_lon)
    noise = 1.0 + roughness * (rng.random(len(m.verts)) - 0.5) * 2.0
    m.verts = m.verts * noise[:, None]
    m.verts[:, 2] = np.maximum(m.verts[:, 2], 0.0)
    return m


def tint(mesh: Mesh, color, shade_jitter: float = 0.0,
         rng: np.random.Generator | None = None) -> Mesh:
    """Assign a flat base color, optionally jittered per triangle."""
    c = np.asarray(color, np.float32)
    mesh.colors = np.tile(c, (len(mesh.tris), 1))
    if shade_jitter and rng is not None:
        factors = 1.0 + shade_jitter * (rng.random(len(mesh.tris)) - 0.5) * 2.0
        mesh.colors = (mesh.colors * factors[:, None].astype(np.float32)).clip(0, 1)
    return mesh
