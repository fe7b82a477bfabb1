"""Software renderer: z-buffered flat-shaded triangle rasterization.

Two passes per scene: a lit pass that produces the RGB image (Lambertian
sun shading by day; desaturated base, camera spotlight with inverse-square
falloff, and eyeshine discs by night), and an unlit pass over the same
geometry that writes one flat unique value per animal instance into the
instance mask. Boxes come from the mask, so they bound exactly the pixels
the animal owns after occlusion.

Rendering is referentially transparent: a SceneSpec plus a library gives
byte-identical output on every call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..annotations import BBox
from ..errors import RenderError
from . import mesh as gm
from .assets import AssetLibrary
from .scene import CameraSpec, SceneSpec

NEAR_PLANE = 0.15
DAY_AMBIENT = 0.38
NIGHT_AMBIENT = 0.05
FLASH_FALLOFF_DIST = 6.0
EYESHINE_COLOR = np.array([0.99, 0.97, 0.86], np.float32)
_LUMA = np.array([0.299, 0.587, 0.114], np.float32)


@dataclass
class RenderResult:
    rgb: np.ndarray  # (H, W, 3) uint8
    instance_mask: np.ndarray  # (H, W) uint16, 0 = background
    boxes: dict[int, BBox]


@njit(cache=True)
def _raster_kernel(xy, z, colors, inst, width, height, rgb, idx, zbuf):
    for t in range(xy.shape[0]):
        x0, y0 = xy[t, 0, 0], xy[t, 0, 1]
        x1, y1 = xy[t, 1, 0], xy[t, 1, 1]
        x2, y2 = xy[t, 2, 0], xy[t, 2, 1]
        minx = int(np.floor(min(x0, min(x1, x2))))
        maxx = int(np.ceil(max(x0, max(x1, x2))))
        miny = int(np.floor(min(y0, min(y1, y2))))
        maxy = int(np.ceil(max(y0, max(y1, y2))))
        if minx < 0:
            minx = 0
        if miny < 0:
            miny = 0
        if maxx > width - 1:
            maxx = width - 1
        if maxy > height - 1:
            maxy = height - 1
        if minx > maxx or miny > maxy:
            continue
        det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
        if abs(det) < 1e-12:
            continue
        inv = 1.0 / det
        for py in range(miny, maxy + 1):
            fy = py + 0.5
            for px in range(minx, maxx + 1):
                fx = px + 0.5
                w0 = ((y1 - y2) * (fx - x2) + (x2 - x1) * (fy - y2)) * inv
                if w0 < 0.0:
                    continue
                w1 = ((y2 - y0) * (fx - x2) + (x0 - x2) * (fy - y2)) * inv
                if w1 < 0.0:
                    continue
                w2 = 1.0 - w0 - w1
                if w2 < 0.0:
                    continue
                depth = w0 * z[t, 0] + w1 * z[t, 1] + w2 * z[t, 2]
                if depth < zbuf[py, px]:
                    zbuf[py, px] = depth
                    rgb[py, px, 0] = colors[t, 0]
                    rgb[py, px, 1] = colors[t, 1]
                    rgb[py, px, 2] = colors[t, 2]
                    idx[py, px] = inst[t]


def _camera_frame(cam: CameraSpec) -> tuple[np.ndarray, np.ndarray, float]:
    pos = np.asarray(cam.position, float)
    forward = np.asarray(cam.look_at, float) - pos
    norm = np.linalg.norm(forward)
    if norm < 1e-9:
        raise RenderError("camera position equals look-at point")
    forward /= norm
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-9:
        raise RenderError("camera looking straight up or down")
    right /= rnorm
    down = np.cross(forward, right)  # screen y grows downward
    view = np.stack([right, down, forward])
    focal = (cam.height / 2.0) / np.tan(np.radians(cam.fov_y_deg) / 2.0)
    return view, pos, focal


def _project(view_pts: np.ndarray, focal: float, width: int, height: int) -> np.ndarray:
    xy = np.empty((len(view_pts), 2))
    zv = view_pts[:, 2]
    xy[:, 0] = width / 2.0 + focal * view_pts[:, 0] / zv
    xy[:, 1] = height / 2.0 + focal * view_pts[:, 1] / zv
    return xy


def _clip_near(tri_view: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one view-space triangle against z = NEAR_PLANE."""
    inside = tri_view[:, 2] > NEAR_PLANE
    if inside.all():
        return [tri_view]
    if not inside.any():
        return []
    poly = []
    for i in range(3):
        a, b = tri_view[i], tri_view[(i + 1) % 3]
        if inside[i]:
            poly.append(a)
        if inside[i] != inside[(i + 1) % 3]:
            t = (NEAR_PLANE - a[2]) / (b[2] - a[2])
            poly.append(a + t * (b - a))
    out = []
    for i in range(1, len(poly) - 1):
        out.append(np.stack([poly[0], poly[i], poly[i + 1]]))
    return out


def _desaturate(colors: np.ndarray, factor: float) -> np.ndarray:
    gray = colors @ _LUMA
    return gray[:, None] + factor * (colors - gray[:, None])


def _shade(tri_world: np.ndarray, base: np.ndarray, spec: SceneSpec,
           cam_pos: np.ndarray) -> np.ndarray:
    """Flat per-triangle colors for the lit pass."""
    e1 = tri_world[:, 1] - tri_world[:, 0]
    e2 = tri_world[:, 2] - tri_world[:, 0]
    normals = np.cross(e1, e2)
    lengths = np.linalg.norm(normals, axis=1)
    lengths[lengths < 1e-12] = 1.0
    normals /= lengths[:, None]
    light = spec.lighting
    if light.mode == "day":
        az = np.radians(light.sun_azimuth)
        el = np.radians(light.sun_elevation)
        sun = np.array([np.sin(az) * np.cos(el), np.cos(az) * np.cos(el), np.sin(el)])
        lambert = np.abs(normals @ sun)
        shade = DAY_AMBIENT + (1.0 - DAY_AMBIENT) * lambert
        return (base * shade[:, None].astype(np.float32)).astype(np.float32)
    centroids = tri_world.mean(axis=1)
    to_cam = cam_pos[None, :] - centroids
    dist = np.linalg.norm(to_cam, axis=1)
    dist[dist < 1e-9] = 1e-9
    to_cam /= dist[:, None]
    lambert = np.abs((normals * to_cam).sum(axis=1))
    atten = 1.0 / (1.0 + (dist / FLASH_FALLOFF_DIST) ** 2)
    shade = NIGHT_AMBIENT + light.flash_intensity * lambert * atten
    desat = _desaturate(base.astype(np.float64), light.saturation_factor)
    return (desat * shade[:, None]).astype(np.float32)


def _ground_mesh(spec: SceneSpec) -> gm.Mesh:
    terrain = spec.terrain
    e = terrain.extent
    n = 12
    xs = np.linspace(-e, e, n + 1)
    ys = np.linspace(-e, e, n + 1)
    verts = np.array([[x, y, 0.0] for y in ys for x in xs])
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b = a + 1
            c = a + n + 1
            d = c + 1
            tris += [[a, b, d], [a, d, c]]
    m = gm.Mesh(verts, np.array(tris, np.int32), None)
    rng = np.random.default_rng(terrain.detail_seed % (2**32))
    base = np.asarray(terrain.ground_color, np.float32)
    jitter = 1.0 + 0.18 * (rng.random(len(m.tris), dtype=np.float64) - 0.5) * 2
    m.colors = np.clip(base[None, :] * jitter[:, None].astype(np.float32), 0, 1)

    # scattered darker patches give the ground a coarse texture
    patches = []
    n_patches = 14
    for _ in range(n_patches):
        cx, cy = (rng.random(2) * 2 - 1) * e * 0.9
        w, h = 0.8 + rng.random(2) * 2.2
        ang = rng.random() * np.pi
        ca, sa = np.cos(ang), np.sin(ang)
        corners = np.array(
            [[-w, -h], [w, -h], [w, h], [-w, h]]
        ) @ np.array([[ca, -sa], [sa, ca]])
        corners = corners + [cx, cy]
        z = 0.004 + 0.004 * rng.random()
        pm = gm.Mesh(
            np.column_stack([corners, np.full(4, z)]),
            np.array([[0, 1, 2], [0, 2, 3]], np.int32),
            None,
        )
        tone = 0.55 + 0.6 * rng.random()
        pm.colors = np.tile(np.clip(base * tone, 0, 1), (2, 1)).astype(np.float32)
        patches.append(pm)
    return gm.merge([m] + patches)


def _backdrop_mesh(spec: SceneSpec) -> gm.Mesh:
    terrain = spec.terrain
    e = terrain.extent
    h = e * 0.45
    verts = np.array(
        [[-3 * e, e, 0.0], [3 * e, e, 0.0], [3 * e, e, h], [-3 * e, e, h]]
    )
    m = gm.Mesh(verts, np.array([[0, 1, 2], [0, 2, 3]], np.int32), None)
    m.colors = np.tile(np.asarray(terrain.backdrop_color, np.float32), (2, 1))
    return m


def _place(meshverts: np.ndarray, yaw: float, scale: float, position) -> np.ndarray:
    rot = gm.rot_z(yaw)
    out = (meshverts * scale) @ rot.T
    out[:, 0] += position[0]
    out[:, 1] += position[1]
    return out


def _assemble(spec: SceneSpec, library: AssetLibrary, scenery: bool):
    """World-space triangle soup: (verts (T,3,3), colors (T,3), instance (T,))."""
    chunks: list[tuple[np.ndarray, np.ndarray, int]] = []

    if scenery:
        ground = _ground_mesh(spec)
        chunks.append((ground.verts[ground.tris], ground.colors, 0))
        backdrop = _backdrop_mesh(spec)
        chunks.append((backdrop.verts[backdrop.tris], backdrop.colors, 0))
        for prop in spec.props:
            shape = library.get_prop(prop.shape_id)
            tint = np.asarray(spec.terrain.palette.get(shape.family, (1.0, 1.0, 1.0)),
                              np.float32)
            verts = _place(shape.mesh.verts, prop.yaw, prop.scale, prop.position)
            colors = np.clip(shape.mesh.colors * tint[None, :], 0, 1)
            chunks.append((verts[shape.mesh.tris], colors, 0))

    eye_pts = []
    for k, inst in enumerate(spec.animals, start=1):
        model = library.get_animal(inst.model_id)
        pose = model.pose_at(inst.pose_id, inst.pose_phase)
        m, eyes = model.build(pose)
        verts = _place(m.verts, inst.yaw, inst.scale, inst.position)
        eyes_world = _place(eyes, inst.yaw, inst.scale, inst.position)
        chunks.append((verts[m.tris], m.colors, k))
        eye_pts.append((k, eyes_world, model.eye_radius * inst.scale))

    if not chunks:
        return (np.zeros((0, 3, 3)), np.zeros((0, 3), np.float32),
                np.zeros(0, np.uint16), eye_pts)
    tri_world = np.concatenate([c[0] for c in chunks])
    colors = np.concatenate([c[1] for c in chunks]).astype(np.float32)
    inst = np.concatenate(
        [np.full(len(c[0]), c[2], np.uint16) for c in chunks]
    )
    return tri_world, colors, inst, eye_pts


def _sky_color(spec: SceneSpec) -> np.ndarray:
    light = spec.lighting
    if light.mode == "day":
        lift = 0.55 + 0.45 * np.sin(np.radians(light.sun_elevation))
        return np.clip(np.asarray(spec.terrain.sky_color, np.float32) * lift, 0, 1)
    return np.array([0.012, 0.012, 0.02], np.float32)


def _draw_eyeshine(rgb: np.ndarray, idx: np.ndarray, zbuf: np.ndarray,
                   eye_pts, view, cam_pos, focal, width, height) -> None:
    for inst_idx, eyes, radius in eye_pts:
        view_eyes = (eyes - cam_pos) @ view.T
        for e in view_eyes:
            if e[2] <= NEAR_PLANE:
                continue
            px = width / 2.0 + focal * e[0] / e[2]
            py = height / 2.0 + focal * e[1] / e[2]
            ix, iy = int(px), int(py)
            if not (0 <= ix < width and 0 <= iy < height):
                continue
            # eye must belong to a visible surface of its own animal
            if idx[iy, ix] != inst_idx or zbuf[iy, ix] < e[2] - 0.25:
                continue
            r = int(np.clip(round(focal * radius / e[2]), 1, 6))
            y0, y1 = max(iy - r, 0), min(iy + r + 1, height)
            x0, x1 = max(ix - r, 0), min(ix + r + 1, width)
            yy, xx = np.mgrid[y0:y1, x0:x1]
            disc = (yy - py + 0.5) ** 2 + (xx - px + 0.5) ** 2 <= r * r
            region = rgb[y0:y1, x0:x1]
            region[disc] = np.maximum(region[disc], EYESHINE_COLOR)


def render(spec: SceneSpec, library: AssetLibrary, scenery: bool = True) -> RenderResult:
    """Render a scene to an RGB image, instance mask, and per-instance boxes."""
    width, height = spec.camera.width, spec.camera.height
    view, cam_pos, focal = _camera_frame(spec.camera)
    tri_world, base_colors, inst, eye_pts = _assemble(spec, library, scenery)

    if len(tri_world):
        lit_colors = _shade(tri_world, base_colors, spec, cam_pos)
        tri_view = (tri_world.reshape(-1, 3) - cam_pos) @ view.T
        tri_view = tri_view.reshape(-1, 3, 3)

        crossing = (tri_view[:, :, 2] <= NEAR_PLANE).any(axis=1)
        keep = ~crossing
        screen_tris = [tri_view[keep]]
        screen_cols = [lit_colors[keep]]
        screen_inst = [inst[keep]]
        for i in np.nonzero(crossing)[0]:
            for piece in _clip_near(tri_view[i]):
                screen_tris.append(piece[None])
                screen_cols.append(lit_colors[i : i + 1])
                screen_inst.append(inst[i : i + 1])
        tri_view = np.concatenate(screen_tris)
        lit_colors = np.concatenate(screen_cols)
        inst = np.concatenate(screen_inst)

        xy = _project(tri_view.reshape(-1, 3), focal, width, height).reshape(-1, 3, 2)
        z = np.ascontiguousarray(tri_view[:, :, 2])
        xy = np.ascontiguousarray(xy)
    else:
        xy = np.zeros((0, 3, 2))
        z = np.zeros((0, 3))
        lit_colors = np.zeros((0, 3), np.float32)
        inst = np.zeros(0, np.uint16)

    sky = _sky_color(spec)
    rgb = np.empty((height, width, 3), np.float32)
    rgb[:] = sky if scenery else 0.0
    idx = np.zeros((height, width), np.uint16)
    zbuf = np.full((height, width), np.inf)
    _raster_kernel(xy, z, np.ascontiguousarray(lit_colors),
                   np.ascontiguousarray(inst), width, height, rgb, idx, zbuf)

    # second pass: shading off, one flat unique value per animal instance
    n_inst = len(spec.animals)
    flat = np.zeros_like(lit_colors)
    if n_inst:
        flat[:, 0] = inst.astype(np.float32) / n_inst
    unlit = np.zeros((height, width, 3), np.float32)
    idx2 = np.zeros((height, width), np.uint16)
    zbuf2 = np.full((height, width), np.inf)
    _raster_kernel(xy, z, flat, np.ascontiguousarray(inst), width, height,
                   unlit, idx2, zbuf2)

    if spec.lighting.mode == "night" and spec.lighting.flash_intensity > 0:
        _draw_eyeshine(rgb, idx2, zbuf2, eye_pts, view, cam_pos, focal, width, height)

    rgb8 = (np.clip(rgb, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    return RenderResult(rgb=rgb8, instance_mask=idx2, boxes=extract_bboxes(idx2))


def render_instances(spec: SceneSpec, library: AssetLibrary) -> RenderResult:
    """Render only the animals (transparent background analog: mask = support)."""
    return render(spec, library, scenery=False)


def extract_bboxes(instance_mask: np.ndarray) -> dict[int, BBox]:
    """Tight pixel boxes per instance index; indices with no pixels are absent."""
    boxes: dict[int, BBox] = {}
    for k in np.unique(instance_mask):
        if k == 0:
            continue
        ys, xs = np.nonzero(instance_mask == k)
        boxes[int(k)] = BBox(
            x=float(xs.min()),
            y=float(ys.min()),
            w=float(xs.max() - xs.min() + 1),
            h=float(ys.max() - ys.min() + 1),
        )
    return boxes
