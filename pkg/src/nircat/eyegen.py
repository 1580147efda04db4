"""Procedural NIR-style eye image generator with exact ground-truth masks.

Renders a textured iris annulus around a pupil disk on a bright sclera,
with three condition-dependent pupil appearances (clean dark, bright
cloudy, dark with residual haze plus bright puncture arcs on the
annulus), an eyelid occluder and optional specular highlights.

All geometry is circle-based on purpose: the ground-truth mask is
"inside the iris circle and not inside the eyelid circle", which a test
can re-derive with a brute-force per-pixel point-in-circle check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .samples import (
    EyeSample,
    T1_HEALTHY,
    T1_UNHEALTHY,
    T2_OTHERS,
    T2_POST,
    T2_PRE,
)

CONDITIONS = ("healthy", "pre_cataract", "post_cataract")

# pupil fraction grows toward this ceiling as dilation_level -> 1
_MAX_DILATED_FRACTION = 0.85


class EyeGeometryError(ValueError):
    """Requested geometry cannot produce a valid eye (e.g. pupil not inside iris)."""


@dataclass
class EyeGenParams:
    """Knobs for one synthetic eye.

    canvas: (height, width) in pixels.
    pupil_radius_fraction: pupil radius as a fraction of the iris radius, in (0, 1).
    eyelid_droop: 0 = lid fully retracted (no occlusion), 1 = maximal occlusion.
    dilation_level: interpolates the pupil fraction toward 0.85.
    """

    canvas: tuple[int, int] = (240, 320)
    pupil_radius_fraction: float = 0.4
    iris_radius_px: int = 70
    condition: str = "healthy"
    eyelid_droop: float = 0.0
    specular_count: int = 0
    dilation_level: float = 0.0
    rng_seed: int = 0

    def validate(self) -> None:
        h, w = self.canvas
        if h < 32 or w < 32:
            raise EyeGeometryError(f"canvas too small: {self.canvas}")
        if not 0.0 < self.pupil_radius_fraction < 1.0:
            raise EyeGeometryError(
                f"pupil_radius_fraction must be in (0,1), got {self.pupil_radius_fraction}"
            )
        if self.iris_radius_px < 4:
            raise EyeGeometryError(f"iris_radius_px too small: {self.iris_radius_px}")
        if self.iris_radius_px * 2 >= min(h, w):
            raise EyeGeometryError(
                f"iris radius {self.iris_radius_px} does not fit canvas {self.canvas}"
            )
        if self.condition not in CONDITIONS:
            raise EyeGeometryError(f"unknown condition: {self.condition!r}")
        if not 0.0 <= self.eyelid_droop <= 1.0:
            raise EyeGeometryError(f"eyelid_droop must be in [0,1], got {self.eyelid_droop}")
        if not 0.0 <= self.dilation_level <= 1.0:
            raise EyeGeometryError(
                f"dilation_level must be in [0,1], got {self.dilation_level}"
            )
        if self.specular_count < 0:
            raise EyeGeometryError(f"specular_count must be >= 0, got {self.specular_count}")
        if self.effective_pupil_fraction() >= 0.95:
            raise EyeGeometryError("pupil circle not strictly inside iris circle")

    def effective_pupil_fraction(self) -> float:
        f = self.pupil_radius_fraction
        return f + (_MAX_DILATED_FRACTION - f) * self.dilation_level


@dataclass
class EyeGeometry:
    """Realized circle geometry for one sample, in pixel coordinates."""

    center_y: float
    center_x: float
    iris_radius: float
    pupil_radius: float
    lid_center_y: float
    lid_center_x: float
    lid_radius: float

    def iris_hit(self, y: float, x: float) -> bool:
        return (y - self.center_y) ** 2 + (x - self.center_x) ** 2 <= self.iris_radius**2

    def lid_hit(self, y: float, x: float) -> bool:
        return (y - self.lid_center_y) ** 2 + (x - self.lid_center_x) ** 2 <= self.lid_radius**2


def eye_geometry(params: EyeGenParams) -> EyeGeometry:
    """Derive the circle geometry for ``params`` (first draws of the sample rng).

    Deterministic for a given params+seed; ``generate_eye`` uses the same
    derivation, so tests can rasterize an independent reference mask.
    """
    params.validate()
    rng = np.random.default_rng(params.rng_seed)
    h, w = params.canvas
    r = float(params.iris_radius_px)

    # jitter the center but keep the iris circle fully inside the canvas
    max_jy = min(0.05 * h, (h - 1) / 2 - r - 1)
    max_jx = min(0.05 * w, (w - 1) / 2 - r - 1)
    cy = (h - 1) / 2 + rng.uniform(-max_jy, max_jy)
    cx = (w - 1) / 2 + rng.uniform(-max_jx, max_jx)

    pupil_r = r * params.effective_pupil_fraction()

    # Eyelid occluder: a large circle descending from above.  At droop 0 the
    # circles are disjoint (gap 0.05*r), so the mask equals the full iris disk.
    lid_r = 2.0 * r
    offset = (3.05 - 1.55 * params.eyelid_droop) * r
    lid_cy = cy - offset
    lid_cx = cx

    return EyeGeometry(cy, cx, r, pupil_r, lid_cy, lid_cx, lid_r)


def _condition_pupil(rng: np.random.Generator, condition: str, shape: tuple[int, int]):
    """Per-condition pupil fill: (base intensity, texture field)."""
    if condition == "pre_cataract":
        base = rng.uniform(110.0, 210.0)
        cloud = _smooth_noise(rng, shape, scale=10) * 35.0
        return base, cloud
    if condition == "post_cataract":
        base = rng.uniform(50.0, 95.0)
        haze = _smooth_noise(rng, shape, scale=8) * 18.0
        return base, haze
    base = rng.uniform(25.0, 40.0)
    return base, rng.normal(0.0, 3.0, shape)


def _smooth_noise(rng: np.random.Generator, shape: tuple[int, int], scale: int) -> np.ndarray:
    """Blotchy noise in [-1, 1]: coarse normal field upsampled bilinearly."""
    h, w = shape
    gh, gw = max(2, h // scale), max(2, w // scale)
    coarse = rng.normal(0.0, 1.0, (gh, gw))
    yi = np.linspace(0, gh - 1, h)
    xi = np.linspace(0, gw - 1, w)
    y0 = np.floor(yi).astype(int).clip(0, gh - 2)
    x0 = np.floor(xi).astype(int).clip(0, gw - 2)
    fy = (yi - y0)[:, None]
    fx = (xi - x0)[None, :]
    a = coarse[np.ix_(y0, x0)]
    b = coarse[np.ix_(y0, x0 + 1)]
    c = coarse[np.ix_(y0 + 1, x0)]
    d = coarse[np.ix_(y0 + 1, x0 + 1)]
    field = a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx
    m = np.abs(field).max()
    return field / m if m > 0 else field


def generate_eye(params: EyeGenParams) -> EyeSample:
    """Render one synthetic eye; bit-identical for identical params and seed."""
    geom = eye_geometry(params)
    rng = np.random.default_rng(params.rng_seed)
    # consume the same leading draws as eye_geometry so downstream draws are
    # independent of how the geometry was obtained
    rng.uniform(size=2)

    h, w = params.canvas
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    d2_iris = (yy - geom.center_y) ** 2 + (xx - geom.center_x) ** 2
    in_iris = d2_iris <= geom.iris_radius**2
    in_pupil = d2_iris <= geom.pupil_radius**2
    annulus = in_iris & ~in_pupil
    d2_lid = (yy - geom.lid_center_y) ** 2 + (xx - geom.lid_center_x) ** 2
    in_lid = d2_lid <= geom.lid_radius**2

    img = np.empty((h, w), dtype=np.float64)

    # sclera: bright with an illumination gradient and mild noise
    grad_dir = rng.uniform(0.0, 2 * np.pi)
    grad = (yy / h) * np.sin(grad_dir) + (xx / w) * np.cos(grad_dir)
    img[:] = 205.0 + 22.0 * (grad - grad.mean()) + rng.normal(0.0, 4.0, (h, w))

    # iris annulus: mid-gray with radial streak texture
    theta = np.arctan2(yy - geom.center_y, xx - geom.center_x)
    streaks = rng.integers(8, 15)
    phase = rng.uniform(0.0, 2 * np.pi)
    iris_tex = 104.0 + 18.0 * np.sin(streaks * theta + phase)
    iris_tex = iris_tex + 12.0 * _smooth_noise(rng, (h, w), scale=6)
    img[annulus] = iris_tex[annulus]

    # pupil fill per condition
    base, tex = _condition_pupil(rng, params.condition, (h, w))
    img[in_pupil] = base + np.asarray(tex)[in_pupil]

    # puncture arcs after cataract surgery: short bright curves on the annulus
    if params.condition == "post_cataract":
        n_arcs = int(rng.integers(1, 4))
        rr = np.sqrt(d2_iris)
        for _ in range(n_arcs):
            a0 = rng.uniform(0.0, 2 * np.pi)
            alen = rng.uniform(0.25, 0.55)
            arc_r = geom.iris_radius * rng.uniform(0.62, 0.85)
            ang = np.mod(theta - a0, 2 * np.pi)
            on_arc = (ang < alen) & (np.abs(rr - arc_r) < 2.0) & annulus
            img[on_arc] = rng.uniform(190.0, 225.0)

    # eyelid: skin-toned occluder with a darker lash line at its rim
    if in_lid.any():
        skin = 172.0 + 10.0 * _smooth_noise(rng, (h, w), scale=12)
        img[in_lid] = skin[in_lid]
        rim = in_lid & (d2_lid >= (geom.lid_radius - 2.5) ** 2)
        img[rim] -= 55.0

    # specular highlights inside the visible eye region (do not affect the mask)
    visible = in_iris & ~in_lid
    vis_idx = np.flatnonzero(visible)
    for _ in range(params.specular_count):
        if vis_idx.size == 0:
            break
        p = int(rng.choice(vis_idx))
        py, px = divmod(p, w)
        sr = rng.uniform(1.5, 4.0)
        spot = (yy - py) ** 2 + (xx - px) ** 2 <= sr**2
        img[spot] = rng.uniform(235.0, 252.0)

    image = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    mask = (visible).astype(np.uint8)

    if params.condition == "healthy":
        t1, t2 = T1_HEALTHY, T2_OTHERS
    elif params.condition == "pre_cataract":
        t1, t2 = T1_UNHEALTHY, T2_PRE
    else:
        t1, t2 = T1_UNHEALTHY, T2_POST

    return EyeSample(
        image=image,
        mask=mask,
        label_t1=t1,
        label_t2=t2,
        sample_id=f"{params.condition}-{params.rng_seed}",
        meta={"condition": params.condition},
    )
