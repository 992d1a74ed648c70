"""Voxel radiance field with differentiable emission-absorption rendering.

Parameters are explicit pre-activation grids (softplus density, sigmoid
color) over an axis-aligned box, queried by trilinear interpolation. The
renderer composites alpha = 1 - exp(-sigma * dt) front to back against a solid
background; render_backward is the exact reverse-mode gradient of that forward
pass and reuses the forward pass's jittered sample positions.

Grid file format VXRF (little-endian): magic "VXRF", u32 version=1,
u32 nx, ny, nz, 6 x f32 bounds (min xyz, max xyz), f32 density array,
f32 color array (3 per voxel), both row-major with x fastest.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as dc_field

import numba
import numpy as np
from numba import njit

from .geometry import CameraPose, generate_rays
from .imaging import Image

_MAGIC = b"VXRF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII6f")
_DENSITY_FLOOR = -1.0e4  # softplus underflows to exactly 0


class FieldError(ValueError):
    pass


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    out = np.full_like(y, _DENSITY_FLOOR)
    pos = y > 0
    out[pos] = y[pos] + np.log1p(-np.exp(-y[pos]))
    return out


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def sigmoid_inv(y, eps: float = 1e-6):
    y = np.clip(np.asarray(y, dtype=np.float64), eps, 1.0 - eps)
    return np.log(y / (1.0 - y))


@dataclass
class VoxelRadianceField:
    density: np.ndarray  # (nx, ny, nz) float32, pre-activation
    color: np.ndarray    # (nx, ny, nz, 3) float32, pre-activation
    bounds_min: np.ndarray = dc_field(default_factory=lambda: np.array([-1.0, -1.0, -1.0]))
    bounds_max: np.ndarray = dc_field(default_factory=lambda: np.array([1.0, 1.0, 1.0]))

    def __post_init__(self):
        self.density = np.ascontiguousarray(self.density, dtype=np.float32)
        self.color = np.ascontiguousarray(self.color, dtype=np.float32)
        self.bounds_min = np.asarray(self.bounds_min, dtype=np.float64)
        self.bounds_max = np.asarray(self.bounds_max, dtype=np.float64)
        if self.density.ndim != 3 or min(self.density.shape) < 2:
            raise FieldError("density grid must be 3-D with resolution >= 2 per axis")
        if self.color.shape != self.density.shape + (3,):
            raise FieldError("color grid shape must be density shape + (3,)")
        if not np.all(self.bounds_max > self.bounds_min):
            raise FieldError("degenerate bounds")
        if not (np.all(np.isfinite(self.density)) and np.all(np.isfinite(self.color))):
            raise FieldError("field parameters must be finite")

    @property
    def resolution(self):
        return self.density.shape

    def copy(self):
        return VoxelRadianceField(self.density.copy(), self.color.copy(),
                                  self.bounds_min.copy(), self.bounds_max.copy())


@dataclass
class RenderSettings:
    samples_per_ray: int = 128
    background: tuple = (1.0, 1.0, 1.0)
    jitter: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_ray < 2:
            raise FieldError("samples_per_ray must be >= 2")


@dataclass
class FieldGradients:
    density: np.ndarray  # (nx, ny, nz) float64
    color: np.ndarray    # (nx, ny, nz, 3) float64


def init_field(resolution, bounds_min=(-1.0, -1.0, -1.0), bounds_max=(1.0, 1.0, 1.0),
               init_density: float = 0.0, init_color=(0.5, 0.5, 0.5)) -> VoxelRadianceField:
    """Constant grids whose activations equal the requested density/color."""
    nx, ny, nz = resolution
    if min(nx, ny, nz) < 2:
        raise FieldError("resolution must be >= 2 per axis")
    if init_density < 0:
        raise FieldError("init_density must be >= 0")
    d_pre = float(softplus_inv(np.float64(init_density)))
    density = np.full((nx, ny, nz), d_pre, dtype=np.float32)
    c_pre = sigmoid_inv(np.asarray(init_color, dtype=np.float64)).astype(np.float32)
    color = np.broadcast_to(c_pre, (nx, ny, nz, 3)).copy()
    return VoxelRadianceField(density, color, np.asarray(bounds_min), np.asarray(bounds_max))


def query(f: VoxelRadianceField, x):
    """Color and activated density at 5-dim points (xyz + view direction, the
    direction components are accepted and ignored). Outside the bounds the
    density is 0 and the color is white."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] < 3:
        raise FieldError("query points need at least 3 spatial components")
    p = x[:, :3]
    if not np.all(np.isfinite(p)):
        raise FieldError("non-finite query coordinates")
    nx, ny, nz = f.resolution
    res = np.array([nx, ny, nz], dtype=np.float64)
    g = (p - f.bounds_min) / (f.bounds_max - f.bounds_min) * (res - 1)
    inside = np.all((g >= 0) & (g <= res - 1), axis=1)
    gc = np.clip(g, 0, res - 1 - 1e-12)
    i0 = gc.astype(int)
    frac = gc - i0
    dens = np.zeros(len(p))
    cols = np.ones((len(p), 3))
    d_pre = np.zeros(len(p))
    c_pre = np.zeros((len(p), 3))
    for corner in range(8):
        dx, dy, dz = corner & 1, (corner >> 1) & 1, (corner >> 2) & 1
        w = (np.where(dx, frac[:, 0], 1 - frac[:, 0])
             * np.where(dy, frac[:, 1], 1 - frac[:, 1])
             * np.where(dz, frac[:, 2], 1 - frac[:, 2]))
        ix = np.minimum(i0[:, 0] + dx, nx - 1)
        iy = np.minimum(i0[:, 1] + dy, ny - 1)
        iz = np.minimum(i0[:, 2] + dz, nz - 1)
        d_pre += w * f.density[ix, iy, iz]
        c_pre += w[:, None] * f.color[ix, iy, iz]
    dens[inside] = softplus(d_pre[inside])
    cols[inside] = sigmoid(c_pre[inside])
    if squeeze:
        return cols[0], float(dens[0])
    return cols, dens


@njit(cache=True, inline="always")
def _trilinear4(density, color, gx, gy, gz):
    nx, ny, nz = density.shape
    ix = int(gx)
    iy = int(gy)
    iz = int(gz)
    if ix > nx - 2:
        ix = nx - 2
    if iy > ny - 2:
        iy = ny - 2
    if iz > nz - 2:
        iz = nz - 2
    if ix < 0:
        ix = 0
    if iy < 0:
        iy = 0
    if iz < 0:
        iz = 0
    fx = gx - ix
    fy = gy - iy
    fz = gz - iz
    d = 0.0
    r = 0.0
    g = 0.0
    b = 0.0
    for c in range(8):
        dx = c & 1
        dy = (c >> 1) & 1
        dz = (c >> 2) & 1
        w = ((fx if dx else 1.0 - fx)
             * (fy if dy else 1.0 - fy)
             * (fz if dz else 1.0 - fz))
        d += w * density[ix + dx, iy + dy, iz + dz]
        r += w * color[ix + dx, iy + dy, iz + dz, 0]
        g += w * color[ix + dx, iy + dy, iz + dz, 1]
        b += w * color[ix + dx, iy + dy, iz + dz, 2]
    return d, r, g, b


@njit(cache=True, inline="always")
def _ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax):
    t0 = 1e-6
    t1 = 1e30
    for a in range(3):
        o = ox if a == 0 else (oy if a == 1 else oz)
        d = dx if a == 0 else (dy if a == 1 else dz)
        if abs(d) < 1e-12:
            if o < bmin[a] or o > bmax[a]:
                return 1.0, 0.0
        else:
            ta = (bmin[a] - o) / d
            tb = (bmax[a] - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    return t0, t1


@njit(cache=True, parallel=True)
def _forward_kernel(density, color, bmin, bmax, origins, dirs, jitter,
                    bg, out_rgb, out_trans):
    n_rays = origins.shape[0]
    n_samples = jitter.shape[1]
    nx, ny, nz = density.shape
    sx = (nx - 1) / (bmax[0] - bmin[0])
    sy = (ny - 1) / (bmax[1] - bmin[1])
    sz = (nz - 1) / (bmax[2] - bmin[2])
    for r in numba.prange(n_rays):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        t0, t1 = _ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax)
        cr = 0.0
        cg = 0.0
        cb = 0.0
        trans = 1.0
        if t1 > t0:
            dt = (t1 - t0) / n_samples
            for i in range(n_samples):
                t = t0 + (i + jitter[r, i]) * dt
                px = ox + t * dx
                py = oy + t * dy
                pz = oz + t * dz
                dpre, pr, pg, pb = _trilinear4(
                    density, color,
                    (px - bmin[0]) * sx, (py - bmin[1]) * sy, (pz - bmin[2]) * sz)
                if dpre > 0.0:
                    sig = dpre + math.log1p(math.exp(-dpre))
                else:
                    sig = math.log1p(math.exp(dpre))
                att = math.exp(-sig * dt)
                w = trans * (1.0 - att)
                cr += w * (1.0 / (1.0 + math.exp(-pr)))
                cg += w * (1.0 / (1.0 + math.exp(-pg)))
                cb += w * (1.0 / (1.0 + math.exp(-pb)))
                trans *= att
        out_rgb[r, 0] = cr + trans * bg[0]
        out_rgb[r, 1] = cg + trans * bg[1]
        out_rgb[r, 2] = cb + trans * bg[2]
        out_trans[r] = trans


@njit(cache=True, parallel=True)
def _forward_state_kernel(density, color, bmin, bmax, origins, dirs, jitter,
                          bg, out_rgb, out_trans, st_dt,
                          st_trans, st_dsig, st_act, st_base, st_frac):
    """Forward pass that additionally records the per-sample state the reverse
    sweep needs, so a paired backward can skip its own forward recomputation.
    Numerically identical to _forward_kernel."""
    n_rays = origins.shape[0]
    n_samples = jitter.shape[1]
    nx, ny, nz = density.shape
    sx = (nx - 1) / (bmax[0] - bmin[0])
    sy = (ny - 1) / (bmax[1] - bmin[1])
    sz = (nz - 1) / (bmax[2] - bmin[2])
    for r in numba.prange(n_rays):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        t0, t1 = _ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax)
        cr = 0.0
        cg = 0.0
        cb = 0.0
        trans = 1.0
        st_trans[r, 0] = 1.0
        st_dt[r] = 0.0
        if t1 > t0:
            dt = (t1 - t0) / n_samples
            st_dt[r] = dt
            for i in range(n_samples):
                t = t0 + (i + jitter[r, i]) * dt
                gx = (ox + t * dx - bmin[0]) * sx
                gy = (oy + t * dy - bmin[1]) * sy
                gz = (oz + t * dz - bmin[2]) * sz
                ix = min(max(int(gx), 0), nx - 2)
                iy = min(max(int(gy), 0), ny - 2)
                iz = min(max(int(gz), 0), nz - 2)
                fx = gx - ix
                fy = gy - iy
                fz = gz - iz
                dpre = 0.0
                pr = 0.0
                pg = 0.0
                pb = 0.0
                for c in range(8):
                    ddx = c & 1
                    ddy = (c >> 1) & 1
                    ddz = (c >> 2) & 1
                    w8 = ((fx if ddx else 1.0 - fx)
                          * (fy if ddy else 1.0 - fy)
                          * (fz if ddz else 1.0 - fz))
                    dpre += w8 * density[ix + ddx, iy + ddy, iz + ddz]
                    pr += w8 * color[ix + ddx, iy + ddy, iz + ddz, 0]
                    pg += w8 * color[ix + ddx, iy + ddy, iz + ddz, 1]
                    pb += w8 * color[ix + ddx, iy + ddy, iz + ddz, 2]
                if dpre > 0.0:
                    sig = dpre + math.log1p(math.exp(-dpre))
                else:
                    sig = math.log1p(math.exp(dpre))
                att = math.exp(-sig * dt)
                w = trans * (1.0 - att)
                ar = 1.0 / (1.0 + math.exp(-pr))
                ag = 1.0 / (1.0 + math.exp(-pg))
                ab = 1.0 / (1.0 + math.exp(-pb))
                cr += w * ar
                cg += w * ag
                cb += w * ab
                trans *= att
                st_dsig[r, i] = 1.0 / (1.0 + math.exp(-dpre))
                st_act[r, i, 0] = ar
                st_act[r, i, 1] = ag
                st_act[r, i, 2] = ab
                st_base[r, i, 0] = ix
                st_base[r, i, 1] = iy
                st_base[r, i, 2] = iz
                st_frac[r, i, 0] = fx
                st_frac[r, i, 1] = fy
                st_frac[r, i, 2] = fz
                st_trans[r, i + 1] = trans
        else:
            for i in range(n_samples):
                st_dsig[r, i] = 0.0
                st_trans[r, i + 1] = 1.0
                st_base[r, i, 0] = -1
        out_rgb[r, 0] = cr + trans * bg[0]
        out_rgb[r, 1] = cg + trans * bg[1]
        out_rgb[r, 2] = cb + trans * bg[2]
        out_trans[r] = trans


# fixed chunk count: per-chunk gradient buffers are reduced in index order, so
# the result is bitwise deterministic regardless of thread scheduling
_BACKWARD_CHUNKS = 8


@njit(cache=True, parallel=True)
def _backward_state_kernel(dt_per_ray, bg, upstream,
                           st_trans, st_dsig, st_act, st_base, st_frac,
                           grad_density_out, grad_color_out):
    n_rays = st_dsig.shape[0]
    n_samples = st_dsig.shape[1]
    nxg, nyg, nzg = grad_density_out.shape
    gd_chunks = np.zeros((_BACKWARD_CHUNKS, nxg, nyg, nzg))
    gc_chunks = np.zeros((_BACKWARD_CHUNKS, nxg, nyg, nzg, 3))
    for chunk in numba.prange(_BACKWARD_CHUNKS):
        lo = chunk * n_rays // _BACKWARD_CHUNKS
        hi = (chunk + 1) * n_rays // _BACKWARD_CHUNKS
        gd = gd_chunks[chunk]
        gc = gc_chunks[chunk]
        for r in range(lo, hi):
            dt = dt_per_ray[r]
            if dt <= 0.0:
                continue
            gr = upstream[r, 0]
            gg = upstream[r, 1]
            gb = upstream[r, 2]
            s = st_trans[r, n_samples] * (bg[0] * gr + bg[1] * gg + bg[2] * gb)
            for i in range(n_samples - 1, -1, -1):
                w = st_trans[r, i] - st_trans[r, i + 1]
                ar = st_act[r, i, 0]
                ag = st_act[r, i, 1]
                ab = st_act[r, i, 2]
                cdotg = gr * ar + gg * ag + gb * ab
                g_tau = st_trans[r, i + 1] * cdotg - s
                s += w * cdotg
                g_dpre = g_tau * dt * st_dsig[r, i]
                gcr = w * gr * ar * (1.0 - ar)
                gcg = w * gg * ag * (1.0 - ag)
                gcb = w * gb * ab * (1.0 - ab)
                ix = st_base[r, i, 0]
                iy = st_base[r, i, 1]
                iz = st_base[r, i, 2]
                fx = st_frac[r, i, 0]
                fy = st_frac[r, i, 1]
                fz = st_frac[r, i, 2]
                for c in range(8):
                    ddx = c & 1
                    ddy = (c >> 1) & 1
                    ddz = (c >> 2) & 1
                    w8 = ((fx if ddx else 1.0 - fx)
                          * (fy if ddy else 1.0 - fy)
                          * (fz if ddz else 1.0 - fz))
                    gd[ix + ddx, iy + ddy, iz + ddz] += w8 * g_dpre
                    gc[ix + ddx, iy + ddy, iz + ddz, 0] += w8 * gcr
                    gc[ix + ddx, iy + ddy, iz + ddz, 1] += w8 * gcg
                    gc[ix + ddx, iy + ddy, iz + ddz, 2] += w8 * gcb
    for chunk in range(_BACKWARD_CHUNKS):
        grad_density_out += gd_chunks[chunk]
        grad_color_out += gc_chunks[chunk]


@njit(cache=True, parallel=True)
def _backward_kernel(density, color, bmin, bmax, origins, dirs, jitter,
                     bg, upstream, grad_density_out, grad_color_out):
    n_rays = origins.shape[0]
    n_samples = jitter.shape[1]
    nx, ny, nz = density.shape
    gd_chunks = np.zeros((_BACKWARD_CHUNKS, nx, ny, nz))
    gc_chunks = np.zeros((_BACKWARD_CHUNKS, nx, ny, nz, 3))
    for chunk in numba.prange(_BACKWARD_CHUNKS):
        lo = chunk * n_rays // _BACKWARD_CHUNKS
        hi = (chunk + 1) * n_rays // _BACKWARD_CHUNKS
        _backward_rays(density, color, bmin, bmax, origins, dirs, jitter, bg,
                       upstream, gd_chunks[chunk], gc_chunks[chunk], lo, hi)
    for chunk in range(_BACKWARD_CHUNKS):
        grad_density_out += gd_chunks[chunk]
        grad_color_out += gc_chunks[chunk]


@njit(cache=True)
def _backward_rays(density, color, bmin, bmax, origins, dirs, jitter,
                   bg, upstream, grad_density, grad_color, r_lo, r_hi):
    n_samples = jitter.shape[1]
    nx, ny, nz = density.shape
    sx = (nx - 1) / (bmax[0] - bmin[0])
    sy = (ny - 1) / (bmax[1] - bmin[1])
    sz = (nz - 1) / (bmax[2] - bmin[2])
    dsig = np.empty(n_samples)
    cdotg = np.empty(n_samples)      # activated color . upstream
    trans = np.empty(n_samples + 1)  # transmittance before each sample
    act = np.empty((n_samples, 3))   # activated RGB per sample
    base = np.empty((n_samples, 3), dtype=np.int64)
    frac = np.empty((n_samples, 3))
    for r in range(r_lo, r_hi):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        gr = upstream[r, 0]
        gg = upstream[r, 1]
        gb = upstream[r, 2]
        t0, t1 = _ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax)
        if t1 <= t0:
            continue
        dt = (t1 - t0) / n_samples
        trans[0] = 1.0
        for i in range(n_samples):
            t = t0 + (i + jitter[r, i]) * dt
            gx = (ox + t * dx - bmin[0]) * sx
            gy = (oy + t * dy - bmin[1]) * sy
            gz = (oz + t * dz - bmin[2]) * sz
            ix = min(max(int(gx), 0), nx - 2)
            iy = min(max(int(gy), 0), ny - 2)
            iz = min(max(int(gz), 0), nz - 2)
            fx = gx - ix
            fy = gy - iy
            fz = gz - iz
            base[i, 0] = ix
            base[i, 1] = iy
            base[i, 2] = iz
            frac[i, 0] = fx
            frac[i, 1] = fy
            frac[i, 2] = fz
            dpre = 0.0
            pr = 0.0
            pg = 0.0
            pb = 0.0
            for c in range(8):
                ddx = c & 1
                ddy = (c >> 1) & 1
                ddz = (c >> 2) & 1
                w8 = ((fx if ddx else 1.0 - fx)
                      * (fy if ddy else 1.0 - fy)
                      * (fz if ddz else 1.0 - fz))
                dpre += w8 * density[ix + ddx, iy + ddy, iz + ddz]
                pr += w8 * color[ix + ddx, iy + ddy, iz + ddz, 0]
                pg += w8 * color[ix + ddx, iy + ddy, iz + ddz, 1]
                pb += w8 * color[ix + ddx, iy + ddy, iz + ddz, 2]
            if dpre > 0.0:
                sig = dpre + math.log1p(math.exp(-dpre))
            else:
                sig = math.log1p(math.exp(dpre))
            dsig[i] = 1.0 / (1.0 + math.exp(-dpre))
            ar = 1.0 / (1.0 + math.exp(-pr))
            ag = 1.0 / (1.0 + math.exp(-pg))
            ab = 1.0 / (1.0 + math.exp(-pb))
            act[i, 0] = ar
            act[i, 1] = ag
            act[i, 2] = ab
            cdotg[i] = gr * ar + gg * ag + gb * ab
            trans[i + 1] = trans[i] * math.exp(-sig * dt)
        # suffix: S_i = sum_{k>i} w_k (c_k.g) + T_final (bg.g)
        s = trans[n_samples] * (bg[0] * gr + bg[1] * gg + bg[2] * gb)
        for i in range(n_samples - 1, -1, -1):
            w = trans[i] - trans[i + 1]
            g_tau = trans[i + 1] * cdotg[i] - s
            s += w * cdotg[i]
            g_dpre = g_tau * dt * dsig[i]
            ar = act[i, 0]
            ag = act[i, 1]
            ab = act[i, 2]
            gcr = w * gr * ar * (1.0 - ar)
            gcg = w * gg * ag * (1.0 - ag)
            gcb = w * gb * ab * (1.0 - ab)
            ix = base[i, 0]
            iy = base[i, 1]
            iz = base[i, 2]
            fx = frac[i, 0]
            fy = frac[i, 1]
            fz = frac[i, 2]
            for c in range(8):
                ddx = c & 1
                ddy = (c >> 1) & 1
                ddz = (c >> 2) & 1
                w8 = ((fx if ddx else 1.0 - fx)
                      * (fy if ddy else 1.0 - fy)
                      * (fz if ddz else 1.0 - fz))
                grad_density[ix + ddx, iy + ddy, iz + ddz] += w8 * g_dpre
                grad_color[ix + ddx, iy + ddy, iz + ddz, 0] += w8 * gcr
                grad_color[ix + ddx, iy + ddy, iz + ddz, 1] += w8 * gcg
                grad_color[ix + ddx, iy + ddy, iz + ddz, 2] += w8 * gcb


def _sample_jitter(settings: RenderSettings, n_rays: int):
    n = settings.samples_per_ray
    if settings.jitter:
        rng = np.random.default_rng(settings.seed)
        return rng.random((n_rays, n))
    return np.full((n_rays, n), 0.5)


def render(f: VoxelRadianceField, pose: CameraPose, width: int, height: int,
           settings: RenderSettings):
    """Render to an Image plus the per-pixel residual transmittance."""
    rays = generate_rays(pose, width, height)
    origins = rays.origins.reshape(-1, 3)
    dirs = rays.directions.reshape(-1, 3)
    jitter = _sample_jitter(settings, len(origins))
    bg = np.asarray(settings.background, dtype=np.float64)
    out_rgb = np.empty((len(origins), 3))
    out_trans = np.empty(len(origins))
    _forward_kernel(f.density, f.color, f.bounds_min, f.bounds_max,
                    origins, dirs, jitter, bg, out_rgb, out_trans)
    img = Image(np.clip(out_rgb, 0.0, 1.0).reshape(height, width, 3))
    return img, out_trans.reshape(height, width)


def render_backward(f: VoxelRadianceField, pose: CameraPose, width: int, height: int,
                    settings: RenderSettings, upstream: np.ndarray) -> FieldGradients:
    """Exact gradient of the forward compositing, contracted with an upstream
    per-pixel RGB gradient. Uses the same sample positions as render with the
    same settings."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (height, width, 3):
        raise FieldError(f"upstream shape {upstream.shape} != {(height, width, 3)}")
    rays = generate_rays(pose, width, height)
    origins = rays.origins.reshape(-1, 3)
    dirs = rays.directions.reshape(-1, 3)
    jitter = _sample_jitter(settings, len(origins))
    bg = np.asarray(settings.background, dtype=np.float64)
    grad_density = np.zeros(f.density.shape)
    grad_color = np.zeros(f.color.shape)
    _backward_kernel(f.density, f.color, f.bounds_min, f.bounds_max,
                     origins, dirs, jitter, bg, upstream.reshape(-1, 3),
                     grad_density, grad_color)
    return FieldGradients(grad_density, grad_color)


@dataclass
class RenderState:
    """Per-sample state captured by render_with_state for a cheap paired
    backward; numerically identical to the recomputing render_backward."""
    width: int
    height: int
    background: np.ndarray
    dt: np.ndarray
    trans: np.ndarray
    dsig: np.ndarray
    act: np.ndarray
    base: np.ndarray
    frac: np.ndarray
    shape_density: tuple
    shape_color: tuple


def render_with_state(f: VoxelRadianceField, pose: CameraPose, width: int, height: int,
                      settings: RenderSettings, reuse: RenderState | None = None):
    """Like render, but also returns the per-sample state a paired
    backward_from_state needs. Pass a previous same-shape state as `reuse` to
    avoid reallocating the scratch arrays."""
    rays = generate_rays(pose, width, height)
    origins = rays.origins.reshape(-1, 3)
    dirs = rays.directions.reshape(-1, 3)
    jitter = _sample_jitter(settings, len(origins))
    bg = np.asarray(settings.background, dtype=np.float64)
    n_rays = len(origins)
    n = settings.samples_per_ray
    out_rgb = np.empty((n_rays, 3))
    out_trans = np.empty(n_rays)
    if (reuse is not None and reuse.dsig.shape == (n_rays, n)
            and reuse.shape_density == f.density.shape):
        st = reuse
        st.background = bg
        st.width = width
        st.height = height
    else:
        st = RenderState(width, height, bg,
                         np.empty(n_rays), np.empty((n_rays, n + 1)),
                         np.empty((n_rays, n)), np.empty((n_rays, n, 3)),
                         np.empty((n_rays, n, 3), dtype=np.int32),
                         np.empty((n_rays, n, 3)),
                         f.density.shape, f.color.shape)
    _forward_state_kernel(f.density, f.color, f.bounds_min, f.bounds_max,
                          origins, dirs, jitter, bg, out_rgb, out_trans,
                          st.dt, st.trans, st.dsig, st.act, st.base, st.frac)
    img = Image(np.clip(out_rgb, 0.0, 1.0).reshape(height, width, 3))
    return img, out_trans.reshape(height, width), st


def backward_from_state(st: RenderState, upstream: np.ndarray) -> FieldGradients:
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (st.height, st.width, 3):
        raise FieldError(f"upstream shape {upstream.shape} != {(st.height, st.width, 3)}")
    grad_density = np.zeros(st.shape_density)
    grad_color = np.zeros(st.shape_color)
    _backward_state_kernel(st.dt, st.background, upstream.reshape(-1, 3),
                           st.trans, st.dsig, st.act, st.base, st.frac,
                           grad_density, grad_color)
    return FieldGradients(grad_density, grad_color)


def export_grid(f: VoxelRadianceField, path):
    nx, ny, nz = f.resolution
    header = _HEADER.pack(_MAGIC, _VERSION, nx, ny, nz,
                          *f.bounds_min.astype(np.float32),
                          *f.bounds_max.astype(np.float32))
    with open(path, "wb") as fh:
        fh.write(header)
        # x fastest on disk
        fh.write(np.ascontiguousarray(f.density.transpose(2, 1, 0)).tobytes())
        fh.write(np.ascontiguousarray(f.color.transpose(2, 1, 0, 3)).tobytes())


def import_grid(path) -> VoxelRadianceField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FieldError(f"{path}: truncated header")
    magic, version, nx, ny, nz, *bounds = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise FieldError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FieldError(f"{path}: unsupported version {version}")
    n = nx * ny * nz
    expect = _HEADER.size + 4 * n + 12 * n
    if len(raw) != expect:
        raise FieldError(f"{path}: expected {expect} bytes, got {len(raw)}")
    dens = np.frombuffer(raw, dtype="<f4", count=n, offset=_HEADER.size)
    cols = np.frombuffer(raw, dtype="<f4", count=3 * n, offset=_HEADER.size + 4 * n)
    density = dens.reshape(nz, ny, nx).transpose(2, 1, 0)
    color = cols.reshape(nz, ny, nx, 3).transpose(2, 1, 0, 3)
    return VoxelRadianceField(density, color, np.array(bounds[:3], dtype=np.float64),
                              np.array(bounds[3:], dtype=np.float64))
