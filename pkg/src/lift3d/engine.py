"""Score-distillation optimization of the voxel field.

Each step: sample a view, render, noise the render, ask the score backend for
its noise prediction, inject w(t) * (eps_hat - eps) as the upstream gradient
of the render, and take an Adam step on the grids. An optional input-view
anchor adds the photometric gradient (render - input crop) at the input pose
so the reconstruction stays faithful to the given image.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dc_field, asdict

import numpy as np

from .field import (FieldGradients, RenderSettings, VoxelRadianceField,
                    backward_from_state, render, render_backward, render_with_state)
from .geometry import CameraPose, make_pose
from .prior import DiffusionSchedule, PromptEmbedding, ScoreBackend, add_noise


class EngineError(RuntimeError):
    pass


@dataclass
class SDSConfig:
    iterations: int = 2000
    lr_density: float = 0.1
    lr_color: float = 0.05
    weight_mode: str = "constant"  # "constant" | "sqrt_one_minus_abar"
    t_range: tuple = (0.02, 0.98)
    render_size: int = 64
    samples_per_ray: int = 128
    background: tuple = (1.0, 1.0, 1.0)
    jitter: bool = True
    seed: int = 0
    anchor_weight: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.iterations < 0:
            raise EngineError("iterations must be >= 0")
        if not (0.0 < self.t_range[0] <= self.t_range[1] <= 1.0):
            raise EngineError("t_range must lie within (0, 1]")
        if self.lr_density <= 0 or self.lr_color <= 0:
            raise EngineError("step sizes must be positive")
        if self.weight_mode not in ("constant", "sqrt_one_minus_abar"):
            raise EngineError(f"unknown weight_mode {self.weight_mode!r}")
        if self.anchor_weight < 0:
            raise EngineError("anchor weight must be >= 0")


@dataclass
class OptimizerState:
    m_density: np.ndarray
    v_density: np.ndarray
    m_color: np.ndarray
    v_color: np.ndarray
    step: int = 0

    @classmethod
    def for_field(cls, f: VoxelRadianceField):
        return cls(np.zeros(f.density.shape), np.zeros(f.density.shape),
                   np.zeros(f.color.shape), np.zeros(f.color.shape))


@dataclass
class TraceRecord:
    iteration: int
    azimuth: float
    elevation: float
    t: int
    proxy_loss: float
    wall_time: float


@dataclass
class TrainTrace:
    records: list = dc_field(default_factory=list)

    def append(self, rec: TraceRecord):
        self.records.append(rec)

    def save_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(asdict(rec)) + "\n")

    @classmethod
    def load_jsonl(cls, path):
        trace = cls()
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    trace.append(TraceRecord(**json.loads(line)))
        return trace


@dataclass
class ViewSample:
    pose: CameraPose
    azimuth: float
    elevation: float


@dataclass
class ViewLayout:
    """The discrete training-view grid the analytic oracle is keyed on."""
    n_azimuth: int = 8
    elevations: tuple = (np.deg2rad(20.0),)
    radius: float = 2.3
    fov_y: float = np.deg2rad(60.0)

    def pose(self, ia: int, ie: int = 0) -> CameraPose:
        az = ia * 2.0 * np.pi / self.n_azimuth
        return make_pose(az, self.elevations[ie], self.radius, self.fov_y)

    def sample(self, rng: np.random.Generator) -> ViewSample:
        ia = int(rng.integers(self.n_azimuth))
        ie = int(rng.integers(len(self.elevations)))
        az = ia * 2.0 * np.pi / self.n_azimuth
        return ViewSample(self.pose(ia, ie), az, self.elevations[ie])

    def bucket(self, azimuth: float, elevation: float):
        from .prior import bucket_key
        return bucket_key(azimuth, elevation, self.n_azimuth, self.elevations)


def _adam_update(params32, grad, m, v, lr, beta1, beta2, eps, step):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** step)
    vhat = v / (1.0 - beta2 ** step)
    params32 -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(np.float32)


def _weight(mode: str, schedule: DiffusionSchedule, t: int) -> float:
    if mode == "sqrt_one_minus_abar":
        return float(np.sqrt(1.0 - schedule.abar(t)))
    return 1.0


def sds_step(f: VoxelRadianceField, backend: ScoreBackend, schedule: DiffusionSchedule,
             embedding: PromptEmbedding, depth_provider, cfg: SDSConfig,
             opt: OptimizerState, rng: np.random.Generator, sample_view,
             iteration: int = 0, anchor=None, scratch: dict | None = None) -> TraceRecord:
    """One distillation step; mutates the field and optimizer state in place.

    sample_view: rng -> ViewSample. depth_provider: ViewSample -> conditioning.
    anchor: optional (pose, target (S,S,3), weight) photometric pull whose
    gradient is combined into the same parameter update.
    """
    start = time.perf_counter()
    s = cfg.render_size
    view = sample_view(rng)
    t_lo = max(1, int(round(cfg.t_range[0] * schedule.T)))
    t_hi = max(t_lo, int(round(cfg.t_range[1] * schedule.T)))
    t = int(rng.integers(t_lo, t_hi + 1))
    eps = rng.standard_normal((s, s, 3))
    render_seed = int(rng.integers(0, 2 ** 31))
    settings = RenderSettings(cfg.samples_per_ray, cfg.background, cfg.jitter, render_seed)

    if scratch is None:
        scratch = {}
    # state-capturing render: same numbers as render + render_backward with
    # this seed, without the backward pass re-marching the rays
    img, _, state = render_with_state(f, view.pose, s, s, settings,
                                      reuse=scratch.get("sds"))
    scratch["sds"] = state
    x = img.pixels
    x_t = add_noise(x, t, eps, schedule)
    cond = depth_provider(view)
    try:
        eps_hat = backend.predict_eps(x_t, t, cond, embedding)
    except Exception as e:
        raise EngineError(f"score backend failed at iteration {iteration}: {e}") from e
    residual = eps_hat - eps
    upstream = _weight(cfg.weight_mode, schedule, t) * residual
    grads = backward_from_state(state, upstream)

    if anchor is not None:
        a_pose, a_target, a_weight = anchor
        if a_weight > 0:
            a_seed = int(rng.integers(0, 2 ** 31))
            a_settings = RenderSettings(cfg.samples_per_ray, cfg.background, cfg.jitter, a_seed)
            a_img, _, a_state = render_with_state(f, a_pose, s, s, a_settings,
                                                  reuse=scratch.get("anchor"))
            scratch["anchor"] = a_state
            a_up = a_weight * (a_img.pixels - a_target)
            a_grads = backward_from_state(a_state, a_up)
            grads.density += a_grads.density
            grads.color += a_grads.color

    if not (np.all(np.isfinite(grads.density)) and np.all(np.isfinite(grads.color))):
        raise EngineError(f"non-finite gradient at iteration {iteration}")

    opt.step += 1
    _adam_update(f.density, grads.density, opt.m_density, opt.v_density,
                 cfg.lr_density, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, opt.step)
    _adam_update(f.color, grads.color, opt.m_color, opt.v_color,
                 cfg.lr_color, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, opt.step)
    if not (np.all(np.isfinite(f.density)) and np.all(np.isfinite(f.color))):
        raise EngineError(f"non-finite parameters after iteration {iteration}")

    proxy = float(np.sum(residual ** 2) / (s * s))
    return TraceRecord(iteration, view.azimuth, view.elevation, t, proxy,
                       time.perf_counter() - start)


def assemble_sds_gradient(f: VoxelRadianceField, backend: ScoreBackend,
                          schedule: DiffusionSchedule, embedding: PromptEmbedding,
                          cond, view: ViewSample, t: int, eps: np.ndarray,
                          cfg: SDSConfig, render_seed: int = 0) -> FieldGradients:
    """The raw per-draw parameter gradient, without the optimizer step; used
    to check the update direction against its closed-form expectation."""
    s = cfg.render_size
    settings = RenderSettings(cfg.samples_per_ray, cfg.background, cfg.jitter, render_seed)
    img, _ = render(f, view.pose, s, s, settings)
    x_t = add_noise(img.pixels, t, eps, schedule)
    eps_hat = backend.predict_eps(x_t, t, cond, embedding)
    upstream = _weight(cfg.weight_mode, schedule, t) * (eps_hat - eps)
    return render_backward(f, view.pose, s, s, settings, upstream)


@dataclass
class ReconstructionInputs:
    image_crop: np.ndarray           # (S, S, 3) input-view target for the anchor
    backend: ScoreBackend
    schedule: DiffusionSchedule
    embedding: PromptEmbedding
    depth_provider: object           # ViewSample -> conditioning
    sample_view: object              # rng -> ViewSample
    input_pose: CameraPose


def reconstruct(f: VoxelRadianceField, inputs: ReconstructionInputs,
                cfg: SDSConfig, on_step=None) -> tuple[VoxelRadianceField, TrainTrace]:
    """Run cfg.iterations of sds_step with the input-view anchor applied every
    iteration. Mutates and returns the field; fully determined by (seed,
    config, inputs)."""
    rng = np.random.default_rng(cfg.seed)
    opt = OptimizerState.for_field(f)
    trace = TrainTrace()
    anchor = (inputs.input_pose, np.asarray(inputs.image_crop, dtype=np.float64),
              cfg.anchor_weight)
    scratch = {}
    for it in range(cfg.iterations):
        rec = sds_step(f, inputs.backend, inputs.schedule, inputs.embedding,
                       inputs.depth_provider, cfg, opt, rng, inputs.sample_view,
                       iteration=it, anchor=anchor, scratch=scratch)
        trace.append(rec)
        if on_step is not None:
            on_step(it, rec, f)
    return f, trace


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0:
        return float("inf")
    return -10.0 * np.log10(mse)
