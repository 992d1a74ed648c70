"""Forward diffusion noising, sparse-depth conditioning, score backends, and
soft-embedding inversion.

The score backend abstracts a noise predictor eps(x_t, t, depth, embedding).
AnalyticOracle gives it a closed form against known target images
    eps_hat = (x_t - sqrt(abar_t) * y) / sqrt(1 - abar_t)
so that eps_hat - eps = sqrt(abar_t / (1 - abar_t)) * (x - y): distillation
against the oracle descends a scaled L2 toward y, which makes the whole
optimization loop verifiable. In per-pose mode y is looked up by a quantized
(azimuth, elevation) bucket; in linear mode y = A @ e depends on the
embedding, which is what the inversion tests exercise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SparseDepthMap


class PriorError(ValueError):
    pass


@dataclass
class DiffusionSchedule:
    alpha_bar: np.ndarray  # (T,), abar[t-1] is the step-t coefficient

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or len(ab) < 1:
            raise PriorError("alpha_bar must be a non-empty vector")
        if np.any(ab <= 0) or np.any(ab > 1):
            raise PriorError("alpha_bar values must lie in (0, 1]")
        if len(ab) > 1 and np.any(np.diff(ab) >= 0):
            raise PriorError("alpha_bar must be strictly decreasing")
        self.alpha_bar = ab

    @property
    def T(self):
        return len(self.alpha_bar)

    def abar(self, t: int) -> float:
        if not 1 <= t <= self.T:
            raise PriorError(f"step {t} outside [1, {self.T}]")
        return float(self.alpha_bar[t - 1])


def make_schedule(T: int = 1000, beta_min: float = 1e-4, beta_max: float = 2e-2) -> DiffusionSchedule:
    if T < 1:
        raise PriorError("T must be >= 1")
    if not (0 < beta_min <= beta_max < 1):
        raise PriorError("need 0 < beta_min <= beta_max < 1")
    betas = np.linspace(beta_min, beta_max, T)
    return DiffusionSchedule(np.cumprod(1.0 - betas))


def add_noise(image: np.ndarray, t: int, eps: np.ndarray, schedule: DiffusionSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps. Output may leave [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != image.shape:
        raise PriorError(f"eps shape {eps.shape} != image shape {image.shape}")
    ab = schedule.abar(t)
    return np.sqrt(ab) * image + np.sqrt(1.0 - ab) * eps


@dataclass
class DepthConditioning:
    features: np.ndarray  # (S, S) normalized depth in [0, 1], 0 where invalid
    validity: np.ndarray  # (S, S) fraction of valid source pixels per cell


def encode_depth(depth: SparseDepthMap, out_size: int) -> DepthConditioning:
    """Validity-weighted average pooling to out_size, then min-max
    normalization over the cells that saw any valid pixel."""
    if out_size < 1:
        raise PriorError("out_size must be >= 1")
    h, w = depth.height, depth.width
    row_cell = np.arange(h) * out_size // h
    col_cell = np.arange(w) * out_size // w
    cell = row_cell[:, None] * out_size + col_cell[None, :]
    counts = np.bincount(cell.ravel(), minlength=out_size * out_size).astype(np.float64)
    vsum = np.bincount(cell.ravel(), weights=depth.valid.ravel().astype(np.float64),
                       minlength=out_size * out_size)
    dsum = np.bincount(cell.ravel(), weights=(depth.depth * depth.valid).ravel(),
                       minlength=out_size * out_size)
    validity = (vsum / counts).reshape(out_size, out_size)
    pooled = np.zeros(out_size * out_size)
    hit = vsum > 0
    pooled[hit] = dsum[hit] / vsum[hit]
    pooled = pooled.reshape(out_size, out_size)
    hit = hit.reshape(out_size, out_size)
    feats = np.zeros((out_size, out_size))
    if hit.any():
        lo, hi = pooled[hit].min(), pooled[hit].max()
        if hi > lo:
            feats[hit] = (pooled[hit] - lo) / (hi - lo)
    return DepthConditioning(feats, validity)


@dataclass
class PromptEmbedding:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise PriorError("embedding must be finite")
        self.values = v

    @property
    def dim(self):
        return len(self.values)


def bucket_key(azimuth: float, elevation: float, n_azimuth: int = 8,
               elevations=(0.0,)) -> tuple[int, int]:
    """Quantize a pose to the discrete training-view grid: nearest of
    n_azimuth evenly spaced azimuths x nearest listed elevation."""
    az = azimuth % (2.0 * np.pi)
    ia = int(np.rint(az / (2.0 * np.pi / n_azimuth))) % n_azimuth
    ie = int(np.argmin([abs(elevation - e) for e in elevations]))
    return ia, ie


class ScoreBackend:
    """Noise predictor interface. Implementations are immutable and safe to
    call concurrently."""

    embedding_dim: int = 0

    def predict_eps(self, x_t, t, cond, embedding):
        raise NotImplementedError

    def embedding_objective_grad(self, x_t, t, cond, embedding, eps_true):
        """Gradient of ||eps_pred - eps_true||^2 w.r.t. the embedding, or None
        when the backend cannot supply it (caller falls back to probes)."""
        return None


class AnalyticOracle(ScoreBackend):
    """Closed-form backend. Exactly one of:

    per-pose mode: targets maps bucket key -> target image y (same shape as
    the rendered views); the depth conditioning carries the pose bucket.

    linear mode: y = (A @ e).reshape(shape); embedding-sensitive, used for
    inversion testing.
    """

    def __init__(self, schedule: DiffusionSchedule, targets: dict | None = None,
                 matrix: np.ndarray | None = None, shape: tuple | None = None):
        if (targets is None) == (matrix is None):
            raise PriorError("provide exactly one of targets / matrix")
        self.schedule = schedule
        self.targets = None
        self.matrix = None
        if targets is not None:
            self.targets = {k: np.asarray(v, dtype=np.float64) for k, v in targets.items()}
            for k, y in self.targets.items():
                if y.min() < 0 or y.max() > 1:
                    raise PriorError(f"target for bucket {k} leaves [0, 1]")
        else:
            self.matrix = np.asarray(matrix, dtype=np.float64)
            if shape is None:
                raise PriorError("linear mode needs an output shape")
            self.shape = tuple(shape)
            if int(np.prod(self.shape)) != self.matrix.shape[0]:
                raise PriorError("matrix rows must match output size")
            self.embedding_dim = self.matrix.shape[1]

    def _coeffs(self, t):
        ab = self.schedule.abar(t)
        return np.sqrt(ab), np.sqrt(1.0 - ab)

    def target_for(self, cond, embedding):
        if self.matrix is not None:
            return (self.matrix @ np.asarray(embedding.values)).reshape(self.shape)
        key = getattr(cond, "bucket", None)
        if key is None or key not in self.targets:
            raise PriorError(f"unknown pose bucket {key!r}")
        return self.targets[key]

    def predict_eps(self, x_t, t, cond, embedding):
        x_t = np.asarray(x_t, dtype=np.float64)
        y = self.target_for(cond, embedding)
        if y.shape != x_t.shape:
            raise PriorError(f"target shape {y.shape} != x_t shape {x_t.shape}")
        a, b = self._coeffs(t)
        return (x_t - a * y) / b

    def embedding_objective_grad(self, x_t, t, cond, embedding, eps_true):
        if self.matrix is None:
            return None
        a, b = self._coeffs(t)
        resid = self.predict_eps(x_t, t, cond, embedding) - np.asarray(eps_true)
        return (-2.0 * a / b) * (self.matrix.T @ resid.ravel())


@dataclass
class OracleConditioning:
    """Depth conditioning tagged with the pose bucket the oracle keys on."""
    bucket: tuple
    features: np.ndarray | None = None
    validity: np.ndarray | None = None


def invert_embedding(image: np.ndarray, backend: ScoreBackend, schedule: DiffusionSchedule,
                     steps: int, lr: float, rng: np.random.Generator,
                     init: PromptEmbedding | None = None, cond=None,
                     t_fraction=(0.02, 0.98), probe_h: float = 1e-4) -> PromptEmbedding:
    """SGD on the embedding minimizing ||eps_pred(x_t, e) - eps||^2, resampling
    (t, eps) each step. Backends without an analytic embedding gradient are
    probed by forward differences; a backend with no embedding sensitivity at
    all raises."""
    if steps < 1:
        raise PriorError("steps must be >= 1")
    if backend.embedding_dim < 1:
        raise PriorError("backend has no embedding sensitivity; inversion is meaningless")
    image = np.asarray(image, dtype=np.float64)
    e = (np.zeros(backend.embedding_dim) if init is None
         else np.asarray(init.values, dtype=np.float64).copy())
    t_lo = max(1, int(round(t_fraction[0] * schedule.T)))
    t_hi = max(t_lo, int(round(t_fraction[1] * schedule.T)))
    for _ in range(steps):
        t = int(rng.integers(t_lo, t_hi + 1))
        eps = rng.standard_normal(image.shape)
        x_t = add_noise(image, t, eps, schedule)
        emb = PromptEmbedding(e)
        grad = backend.embedding_objective_grad(x_t, t, cond, emb, eps)
        if grad is None:
            base = float(np.sum((backend.predict_eps(x_t, t, cond, emb) - eps) ** 2))
            grad = np.zeros_like(e)
            for d in range(len(e)):
                ep = e.copy()
                ep[d] += probe_h
                val = float(np.sum(
                    (backend.predict_eps(x_t, t, cond, PromptEmbedding(ep)) - eps) ** 2))
                grad[d] = (val - base) / probe_h
        e = e - lr * grad
    return PromptEmbedding(e)
