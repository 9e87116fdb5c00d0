"""Geographic rotary encoding of residual vectors.

A residual of even dimension M is rotated blockwise: each consecutive
coordinate pair (2i, 2i+1) is turned by the same angle. Stacking the
forward and reverse rotation doubles the dimension and makes the inner
product of two encoded vectors depend on their angle *difference* only:

    <T_a(u), T_b(v)> = cos(a - b) * <[u; u], [v; v]>

which in turn shifts the cosine distance of a pair by
2 * cos_sim(u, v) * sin^2((a - b) / 2). Both identities are checked
numerically by the verifier functions at the bottom of this module.

Angles are derived from local polar coordinates: the azimuth is halved
into [-pi/2, +pi/2] and the radial distance is mapped linearly onto
[0, pi] against a configurable scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geo import LocalPolar

__all__ = [
    "ALL_ATTRIBUTES",
    "ATTR_DIST_FWD",
    "ATTR_DIST_REV",
    "ATTR_SIGMA_FWD",
    "ATTR_SIGMA_REV",
    "NormalizedGeo",
    "build_geo_vector",
    "mirror_transform",
    "normalize_geo",
    "normalize_geo_batch",
    "rotate_blockwise",
    "verify_distance_shift_identity",
    "verify_inner_product_identity",
]

ATTR_SIGMA_FWD = "sigma+"
ATTR_SIGMA_REV = "sigma-"
ATTR_DIST_FWD = "d+"
ATTR_DIST_REV = "d-"

# Canonical stacking order of the rotated blocks.
ALL_ATTRIBUTES = (ATTR_SIGMA_FWD, ATTR_SIGMA_REV, ATTR_DIST_FWD, ATTR_DIST_REV)


@dataclass(frozen=True)
class NormalizedGeo:
    """Rotation-ready geo angles: ``sigma_norm`` in [-pi/2, +pi/2] and
    ``d_norm`` in [0, pi]. Fields may be scalars or equally-shaped arrays
    (one entry per vector in a batch)."""

    sigma_norm: float | np.ndarray
    d_norm: float | np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.sigma_norm, dtype=float)
        d = np.asarray(self.d_norm, dtype=float)
        half_pi = np.pi / 2 + 1e-12
        if not (np.all(np.isfinite(s)) and np.all(np.abs(s) <= half_pi)):
            raise ValueError("sigma_norm outside [-pi/2, +pi/2]")
        if not (np.all(np.isfinite(d)) and np.all(d >= 0.0) and np.all(d <= np.pi + 1e-12)):
            raise ValueError("d_norm outside [0, pi]")


def rotate_blockwise(v: np.ndarray, theta: float | np.ndarray) -> np.ndarray:
    """Apply the 2x2 rotation R(theta) to each consecutive coordinate pair.

    ``v`` has shape (..., M) with M even; ``theta`` is a scalar or an array
    broadcastable to the leading dimensions (one angle per vector).
    Norm-preserving.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1] % 2 != 0:
        raise ValueError(f"blockwise rotation needs an even dimension, got {v.shape[-1]}")
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)[..., None]
    s = np.sin(theta)[..., None]
    even = v[..., 0::2]
    odd = v[..., 1::2]
    out = np.empty(np.broadcast_shapes(v.shape[:-1], theta.shape) + v.shape[-1:], dtype=float)
    out[..., 0::2] = c * even - s * odd
    out[..., 1::2] = s * even + c * odd
    return out


def mirror_transform(v: np.ndarray, theta: float | np.ndarray) -> np.ndarray:
    """Forward/reverse rotation stack [R(theta) v ; R(-theta) v].

    Doubles the last dimension; the output norm is sqrt(2) times the input
    norm for every angle.
    """
    theta = np.asarray(theta, dtype=float)
    return np.concatenate([rotate_blockwise(v, theta), rotate_blockwise(v, -theta)], axis=-1)


def normalize_geo(polar: LocalPolar, d_scale_km: float) -> NormalizedGeo:
    """Turn local polar coordinates into rotation angles.

    The azimuth is halved so the full circle (-pi, pi] lands in
    (-pi/2, pi/2]; the distance is mapped linearly onto [0, pi], saturating
    at ``d_scale_km``.
    """
    if not d_scale_km > 0:
        raise ValueError(f"d_scale_km must be positive, got {d_scale_km}")
    return NormalizedGeo(polar.sigma / 2.0, np.pi * min(polar.d / d_scale_km, 1.0))


def normalize_geo_batch(
    d_km: np.ndarray, sigma_rad: np.ndarray, d_scale_km: float | np.ndarray
) -> NormalizedGeo:
    """Vectorized :func:`normalize_geo`; ``d_scale_km`` may vary per entry."""
    scale = np.asarray(d_scale_km, dtype=float)
    if not np.all(scale > 0):
        raise ValueError("d_scale_km must be positive")
    d_norm = np.pi * np.minimum(np.asarray(d_km, dtype=float) / scale, 1.0)
    return NormalizedGeo(np.asarray(sigma_rad, dtype=float) / 2.0, d_norm)


def build_geo_vector(
    r2: np.ndarray,
    geo: NormalizedGeo,
    alpha: float,
    beta: float,
    attributes: frozenset[str] | set[str] = frozenset(ALL_ATTRIBUTES),
) -> np.ndarray:
    """Stack rotated copies of ``r2`` for the active geo attributes.

    Each attribute contributes one blockwise-rotated copy, concatenated in
    the canonical order sigma+, sigma-, d+, d-:

        sigma+ -> R(+alpha * sigma_norm) r2      sigma- -> R(-alpha * sigma_norm) r2
        d+     -> R(+beta * d_norm) r2           d-     -> R(-beta * d_norm) r2

    The full set therefore yields [T_{alpha*sigma}(r2); T_{beta*d}(r2)] in
    R^{4M}; an opposite-sign pair is exactly one mirror transform (2M). A
    single attribute is stacked with the unrotated copy so every reduced
    variant keeps dimension 2M and stays comparable.

    ``r2`` may be a single vector (M,) or a batch (N, M); array-valued
    ``geo`` fields pair angles with batch rows.
    """
    unknown = set(attributes) - set(ALL_ATTRIBUTES)
    if unknown:
        raise ValueError(f"unknown geo attributes: {sorted(unknown)}")
    if not attributes:
        raise ValueError("at least one geo attribute is required")
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    r2 = np.asarray(r2, dtype=float)
    sigma = np.asarray(geo.sigma_norm, dtype=float)
    d = np.asarray(geo.d_norm, dtype=float)
    angles = {
        ATTR_SIGMA_FWD: alpha * sigma,
        ATTR_SIGMA_REV: -alpha * sigma,
        ATTR_DIST_FWD: beta * d,
        ATTR_DIST_REV: -beta * d,
    }
    blocks = [rotate_blockwise(r2, angles[a]) for a in ALL_ATTRIBUTES if a in attributes]
    if len(blocks) == 1:
        blocks.append(np.broadcast_to(r2, blocks[0].shape).copy())
    return np.concatenate(blocks, axis=-1)


def _mirror_duplicate(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v, v], axis=-1)


def verify_inner_product_identity(trials: int, m: int, seed: int = 0) -> float:
    """Numerically check <T_a(u), T_b(v)> == cos(a-b) * <[u;u], [v;v]>.

    Runs ``trials`` random draws of u, v in R^{2m} (standard normal) and
    angles uniform in (-pi, pi]. Returns the worst error relative to the
    product of the transformed norms (the natural scale of the inner
    product), so near-orthogonal draws do not inflate the result.
    """
    if trials < 1 or m < 1:
        raise ValueError("trials and m must be >= 1")
    rng = np.random.default_rng(seed)
    dim = 2 * m
    u = rng.standard_normal((trials, dim))
    v = rng.standard_normal((trials, dim))
    th1 = rng.uniform(-np.pi, np.pi, size=trials)
    th2 = rng.uniform(-np.pi, np.pi, size=trials)
    tu = mirror_transform(u, th1)
    tv = mirror_transform(v, th2)
    lhs = np.sum(tu * tv, axis=-1)
    rhs = np.cos(th1 - th2) * np.sum(_mirror_duplicate(u) * _mirror_duplicate(v), axis=-1)
    scale = np.linalg.norm(tu, axis=-1) * np.linalg.norm(tv, axis=-1)
    return float(np.max(np.abs(lhs - rhs) / scale))


def verify_distance_shift_identity(trials: int, m: int, seed: int = 0) -> float:
    """Numerically check the cosine-distance shift of the mirror transform.

    For random u, v and angles a, b the distance change
    D_cos(T_a(u), T_b(v)) - D_cos([u;u], [v;v]) must equal
    2 * cos_sim(u, v) * sin^2((a - b)/2). Returns the worst absolute error.
    """
    if trials < 1 or m < 1:
        raise ValueError("trials and m must be >= 1")
    rng = np.random.default_rng(seed)
    dim = 2 * m
    u = rng.standard_normal((trials, dim))
    v = rng.standard_normal((trials, dim))
    th1 = rng.uniform(-np.pi, np.pi, size=trials)
    th2 = rng.uniform(-np.pi, np.pi, size=trials)
    tu = mirror_transform(u, th1)
    tv = mirror_transform(v, th2)
    cos_before = _cosine(_mirror_duplicate(u), _mirror_duplicate(v))
    cos_after = _cosine(tu, tv)
    delta = (1.0 - cos_after) - (1.0 - cos_before)
    expected = 2.0 * cos_before * np.sin((th1 - th2) / 2.0) ** 2
    return float(np.max(np.abs(delta - expected)))


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))
