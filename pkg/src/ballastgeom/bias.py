"""Polynomial depth-bias estimation and removal.

The sensor's spatial distortion is modeled as a quadratic surface over
normalized pixel coordinates; it is fit to sleeper-aligned samples with
RANSAC, refined by least squares on the inlier set, smoothed over time with
an EMA, and subtracted from the raw depth with the constant term preserved
(only relative heights matter downstream, and keeping the offset avoids
collapsing the depth range).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import BiasParams, CoordNorm, DepthFrame, PipelineConfig, SleeperSamples
from .sleepers import TooFewSamplesError

MIN_RANSAC_SAMPLES = 12
MINIMAL_SUBSET = 6  # exactly determines the 6-coefficient surface


class DegenerateGeometryError(ValueError):
    """Sample geometry cannot constrain all six surface coefficients."""


class FitFailedError(ValueError):
    """RANSAC could not produce a usable bias surface for this frame."""


class IncompatibleNormalizationError(ValueError):
    """EMA update mixing coefficients fit under different normalizations."""


def design_row(x: float, y: float, norm: CoordNorm) -> np.ndarray:
    """(x', y', x'^2, y'^2, x'y', 1) for normalized coordinates."""
    xn, yn = norm.apply(x, y)
    return np.array([xn, yn, xn * xn, yn * yn, xn * yn, 1.0])


def design_matrix(xs, ys, norm: CoordNorm) -> np.ndarray:
    xn, yn = norm.apply(xs, ys)
    xn = np.ravel(xn)
    yn = np.ravel(yn)
    return np.column_stack([xn, yn, xn * xn, yn * yn, xn * yn, np.ones_like(xn)])


def eval_bias(params: BiasParams, x, y):
    """Bias surface value in meters at pixel (x, y); accepts arrays."""
    xn, yn = params.norm.apply(x, y)
    t = params.theta
    return t[0] * xn + t[1] * yn + t[2] * xn * xn + t[3] * yn * yn + t[4] * xn * yn + t[5]


def spatial_bias(params: BiasParams, x, y):
    """The spatially varying part of the bias (full surface minus the constant)."""
    xn, yn = params.norm.apply(x, y)
    t = params.theta
    return t[0] * xn + t[1] * yn + t[2] * xn * xn + t[3] * yn * yn + t[4] * xn * yn


def ls_fit(samples: SleeperSamples, norm: CoordNorm) -> BiasParams:
    """Least-squares surface fit via SVD-based lstsq (never raw normal equations).

    Minimizing the variance of the corrected depths over a planar sleeper set
    is equivalent to this fit: the mean level is absorbed by the constant
    coefficient.
    """
    n = len(samples)
    if n < MINIMAL_SUBSET:
        raise TooFewSamplesError(f"least-squares fit needs >= {MINIMAL_SUBSET} samples, got {n}")
    a = design_matrix(samples.x, samples.y, norm)
    theta, _, rank, _ = np.linalg.lstsq(a, samples.z, rcond=None)
    if rank < MINIMAL_SUBSET:
        raise DegenerateGeometryError(f"design matrix rank {rank} < {MINIMAL_SUBSET}; sample geometry degenerate")
    return BiasParams(theta=theta, norm=norm)


def _fit_rms(a: np.ndarray, z: np.ndarray, idx: np.ndarray) -> float:
    """RMS residual of a least-squares refit on the indexed subset (inf if degenerate)."""
    theta, _, rank, _ = np.linalg.lstsq(a[idx], z[idx], rcond=None)
    if rank < MINIMAL_SUBSET:
        return float("inf")
    r = z[idx] - a[idx] @ theta
    return float(np.sqrt(np.mean(r * r)))


def ransac_fit(
    samples: SleeperSamples, cfg: PipelineConfig, rng: np.random.Generator, norm: CoordNorm
) -> tuple[BiasParams, np.ndarray]:
    """Robust bias-surface fit: minimal 6-sample hypotheses, inlier counting
    at the residual tolerance t_res, then least-squares refinement on the
    winning inlier set.

    Ties on inlier count prefer the smaller refit RMS, then the earlier
    iteration. Deterministic for a given rng state. Returns (params, inlier
    mask over the input samples).
    """
    n = len(samples)
    if n < MIN_RANSAC_SAMPLES:
        raise TooFewSamplesError(f"RANSAC needs >= {MIN_RANSAC_SAMPLES} samples, got {n}")
    a = design_matrix(samples.x, samples.y, norm)
    z = samples.z

    best_count = -1
    best_inliers: Optional[np.ndarray] = None
    best_rms: Optional[float] = None  # computed lazily, only on ties
    any_candidate = False

    for _ in range(cfg.ransac_iters):
        idx = rng.choice(n, size=MINIMAL_SUBSET, replace=False)
        try:
            theta = np.linalg.solve(a[idx], z[idx])
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(theta)):
            continue
        any_candidate = True
        inliers = np.abs(z - a @ theta) < cfg.t_res
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
            best_rms = None
        elif count == best_count and count >= MINIMAL_SUBSET:
            if best_rms is None:
                best_rms = _fit_rms(a, z, np.nonzero(best_inliers)[0])
            rms = _fit_rms(a, z, np.nonzero(inliers)[0])
            if rms < best_rms:
                best_inliers = inliers
                best_rms = rms

    if not any_candidate:
        raise FitFailedError("all RANSAC draws were degenerate")
    if best_count < MINIMAL_SUBSET:
        raise FitFailedError(f"best inlier count {best_count} below the minimal subset size")

    try:
        refined = ls_fit(samples.subset(best_inliers), norm)
    except DegenerateGeometryError as exc:
        raise FitFailedError(f"winning inlier set is degenerate: {exc}") from exc
    return refined, best_inliers


@dataclass
class EmaState:
    """Temporal smoothing state; theta_prev is absent before the first fit."""

    theta_prev: Optional[BiasParams] = None
    frame_counter: int = 0


def ema_update(state: EmaState, theta_raw: BiasParams, lam: float) -> BiasParams:
    """Fold one frame's raw fit into the exponential moving average.

    First successful frame initializes the average at the raw value.
    """
    if state.theta_prev is None:
        smoothed = theta_raw
    else:
        if state.theta_prev.norm != theta_raw.norm:
            raise IncompatibleNormalizationError(
                f"EMA state norm {state.theta_prev.norm} != incoming {theta_raw.norm}"
            )
        smoothed = BiasParams(
            theta=lam * theta_raw.theta + (1.0 - lam) * state.theta_prev.theta,
            norm=theta_raw.norm,
        )
    state.theta_prev = smoothed
    state.frame_counter += 1
    return smoothed


def apply_correction(frame: DepthFrame, params: BiasParams) -> DepthFrame:
    """Subtract the spatially varying bias terms from every valid pixel.

    The constant coefficient is intentionally preserved, so a pure-offset
    surface leaves the frame untouched.
    """
    t = params.theta
    if t[0] == 0.0 and t[1] == 0.0 and t[2] == 0.0 and t[3] == 0.0 and t[4] == 0.0:
        return DepthFrame(frame.width, frame.height, frame.data.copy(), frame.validity.copy())
    xs = np.arange(frame.width, dtype=np.float64)
    ys = np.arange(frame.height, dtype=np.float64)
    surf = spatial_bias(params, xs[None, :], ys[:, None])
    data = np.where(frame.validity, frame.data - surf, frame.data)
    return DepthFrame(frame.width, frame.height, data, frame.validity.copy())
