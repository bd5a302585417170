"""Reference-plane reconstruction and ballast sufficiency classification.

Inside each rotated box the expected surface is linearly interpolated (in the
box-local v coordinate) between depth profiles sampled along the sleeper-
adjacent top and bottom edges. Residuals of the corrected depth against this
plane drive two criteria: a global depressed-area fraction and a per-column
depressed fraction inside the sleeper-adjacent edge bands. An optional
external detector vote is OR-fused with both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .maskgeom import bilinear_many, from_local
from .model import (
    DepthFrame,
    PipelineConfig,
    RBox,
    RegionDetection,
    RegionVerdict,
    verdict_label,
)


class ProfileStarvedError(ValueError):
    """Edge-profile coverage too poor for geometric analysis."""


class IndeterminateGeometryError(ValueError):
    """No usable residual cells for a criterion."""


@dataclass
class EdgeProfiles:
    """Depth profiles along the box's top (v=0) and bottom (v=height) edges.

    Entries are NaN where no valid sample existed and no interior gap-fill
    was possible; coverage fractions are measured before gap filling.
    """

    u_grid: np.ndarray
    z_top: np.ndarray
    z_bot: np.ndarray
    coverage_top: float
    coverage_bot: float


def _band_profile(frame: DepthFrame, b: RBox, us: np.ndarray, vs: np.ndarray) -> tuple[np.ndarray, float]:
    """Median of valid bilinear samples per u column over the band rows vs."""
    uu, vv = np.meshgrid(us, vs)
    x, y = from_local(b, (uu, vv))
    vals, present = bilinear_many(frame, x, y)
    prof = np.full(us.shape, np.nan)
    has = present.any(axis=0)
    if has.any():
        stacked = np.where(present, vals, np.nan)
        prof[has] = np.nanmedian(stacked[:, has], axis=0)
    return prof, float(has.mean())


def _fill_gaps(us: np.ndarray, prof: np.ndarray) -> np.ndarray:
    """Linear interpolation across interior gaps; no extrapolation at the ends."""
    present = np.isfinite(prof)
    if present.sum() < 2:
        return prof
    filled = prof.copy()
    first, last = np.nonzero(present)[0][[0, -1]]
    interior = ~present
    interior[:first] = False
    interior[last + 1 :] = False
    if interior.any():
        filled[interior] = np.interp(us[interior], us[present], prof[present])
    return filled


def edge_profiles(frame: DepthFrame, b: RBox, band_px: int = 3) -> EdgeProfiles:
    """Extract per-u depth profiles along the box's top and bottom edges.

    Each profile entry is the median over a band_px-deep band of bilinear
    samples (a single boundary row is too fragile under sensor dropout).
    Raises ProfileStarvedError when either edge has < 50% coverage.
    """
    n_u = int(math.floor(b.width)) + 1
    us = np.arange(n_u, dtype=np.float64)
    top_vs = np.arange(band_px, dtype=np.float64)
    bot_vs = b.height - band_px + 1 + np.arange(band_px, dtype=np.float64)

    z_top, cov_top = _band_profile(frame, b, us, top_vs)
    z_bot, cov_bot = _band_profile(frame, b, us, bot_vs)
    if cov_top < 0.5 or cov_bot < 0.5:
        raise ProfileStarvedError(
            f"edge coverage too low (top {cov_top:.2f}, bottom {cov_bot:.2f}, need >= 0.50)"
        )
    return EdgeProfiles(
        u_grid=us.astype(np.int64),
        z_top=_fill_gaps(us, z_top),
        z_bot=_fill_gaps(us, z_bot),
        coverage_top=cov_top,
        coverage_bot=cov_bot,
    )


def reference_plane(prof: EdgeProfiles, b: RBox, u: int, v: float) -> float:
    """Expected depth at lattice column u and height v: linear blend of the
    edge profiles. NaN where a profile entry is absent."""
    zt = prof.z_top[u]
    zb = prof.z_bot[u]
    frac = v / b.height
    return (1.0 - frac) * zt + frac * zb


@dataclass
class ResidualMap:
    """Corrected-depth residuals against the reference plane on the box lattice.

    delta is (n_v, n_u), NaN where absent; negative values mean the surface
    sits below the expected plane.
    """

    delta: np.ndarray
    present: np.ndarray
    u_grid: np.ndarray
    v_grid: np.ndarray


def residual_map(frame: DepthFrame, b: RBox, prof: EdgeProfiles) -> ResidualMap:
    """Depth minus reference over integer (u, v) in [0, width] x [0, height]."""
    n_u = prof.u_grid.size
    n_v = int(math.floor(b.height)) + 1
    us = np.arange(n_u, dtype=np.float64)
    vs = np.arange(n_v, dtype=np.float64)
    uu, vv = np.meshgrid(us, vs)
    x, y = from_local(b, (uu, vv))
    depth, d_present = bilinear_many(frame, x, y)

    frac = vs[:, None] / b.height
    ref = (1.0 - frac) * prof.z_top[None, :] + frac * prof.z_bot[None, :]
    present = d_present & np.isfinite(ref)
    delta = np.where(present, depth - ref, np.nan)
    return ResidualMap(
        delta=delta, present=present, u_grid=prof.u_grid, v_grid=vs.astype(np.int64)
    )


def global_criterion(res: ResidualMap, t_z: float, eta1: float) -> tuple[float, bool]:
    """Criterion 1: fraction of region cells depressed by more than t_z."""
    n = int(res.present.sum())
    if n == 0:
        raise IndeterminateGeometryError("no residual cells present")
    depressed = int(np.sum(res.present & (res.delta < -t_z)))
    rho = depressed / n
    return rho, rho > eta1


def edge_gap_criterion(
    res: ResidualMap, b: RBox, kappa: float, t_z: float, eta2: float
) -> tuple[float, bool]:
    """Criterion 2: per-column depressed fraction within the sleeper-adjacent
    edge bands (thickness kappa * height at both edges); fires when any
    column exceeds eta2."""
    h_edge = kappa * b.height
    v = res.v_grid.astype(np.float64)
    band = (v < h_edge) | (v > b.height - h_edge)
    band_present = res.present[band, :]
    col_total = band_present.sum(axis=0)
    cols = col_total > 0
    if not cols.any():
        raise IndeterminateGeometryError("no edge-band cells present")
    band_depressed = (res.present & (res.delta < -t_z))[band, :].sum(axis=0)
    gamma = band_depressed[cols] / col_total[cols]
    gamma_max = float(gamma.max())
    return gamma_max, gamma_max > eta2


def classify_region(
    frame: DepthFrame, det: RegionDetection, b: RBox, cfg: PipelineConfig
) -> RegionVerdict:
    """Evaluate the enabled criteria for one region and fuse with the external vote.

    When geometry is unusable (starved profiles or empty residuals) and an
    external vote is available with CY enabled, the vote decides alone;
    otherwise the region is reported indeterminate.
    """
    rho: Optional[float] = None
    gamma_max: Optional[float] = None
    c1: Optional[bool] = None
    c2: Optional[bool] = None
    geometry_needed = cfg.use_c1 or cfg.use_c2
    geometry_failed = False

    if geometry_needed:
        try:
            prof = edge_profiles(frame, b, cfg.edge_band_px)
            res = residual_map(frame, b, prof)
            if cfg.use_c1:
                rho, c1 = global_criterion(res, cfg.t_z, cfg.eta1)
            if cfg.use_c2:
                gamma_max, c2 = edge_gap_criterion(res, b, cfg.kappa, cfg.t_z, cfg.eta2)
        except (ProfileStarvedError, IndeterminateGeometryError):
            rho = gamma_max = None
            c1 = c2 = None
            geometry_failed = True

    vote_available = cfg.use_cy and det.insufficient_vote is not None
    cy = bool(det.insufficient_vote) if vote_available else False

    if geometry_needed and geometry_failed and not vote_available:
        label = verdict_label(None, None, None, indeterminate=True)
    elif geometry_needed and geometry_failed:
        label = verdict_label(None, None, cy)  # external vote decides alone
    else:
        label = verdict_label(c1 if cfg.use_c1 else None, c2 if cfg.use_c2 else None, cy if cfg.use_cy else None)

    return RegionVerdict(
        region_id=det.region_id,
        rho=rho,
        gamma_max=gamma_max,
        c1_fired=c1,
        c2_fired=c2,
        cy_fired=cy,
        label=label,
        rbox=b,
    )
