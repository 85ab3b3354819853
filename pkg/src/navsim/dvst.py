"""Dimension-variable skill transfer between circular robots.

Observations of a robot with radius R_s are rescaled into the frame of the
trained meta-robot (radius R_m) by the ratio R_m/R_s; the meta controller's
velocity command is then mapped back so the scaled robot traces an arc
geometrically similar to the meta arc (ratio R_s/R_m), truncated to respect
the scaled robot's velocity bounds.  The closed-form mapping is certified by
an independent grid-search oracle over the velocity space.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .env import LidarConfig, Observation, PreprocessConfig, preprocess
from .vehicle import DimensionalConfig, VelocityCommand


@dataclass(frozen=True)
class TransferContext:
    """Fixed data of one transfer: the meta robot, the scaled robot, the control cycle."""

    meta: DimensionalConfig
    scaled: DimensionalConfig
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")

    @property
    def obs_ratio(self) -> float:
        """Factor applied to distance-dependent observations (scaled frame -> meta frame)."""
        return self.meta.radius / self.scaled.radius

    @property
    def cmd_ratio(self) -> float:
        """Factor applied to the meta linear velocity (meta frame -> scaled frame)."""
        return self.scaled.radius / self.meta.radius


class TransferCase(enum.Enum):
    CURVATURE_REACHABLE_AT_VMAX = "curvature_reachable_at_vmax"
    CURVATURE_UNREACHABLE_AT_VMAX = "curvature_unreachable_at_vmax"
    STRAIGHT = "straight"
    SPIN = "spin"
    HALT = "halt"


@dataclass(frozen=True)
class TransferResult:
    """Ideal (similarity-scaled) velocities and the bound-respecting output command.

    rho_ideal is the signed ideal turn radius v_ideal/omega_ideal; it is +inf
    for the straight case and 0.0 for the degenerate spin/halt cases (the
    case tag disambiguates).
    """

    v_ideal: float
    omega_ideal: float
    rho_ideal: float
    v_out: float
    omega_out: float
    case: TransferCase

    @property
    def command(self) -> VelocityCommand:
        return VelocityCommand(self.v_out, self.omega_out)


def transfer_observation(obs: Observation, ctx: TransferContext, lidar: LidarConfig) -> Observation:
    """Rescale a raw observation of the scaled robot into the meta frame.

    Distance-dependent entries (lidar distances, goal distance, linear
    velocity) are multiplied by R_m/R_s; angles and angular velocity are
    dimension-independent and pass through.  Rescaled lidar distances are
    clamped into the meta sensor's range, which the meta agent never exceeds.
    The observation must hold raw distances: rescaling must happen before any
    distance preprocessing, which does not commute with scaling.
    """
    k = ctx.obs_ratio
    scan = np.clip(obs.raw_scan * k, lidar.d_min, lidar.d_max)
    return Observation(
        scan=scan,
        raw_scan=scan,
        goal_dist=obs.goal_dist * k,
        goal_angle=obs.goal_angle,
        v=obs.v * k,
        omega=obs.omega,
        radius=ctx.meta.radius,
    )


def transfer_policy(v_m: float, omega_m: float, ctx: TransferContext) -> TransferResult:
    """Map a meta velocity command onto the scaled robot's velocity bounds.

    The ideal command scales the linear velocity by R_s/R_m and keeps the
    angular velocity, so the one-cycle arc is similar to the meta arc.  When
    the ideal command exceeds the bounds, the output keeps the ideal turn
    radius and maximizes arc length: if the ideal radius is reachable at full
    linear speed (v_max/omega_max <= |rho|), cap v and derive omega from the
    radius; otherwise cap |omega| and derive v.
    """
    if v_m < 0:
        raise ValueError(f"forward-only robot: v_m must be >= 0, got {v_m}")
    s = ctx.scaled
    v_ideal = ctx.cmd_ratio * v_m
    w_ideal = omega_m

    if v_ideal == 0.0 and w_ideal == 0.0:
        return TransferResult(0.0, 0.0, 0.0, 0.0, 0.0, TransferCase.HALT)
    if v_ideal == 0.0:
        w = math.copysign(min(s.omega_max, abs(w_ideal)), w_ideal)
        return TransferResult(v_ideal, w_ideal, 0.0, 0.0, w, TransferCase.SPIN)
    if w_ideal == 0.0:
        return TransferResult(
            v_ideal, 0.0, math.inf, min(v_ideal, s.v_max), 0.0, TransferCase.STRAIGHT
        )

    rho = v_ideal / w_ideal
    if s.v_max / s.omega_max <= abs(rho):
        v = min(v_ideal, s.v_max)
        # Taking omega_ideal directly when v is unconstrained keeps the
        # identity transfer bit-exact (v/rho would reintroduce rounding).
        w = w_ideal if v == v_ideal else v / rho
        case = TransferCase.CURVATURE_REACHABLE_AT_VMAX
    else:
        w_mag = min(s.omega_max, abs(w_ideal))
        w = math.copysign(w_mag, w_ideal)
        v = v_ideal if w_mag == abs(w_ideal) else w * rho
        case = TransferCase.CURVATURE_UNREACHABLE_AT_VMAX
    # Guard the <= 1 ulp overshoot that v/rho round-trips can produce.
    v = min(max(v, 0.0), s.v_max)
    w = min(max(w, -s.omega_max), s.omega_max)
    return TransferResult(v_ideal, w_ideal, rho, v, w, case)


def oracle_transfer(
    v_m: float, omega_m: float, ctx: TransferContext, grid_n: int = 2000
) -> tuple[float, float]:
    """Brute-force reference for :func:`transfer_policy` over a velocity grid.

    Searches the grid_n x grid_n lattice over [0, v_max] x [-omega_max,
    omega_max] and keeps lattice points whose surrounding cell (one grid step
    per axis, i.e. a window two steps wide) contains a velocity pair that
    satisfies the raw transfer constraints: turn radius equal to the ideal
    radius, arc no longer than the ideal arc (v <= v_ideal), and both bounds.
    Returns the feasible point with maximum linear velocity, breaking ties
    toward the exact ideal-radius line.  Grids finer than 1000 points per
    axis keep the cell window tight enough for certification; coarser grids
    are allowed but warn.
    """
    if grid_n < 2:
        raise ValueError(f"grid_n must be >= 2, got {grid_n}")
    if grid_n < 1000:
        warnings.warn(
            f"oracle grid_n={grid_n} is below the certified resolution (1000); "
            "tolerance windows may be loose",
            stacklevel=2,
        )
    if v_m < 0:
        raise ValueError(f"forward-only robot: v_m must be >= 0, got {v_m}")

    s = ctx.scaled
    v_ideal = ctx.cmd_ratio * v_m
    w_ideal = omega_m
    dv = s.v_max / (grid_n - 1)
    dw = 2 * s.omega_max / (grid_n - 1)
    w_grid = np.linspace(-s.omega_max, s.omega_max, grid_n)

    if v_ideal == 0.0 and w_ideal == 0.0:
        return (0.0, 0.0)

    if v_ideal == 0.0:
        # Zero-length trajectory: any rotation between zero and the ideal one
        # (clipped at the bound) stays within the ideal spin.
        w_cap = min(s.omega_max, abs(w_ideal))
        lo, hi = (0.0, w_cap) if w_ideal > 0 else (-w_cap, 0.0)
        ok = (w_grid >= lo - dw) & (w_grid <= hi + dw)
        cands = w_grid[ok]
        return (0.0, float(cands[np.argmax(np.abs(cands))]))

    v_cont = min(v_ideal, s.v_max)

    if w_ideal == 0.0:
        rows = np.abs(w_grid) <= dw
        i = min(int(math.floor((v_cont + dv) / dv)), grid_n - 1)
        w_best = w_grid[rows][np.argmin(np.abs(w_grid[rows]))]
        return (float(i * dv), float(w_best))

    kappa = w_ideal / v_ideal
    # Exact feasible set: the segment omega = kappa * v with 0 <= v <= v_cont
    # and |omega| <= omega_max.  Per grid row, intersect that segment with the
    # row's omega window to get the v-interval visible from the row.
    lo = (w_grid - dw) / kappa
    hi = (w_grid + dw) / kappa
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    lo = np.maximum(lo, 0.0)
    hi = np.minimum(hi, v_cont)
    hi = np.minimum(hi, s.omega_max / abs(kappa))
    valid = lo <= hi
    if not np.any(valid):
        raise RuntimeError("no feasible grid point: curvature window too tight for this grid")

    # Highest grid v whose one-step window reaches the row's interval.
    idx = np.floor((hi + dv) / dv).astype(int).clip(0, grid_n - 1)
    v_rows = np.where(valid, idx * dv, -1.0)
    v_best = v_rows.max()
    tied = np.flatnonzero(v_rows >= v_best - 1e-15)
    w_best = w_grid[tied[np.argmin(np.abs(w_grid[tied] - kappa * v_best))]]
    return (float(v_best), float(w_best))


MetaPolicy = Callable[[Observation], VelocityCommand]
ScaledPolicy = Callable[[Observation], VelocityCommand]


def wrap_policy(
    meta_policy: MetaPolicy,
    ctx: TransferContext,
    lidar: LidarConfig,
    pp: PreprocessConfig,
) -> ScaledPolicy:
    """Compose a controller for the scaled robot around a trained meta policy.

    The returned controller expects raw-distance observations; it rescales
    them into the meta frame, applies the meta agent's input preprocessing,
    queries the meta policy, and maps the resulting command back through
    :func:`transfer_policy`.  Stateless beyond ctx.
    """

    def controller(obs: Observation) -> VelocityCommand:
        obs_m = transfer_observation(obs, ctx, lidar)
        if pp.enabled:
            obs_m = replace(obs_m, scan=preprocess(obs_m.raw_scan, pp))
        cmd_m = meta_policy(obs_m)
        return transfer_policy(cmd_m.v, cmd_m.omega, ctx).command

    return controller
