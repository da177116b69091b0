"""Safe elimination of inactive atoms from dual-space regions.

Every test here is *safe*: it only flags coefficients that are provably zero
in the optimal solution, so removing the flagged columns leaves the optimum
unchanged. A test is built from a region of observation space guaranteed to
contain the dual optimum; with spheres (and one dome-shaped refinement) the
worst-case correlation over the region has a closed form, giving a cheap
per-atom certificate. Feeding the region a fresh dual point every iteration
shrinks its radius, which is what makes per-iteration screening profitable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .problems import GROUP, LASSO, lambda_max

SAFE = "safe"
DST3 = "dst3"
DOME = "dome"
GSAFE = "gsafe"
GST3 = "gst3"

LASSO_TESTS = (SAFE, DST3, DOME)
GROUP_TESTS = (GSAFE, GST3)
ALL_TESTS = LASSO_TESTS + GROUP_TESTS

# Pre-clamp values of a squared radius below this are treated as a logic error
# rather than roundoff.
RADIUS_GUARD = 1e-8

# An atom is eliminated only if it clears its bound by this margin (in units of
# dual correlation). The extremal atom sits exactly on the shifted tests'
# bounds, so with exact arithmetic it can never be screened; without a floor,
# one ulp of roundoff decides its fate. Requiring a margin can only shrink the
# screened set, so safety is never at risk.
SCREEN_MARGIN = 1e-12

_CORR_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class SphereRegion:
    """Sphere known to contain the dual optimum.

    `center_correlations` holds the correlations of the *original* dictionary
    columns with the center, so tests on a reduced problem just index into it.
    """

    center: np.ndarray
    radius: float
    center_correlations: np.ndarray


@dataclass(frozen=True)
class DomeParams:
    """Inputs of the dome test: both correlation profiles plus the radius.

    `star_correlations` are correlations with the extremal atom,
    `y_correlations` with the observation; the tested quantity per atom is its
    observation correlation, bracketed by two bounds built from the other two
    fields. `radius` is the shifted (bounding-sphere) radius; the enclosing
    sphere radius and the cut fraction of the dome are recovered from it and
    ``lambda_star / lam - 1``.
    """

    lam: float
    lambda_star: float
    star_correlations: np.ndarray
    y_correlations: np.ndarray
    radius: float

    def __post_init__(self):
        for name in ("star_correlations", "y_correlations"):
            arr = getattr(self, name)
            if arr.size and float(np.max(np.abs(arr))) > 1.0 + _CORR_BOUND_TOL:
                raise ValueError(f"{name} must lie in [-1, 1] up to roundoff")


@dataclass(frozen=True)
class ScreenState:
    """Monotone record of eliminated column indices and their complement."""

    eliminated: np.ndarray
    kept: np.ndarray
    test_kind: str | None = None

    @classmethod
    def initial(cls, k, test_kind=None):
        return cls(
            eliminated=np.empty(0, dtype=np.int64),
            kept=np.arange(k, dtype=np.int64),
            test_kind=test_kind,
        )

    @property
    def size(self):
        return self.eliminated.size + self.kept.size


def screen_update(state, mask):
    """Fold a new elimination mask (aligned with ``state.kept``) into the state."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (state.kept.size,):
        raise ValueError("mask must align with the kept index set")
    if not mask.any():
        return state
    eliminated = np.union1d(state.eliminated, state.kept[mask])
    return ScreenState(eliminated=eliminated, kept=state.kept[~mask], test_kind=state.test_kind)


def _clip_ratio(problem, theta, bound):
    """Projection of theta's best scaling onto the feasible segment [-bound, bound]."""
    theta = np.asarray(theta, dtype=np.float64)
    sq = float(theta @ theta)
    if sq == 0.0:
        return 0.0, np.zeros_like(problem.y)
    ratio = float(theta @ problem.y) / (problem.lam * sq)
    mu = float(np.clip(ratio, -bound, bound))
    return mu, mu * theta


def dual_scale_lasso(problem, theta, corr_inf=None):
    """Best feasible scaling of a dual candidate for the l1 constraints.

    Returns ``(mu, mu * theta)`` where mu is the scaling of theta closest to
    ``y / lam`` among those with all atom correlations in [-1, 1]. `corr_inf`
    is ``max_i |a_i . theta|`` over the atoms still in play; by default it is
    computed on the full dictionary.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if corr_inf is None:
        corr_inf = float(np.max(np.abs(problem.dictionary.correlate(theta)), initial=0.0))
    if corr_inf < 0:
        raise ValueError("corr_inf must be nonnegative")
    bound = np.inf if corr_inf == 0.0 else 1.0 / corr_inf
    return _clip_ratio(problem, theta, bound)


def dual_scale_group(problem, theta, group_corr_norms=None, group_weights=None):
    """Best feasible scaling of a dual candidate for the group constraints.

    `group_corr_norms` holds ``||D_g.T theta||`` for the groups still in play
    (matched by `group_weights`); by default both come from the problem's full
    partition. The feasible segment is ``[-s, s]`` with
    ``s = min_g w_g / ||D_g.T theta||``.
    """
    if problem.kind != GROUP:
        raise ValueError("dual_scale_group needs a group problem")
    theta = np.asarray(theta, dtype=np.float64)
    if group_corr_norms is None:
        group_corr_norms = problem.partition.group_norms(problem.dictionary.correlate(theta))
        group_weights = problem.partition.weights
    if group_weights is None:
        group_weights = problem.partition.weights
    norms = np.asarray(group_corr_norms, dtype=np.float64)
    weights = np.asarray(group_weights, dtype=np.float64)
    if norms.shape != weights.shape:
        raise ValueError("group_corr_norms and group_weights must align")
    active = norms > 0.0
    bound = float(np.min(weights[active] / norms[active])) if active.any() else np.inf
    return _clip_ratio(problem, theta, bound)


class ScreeningContext:
    """Per-solve precomputation shared by every region construction.

    All full-dictionary correlations used by the tests (with the observation,
    the extremal atom, and the shifted sphere centers) are computed once here;
    per-iteration work is then a handful of O(N + kept) vector operations.
    """

    def __init__(self, problem, lmax=None):
        self.problem = problem
        self.lmax = lmax if lmax is not None else lambda_max(problem)
        self.y_corr = problem.dictionary.correlate(problem.y)

    # -- shared scalar machinery -------------------------------------------

    def _check_nontrivial(self):
        if self.problem.lam > self.lmax.value:
            raise ValueError(
                "penalty exceeds the trivial-solution threshold; screen everything instead"
            )

    def _safe_radius_sq(self, theta, corr_inf=None, group_corr_norms=None, group_weights=None):
        if self.problem.kind == LASSO:
            mu, v = dual_scale_lasso(self.problem, theta, corr_inf=corr_inf)
        else:
            mu, v = dual_scale_group(
                self.problem, theta, group_corr_norms=group_corr_norms, group_weights=group_weights
            )
        diff = self.problem.y / self.problem.lam - v
        return float(diff @ diff), mu, v

    def _shifted_radius(self, radius_sq, shift_sq):
        arg = radius_sq - shift_sq
        if arg < -RADIUS_GUARD:
            raise RuntimeError(
                f"squared screening radius fell to {arg!r}; region construction is inconsistent"
            )
        return float(np.sqrt(max(arg, 0.0)))

    # -- cached geometry ----------------------------------------------------

    @cached_property
    def safe_center(self):
        return self.problem.y / self.problem.lam

    @cached_property
    def safe_center_corr(self):
        return self.y_corr / self.problem.lam

    @cached_property
    def star_corr(self):
        return self.problem.dictionary.correlate(self.lmax.atom)

    @cached_property
    def dst3_shift(self):
        return self.lmax.value / self.problem.lam - 1.0

    @cached_property
    def dst3_center(self):
        return self.safe_center - self.dst3_shift * self.lmax.atom

    @cached_property
    def dst3_center_corr(self):
        return self.safe_center_corr - self.dst3_shift * self.star_corr

    @cached_property
    def gsafe_center_group_norms(self):
        return self.problem.partition.group_norms(self.safe_center_corr)

    @cached_property
    def _gst3_geometry(self):
        part = self.problem.partition
        g = self.lmax.group
        idx = part.groups[g]
        sub = self.problem.dictionary.data[:, idx]
        normal = sub @ (sub.T @ self.problem.y) / self.lmax.value
        normal_sq = float(normal @ normal)
        if normal_sq == 0.0:
            raise RuntimeError("degenerate extremal group: zero tangent normal")
        coef = float(normal @ self.problem.y) / self.problem.lam - float(part.weights[g]) ** 2
        center = self.safe_center - (coef / normal_sq) * normal
        center_corr = self.safe_center_corr - (coef / normal_sq) * self.problem.dictionary.correlate(normal)
        shift_sq = coef * coef / normal_sq
        return center, center_corr, shift_sq

    @cached_property
    def gst3_center_group_norms(self):
        return self.problem.partition.group_norms(self._gst3_geometry[1])

    # -- region builders ----------------------------------------------------

    def region_safe(self, theta, corr_inf=None):
        rsq, _, _ = self._safe_radius_sq(theta, corr_inf=corr_inf)
        return SphereRegion(self.safe_center, float(np.sqrt(rsq)), self.safe_center_corr)

    def region_dst3(self, theta, corr_inf=None):
        self._check_nontrivial()
        rsq, _, _ = self._safe_radius_sq(theta, corr_inf=corr_inf)
        radius = self._shifted_radius(rsq, self.dst3_shift**2)
        return SphereRegion(self.dst3_center, radius, self.dst3_center_corr)

    def dome_params(self, theta, corr_inf=None):
        self._check_nontrivial()
        rsq, _, _ = self._safe_radius_sq(theta, corr_inf=corr_inf)
        radius = self._shifted_radius(rsq, self.dst3_shift**2)
        return DomeParams(
            lam=self.problem.lam,
            lambda_star=self.lmax.value,
            star_correlations=self.star_corr,
            y_correlations=self.y_corr,
            radius=radius,
        )

    def region_gsafe(self, theta, group_corr_norms=None, group_weights=None):
        rsq, _, _ = self._safe_radius_sq(
            theta, group_corr_norms=group_corr_norms, group_weights=group_weights
        )
        return SphereRegion(self.safe_center, float(np.sqrt(rsq)), self.safe_center_corr)

    def region_gst3(self, theta, group_corr_norms=None, group_weights=None):
        self._check_nontrivial()
        center, center_corr, shift_sq = self._gst3_geometry
        rsq, _, _ = self._safe_radius_sq(
            theta, group_corr_norms=group_corr_norms, group_weights=group_weights
        )
        radius = self._shifted_radius(rsq, shift_sq)
        return SphereRegion(center, radius, center_corr)

    def region(self, kind, theta, corr_inf=None, group_corr_norms=None, group_weights=None):
        if kind == SAFE:
            return self.region_safe(theta, corr_inf=corr_inf)
        if kind == DST3:
            return self.region_dst3(theta, corr_inf=corr_inf)
        if kind == DOME:
            return self.dome_params(theta, corr_inf=corr_inf)
        if kind == GSAFE:
            return self.region_gsafe(theta, group_corr_norms, group_weights)
        if kind == GST3:
            return self.region_gst3(theta, group_corr_norms, group_weights)
        raise ValueError(f"unknown screening test {kind!r}")

    def static_region(self, kind):
        """Region for the screen-once strategy, built from the observation itself."""
        if self.problem.kind == LASSO:
            corr_inf = float(np.max(np.abs(self.y_corr)))
            return self.region(kind, self.problem.y, corr_inf=corr_inf)
        norms = self.problem.partition.group_norms(self.y_corr)
        return self.region(kind, self.problem.y, group_corr_norms=norms)

    def center_group_norms(self, kind):
        if kind == GSAFE:
            return self.gsafe_center_group_norms
        if kind == GST3:
            return self.gst3_center_group_norms
        raise ValueError(f"not a group test: {kind!r}")


# -- standalone builders (one-shot convenience over ScreeningContext) --------


def region_safe(problem, theta, corr_inf=None, lmax=None):
    return ScreeningContext(problem, lmax).region_safe(theta, corr_inf=corr_inf)


def region_dst3(problem, theta, corr_inf=None, lmax=None):
    return ScreeningContext(problem, lmax).region_dst3(theta, corr_inf=corr_inf)


def dome_params(problem, theta, corr_inf=None, lmax=None):
    return ScreeningContext(problem, lmax).dome_params(theta, corr_inf=corr_inf)


def region_gsafe(problem, theta, group_corr_norms=None, group_weights=None, lmax=None):
    return ScreeningContext(problem, lmax).region_gsafe(theta, group_corr_norms, group_weights)


def region_gst3(problem, theta, group_corr_norms=None, group_weights=None, lmax=None):
    return ScreeningContext(problem, lmax).region_gst3(theta, group_corr_norms, group_weights)


# -- tests --------------------------------------------------------------------


def test_sphere_lasso(region, kept):
    """Per-atom elimination mask over `kept` for a sphere region.

    Atom i is flagged iff ``1 - |a_i . center| > radius`` with at least
    `SCREEN_MARGIN` to spare, i.e. its worst-case correlation over the sphere
    stays clearly below the dual bound.
    """
    corr = region.center_correlations[kept]
    return (1.0 - np.abs(corr)) - region.radius > SCREEN_MARGIN


def test_dome(dp, kept):
    """Per-atom elimination mask for the dome refinement.

    Flags atom i iff its observation correlation lies strictly between two
    bounds built from its extremal-atom correlation. The bounds maximize the
    correlation over the dome exactly: the flat branches ``+-lam * (1 - r)``
    (r the enclosing-sphere radius) apply beyond the dome's cut fraction
    ``d = shift / r``, the curved branches elsewhere. At the screen-once dual
    point this reproduces the classic static dome test, where d equals the
    trivial-solution threshold itself. Degenerate radii (``radius >= 1``)
    flag nothing.
    """
    if dp.radius >= 1.0:
        return np.zeros(len(kept), dtype=bool)
    t = dp.star_correlations[kept]
    u = dp.y_correlations[kept]
    lam = dp.lam
    shift = dp.lambda_star / lam - 1.0
    r_sphere = float(np.hypot(dp.radius, shift))
    cut = shift / r_sphere if r_sphere > 0.0 else 0.0
    arc = lam * dp.radius * np.sqrt(np.maximum(1.0 - t * t, 0.0))
    slope = dp.lambda_star - lam
    flat = lam * (1.0 - r_sphere)
    lower = np.where(t < cut, slope * t - lam + arc, -flat)
    upper = np.where(t <= -cut, flat, slope * t + lam - arc)
    margin = lam * SCREEN_MARGIN
    return (u - lower > margin) & (upper - u > margin)


def test_sphere_group(region, partition, kept_groups, center_group_norms=None):
    """Per-group elimination mask over `kept_groups` for a sphere region.

    Group g is flagged iff ``(w_g - ||D_g.T center||) / ||D_g|| > radius``.
    `center_group_norms` may carry the precomputed full-partition norms of the
    region's center correlations.
    """
    kept_groups = np.asarray(kept_groups, dtype=np.int64)
    if center_group_norms is None:
        center_group_norms = partition.group_norms(region.center_correlations)
    w = partition.weights[kept_groups]
    c = np.asarray(center_group_norms)[kept_groups]
    s = partition.spectral_norms[kept_groups]
    return (w - c) / s - region.radius > SCREEN_MARGIN


def group_mask_to_index_mask(partition, kept, kept_groups, group_mask):
    """Expand a per-group mask to the per-index mask over `kept`."""
    kept = np.asarray(kept, dtype=np.int64)
    kept_groups = np.asarray(kept_groups, dtype=np.int64)
    gids = partition.group_of[kept]
    pos = np.searchsorted(kept_groups, gids)
    return np.asarray(group_mask, dtype=bool)[pos]
