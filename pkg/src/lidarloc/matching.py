"""Robust planar scan matching with dual correspondence search.

The matcher aligns a moving point set to a fixed one by iterating:

1. closest-point correspondences on interpolated scan segments give the
   translation estimate,
2. range-based correspondences inside a shrinking angular window give
   the rotation estimate,
3. each correspondence set is trimmed by minimizing the fractional RMS
   distance over the kept fraction, surviving pairs are distance
   weighted,
4. a closed-form weighted least-squares solve combines the two sets
   into one rigid update, which is accumulated and applied to the
   original moving points.

Iteration stops when the error drops below an absolute threshold, when
it stops improving, or when the wall-clock budget or iteration cap is
hit.  Every step can be toggled off through :class:`MatchParams`, which
is what the ablation harness uses.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateGeometry, EmptyInput, InvalidFraction, NoCorrespondences
from .geometry import Transform2D, cartesian_to_polar

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchParams:
    """Tuning knobs and feature switches for :func:`match`.

    Defaults follow the reference configuration: trim exponent 1.2,
    angular window decay 0.03 per iteration, 1 cm absolute stop and a
    50 ms wall-clock budget.
    """

    trim_exponent: float = 1.2          # lambda in the fractional RMS distance
    window_initial: float = 0.5         # B_w(0), radians
    window_decay: float = 0.03          # alpha, per iteration
    frmsd_stop: float = 0.01            # meters, absolute convergence
    delta_stop: float = 1e-4            # meters, improvement convergence
    time_budget_ms: float = 50.0
    max_iterations: int = 100
    f_grid_step: float = 0.05
    f_plateau_tolerance: float = 0.2    # near-ties in the fraction grid go to larger f
    frmsd_warmup_iterations: int = 20   # max untrimmed solves before trimming engages
    max_segment_length: float = 0.75    # interpolation treats longer gaps as depth jumps
    gross_outlier_gate: float = 0.5     # meters; pairs beyond max(this, 3*median) are dropped
    use_interpolation: bool = True
    use_imrp: bool = True
    use_weighting: bool = True
    use_frmsd: bool = True
    keep_trace: bool = False

    def __post_init__(self) -> None:
        if self.trim_exponent <= 0.0:
            raise ValueError("trim_exponent must be positive")
        if self.window_initial <= 0.0:
            raise ValueError("window_initial must be positive")
        if not 0.0 < self.f_grid_step <= 1.0:
            raise ValueError("f_grid_step must lie in (0, 1]")
        if self.time_budget_ms <= 0.0:
            raise ValueError("time_budget_ms must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class CorrespondenceSet:
    """Matched point pairs with distances, weights and inlier flags.

    ``source_indices`` refer to the moving point set the pairs were
    built from; sources without a valid pair are simply absent.
    """

    source_indices: np.ndarray   # (k,) int
    source_xy: np.ndarray        # (k, 2) moving points
    target_xy: np.ndarray        # (k, 2) matched (possibly virtual) targets
    distances: np.ndarray        # (k,) Euclidean pair distances
    weights: np.ndarray          # (k,) in [0, 1]
    inliers: np.ndarray          # (k,) bool

    def __len__(self) -> int:
        return int(self.distances.size)

    @classmethod
    def build(cls, source_indices, source_xy, target_xy) -> "CorrespondenceSet":
        source_xy = np.asarray(source_xy, dtype=float)
        target_xy = np.asarray(target_xy, dtype=float)
        d = np.hypot(*(source_xy - target_xy).T)
        return cls(
            np.asarray(source_indices, dtype=int),
            source_xy,
            target_xy,
            d,
            np.ones(d.size),
            np.ones(d.size, dtype=bool),
        )


@dataclass(frozen=True)
class IterationDiag:
    """Per-iteration matcher state captured when tracing is enabled."""

    iteration: int
    frmsd: float
    inlier_fraction: float
    window: float
    transform: Transform2D


@dataclass(frozen=True)
class MatchResult:
    transform: Transform2D
    final_frmsd: float
    iterations: int
    converged: bool
    inlier_fraction: float
    termination_reason: str      # delta | threshold | budget | max_iter
    trace: tuple[IterationDiag, ...] | None = None


def _sq_distance_matrix(source_xy: np.ndarray, target_xy: np.ndarray) -> np.ndarray:
    """Squared pairwise distances via the inner-product expansion (BLAS-fast)."""
    ss = np.einsum("ij,ij->i", source_xy, source_xy)
    tt = np.einsum("ij,ij->i", target_xy, target_xy)
    d = ss[:, None] + tt[None, :] - 2.0 * (source_xy @ target_xy.T)
    return np.maximum(d, 0.0, out=d)


def correspondences_closest(source_xy: np.ndarray, target_xy: np.ndarray) -> CorrespondenceSet:
    """Plain nearest-neighbor pairs; ties resolve to the lowest target index."""
    source_xy = np.asarray(source_xy, dtype=float)
    target_xy = np.asarray(target_xy, dtype=float)
    if source_xy.shape[0] == 0 or target_xy.shape[0] == 0:
        raise EmptyInput("correspondence search needs non-empty point sets")
    nearest = np.argmin(_sq_distance_matrix(source_xy, target_xy), axis=1)
    return CorrespondenceSet.build(np.arange(source_xy.shape[0]), source_xy, target_xy[nearest])


def correspondences_interpolated(
    source_xy: np.ndarray,
    target_xy: np.ndarray,
    max_segment_length: float = math.inf,
) -> CorrespondenceSet:
    """Nearest point on the scan polyline around the closest target point.

    The target array must be in scan (bearing) order; adjacency wraps
    around, matching a full-revolution scan.  For each source point the
    scan-order neighbor of its nearest target that lies closer to the
    source is chosen, and the pair target becomes the projection of the
    source onto that segment, clamped to the segment ends.  A
    single-point target degrades to the plain closest-point search.

    Neighbors farther apart than ``max_segment_length`` are treated as a
    depth discontinuity (occlusion edge or stray return): no segment is
    interpolated there and the pair falls back to the closest point,
    instead of projecting onto a phantom wall bridging the gap.
    """
    source_xy = np.asarray(source_xy, dtype=float)
    target_xy = np.asarray(target_xy, dtype=float)
    if source_xy.shape[0] == 0 or target_xy.shape[0] == 0:
        raise EmptyInput("correspondence search needs non-empty point sets")
    m = target_xy.shape[0]
    if m == 1:
        return correspondences_closest(source_xy, target_xy)

    dist = _sq_distance_matrix(source_xy, target_xy)
    nearest = np.argmin(dist, axis=1)
    rows = np.arange(source_xy.shape[0])
    prev_idx = (nearest - 1) % m
    next_idx = (nearest + 1) % m
    take_next = dist[rows, next_idx] < dist[rows, prev_idx]
    adjacent = np.where(take_next, next_idx, prev_idx)

    anchor = target_xy[nearest]
    seg = target_xy[adjacent] - anchor
    seg_len_sq = np.einsum("ij,ij->i", seg, seg)
    rel = source_xy - anchor
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.einsum("ij,ij->i", rel, seg) / seg_len_sq
    usable = (seg_len_sq > 0.0) & (seg_len_sq <= max_segment_length**2)
    t = np.where(usable, np.clip(t, 0.0, 1.0), 0.0)
    virtual = anchor + t[:, None] * seg
    return CorrespondenceSet.build(rows, source_xy, virtual)


def correspondences_imrp(
    source_xy: np.ndarray,
    target_xy: np.ndarray,
    window: float,
    origin=(0.0, 0.0),
) -> CorrespondenceSet:
    """Range-difference pairs inside an angular window.

    Both sets are expressed in polar coordinates about ``origin``; for
    each source point the target whose bearing lies within ``window``
    of the source bearing and whose range is closest is selected (ties
    resolve to the lowest target index).  Sources with an empty window
    get no pair; raises :class:`NoCorrespondences` when every window is
    empty.
    """
    if window <= 0.0:
        raise ValueError("window must be positive")
    source_xy = np.asarray(source_xy, dtype=float)
    target_xy = np.asarray(target_xy, dtype=float)
    if source_xy.shape[0] == 0 or target_xy.shape[0] == 0:
        raise EmptyInput("correspondence search needs non-empty point sets")

    r_src, b_src = cartesian_to_polar(source_xy, origin)
    r_tgt, b_tgt = cartesian_to_polar(target_xy, origin)
    # both bearings live in [-pi, pi), so |raw difference| < 2*pi and the
    # wrapped gap is min(|d|, 2*pi - |d|); cheaper than a modulo pass
    bearing_gap = np.abs(b_src[:, None] - b_tgt[None, :])
    np.minimum(bearing_gap, 2.0 * math.pi - bearing_gap, out=bearing_gap)
    range_gap = np.abs(r_src[:, None] - r_tgt[None, :])
    range_gap[bearing_gap > window] = np.inf

    best = np.argmin(range_gap, axis=1)
    valid = np.isfinite(range_gap[np.arange(source_xy.shape[0]), best])
    if not np.any(valid):
        raise NoCorrespondences(f"every angular window of {window:.4f} rad is empty")
    src_idx = np.flatnonzero(valid)
    return CorrespondenceSet.build(src_idx, source_xy[src_idx], target_xy[best[valid]])


def shrink_window(window_initial: float, decay: float, iteration: int) -> float:
    """Exponentially shrinking angular search window: B_w(0) * exp(-alpha * t)."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    return window_initial * math.exp(-decay * iteration)


def frmsd(distances: np.ndarray, fraction: float, trim_exponent: float) -> float:
    """Fractional RMS distance over the best ``fraction`` of the pairs.

    The ``floor(fraction * n)`` smallest distances enter the sum; the
    result is scaled by ``1 / fraction**trim_exponent`` so that
    discarding inliers is penalized.
    """
    d = np.asarray(distances, dtype=float)
    n = d.size
    if n == 0:
        raise InvalidFraction("no correspondences")
    k = int(math.floor(fraction * n))
    if k <= 0:
        raise InvalidFraction(f"fraction {fraction} selects zero of {n} correspondences")
    kept = np.partition(d, k - 1)[:k]
    return math.sqrt(float(np.sum(kept**2)) / (fraction * n)) / fraction**trim_exponent


def _fraction_grid(step: float) -> np.ndarray:
    m = int(round(1.0 / step))
    if m >= 1 and abs(m * step - 1.0) < 1e-9:
        return np.arange(1, m + 1) / m
    grid = np.arange(step, 1.0, step)
    return np.append(grid, 1.0)


def select_inliers(
    corrs: CorrespondenceSet,
    trim_exponent: float,
    f_grid_step: float,
    plateau_tolerance: float = 0.0,
) -> tuple[float, float, CorrespondenceSet]:
    """Pick the kept fraction minimizing the fractional RMS distance.

    Evaluates the error over a fraction grid, breaking ties toward the
    larger fraction, and flags the ``floor(f* n)`` smallest-distance
    pairs as inliers.  Returns ``(f*, error at f*, flagged set)``.

    ``plateau_tolerance`` widens the tie: any fraction whose error is
    within ``(1 + tol)`` of the minimum counts as tied, and the largest
    such fraction wins.  Interpolated (point-to-segment) distances make
    the error almost flat in f, where exact minimization would keep a
    tiny, geometrically degenerate subset.
    """
    n = len(corrs)
    if n == 0:
        raise EmptyInput("cannot select inliers of an empty correspondence set")
    order = np.argsort(corrs.distances, kind="stable")
    cumulative_sq = np.cumsum(corrs.distances[order] ** 2)

    candidates: list[tuple[float, float]] = []
    for f in _fraction_grid(f_grid_step):
        k = int(math.floor(f * n))
        if k <= 0:
            continue
        # same value frmsd() would produce, via the shared prefix sums
        err = math.sqrt(cumulative_sq[k - 1] / (f * n)) / f**trim_exponent
        candidates.append((float(f), err))
    if not candidates:
        raise InvalidFraction("fraction grid selects zero correspondences everywhere")
    min_err = min(err for _, err in candidates)
    best_f, best_err = max(
        (pair for pair in candidates if pair[1] <= (1.0 + plateau_tolerance) * min_err),
        key=lambda pair: pair[0],
    )
    k = int(math.floor(best_f * n))
    inliers = np.zeros(n, dtype=bool)
    inliers[order[:k]] = True
    return best_f, best_err, replace(corrs, inliers=inliers)


def _subset(corrs: CorrespondenceSet, mask: np.ndarray) -> CorrespondenceSet:
    return CorrespondenceSet(
        corrs.source_indices[mask],
        corrs.source_xy[mask],
        corrs.target_xy[mask],
        corrs.distances[mask],
        corrs.weights[mask],
        corrs.inliers[mask],
    )


def _median_gate(corrs: CorrespondenceSet, floor: float) -> CorrespondenceSet:
    """Drop gross outliers: pairs beyond three times the median distance.

    The median is robust to the contamination levels the trim handles
    (< 50%), so the gate adapts to the current alignment scale without
    the collapse risk of fraction search.  If it would remove most of
    the set (severe misalignment), it backs off and keeps everything.
    """
    gate = max(3.0 * float(np.median(corrs.distances)), floor)
    keep = corrs.distances <= gate
    if int(np.sum(keep)) < max(8, len(corrs) // 4):
        return corrs
    return _subset(corrs, keep)


def apply_weights(corrs: CorrespondenceSet) -> CorrespondenceSet:
    """Distance weighting w(d) = 1 - d / max(d) over the inlier pairs.

    When all inlier distances are equal the formula would zero every
    weight (or the single largest pair), so the set falls back to
    uniform weights.  Outlier weights are zero.
    """
    if not np.any(corrs.inliers):
        raise EmptyInput("weighting needs at least one inlier")
    d = corrs.distances[corrs.inliers]
    weights = np.zeros(len(corrs))
    dmax = float(np.max(d))
    dmin = float(np.min(d))
    if dmax == dmin:
        weights[corrs.inliers] = 1.0
    else:
        weights[corrs.inliers] = 1.0 - corrs.distances[corrs.inliers] / dmax
    return replace(corrs, weights=weights)


def weighted_alignment_error(transform: Transform2D, corrs: CorrespondenceSet) -> float:
    """Weighted sum of squared residuals E(T) over the inlier pairs."""
    mask = corrs.inliers
    moved = transform.apply(corrs.source_xy[mask])
    residual = moved - corrs.target_xy[mask]
    return float(np.sum(corrs.weights[mask] * np.einsum("ij,ij->i", residual, residual)))


def _weighted_stats(corrs: CorrespondenceSet):
    mask = corrs.inliers
    w = corrs.weights[mask]
    total = float(np.sum(w))
    if total <= 0.0:
        raise DegenerateGeometry("correspondence set has no positive weight")
    p = corrs.source_xy[mask]
    q = corrs.target_xy[mask]
    mu_p = (w @ p) / total
    mu_q = (w @ q) / total
    return w, p, q, mu_p, mu_q


def solve_transform(
    translation_corrs: CorrespondenceSet,
    rotation_corrs: CorrespondenceSet,
) -> Transform2D:
    """Closed-form weighted rigid fit combining two correspondence sets.

    The rotation comes from the weighted cross-covariances of the
    rotation set, via the two-argument arctangent so the quadrant is
    kept; the translation then aligns the weighted means of the
    translation set under that rotation.  Raises
    :class:`DegenerateGeometry` when the rotation is indeterminate
    (fewer than two inliers, zero weight, or vanishing covariances);
    the caller is expected to fall back to a translation-only update.
    """
    if int(np.sum(rotation_corrs.inliers)) < 2:
        raise DegenerateGeometry("rotation estimation needs at least two inliers")
    w, p, q, mu_p, mu_q = _weighted_stats(rotation_corrs)
    a = p - mu_p
    b = q - mu_q
    s_xx = float(np.sum(w * a[:, 0] * b[:, 0]))
    s_yy = float(np.sum(w * a[:, 1] * b[:, 1]))
    s_xy = float(np.sum(w * a[:, 0] * b[:, 1]))
    s_yx = float(np.sum(w * a[:, 1] * b[:, 0]))
    num = s_xy - s_yx
    den = s_xx + s_yy
    scale = float(np.sum(w * (np.einsum("ij,ij->i", a, a) + np.einsum("ij,ij->i", b, b))))
    if math.hypot(num, den) <= 1e-12 * max(scale, 1.0):
        raise DegenerateGeometry("rotation covariances vanish")
    omega = math.atan2(num, den)
    return _translation_for(translation_corrs, omega)


def _translation_for(translation_corrs: CorrespondenceSet, omega: float) -> Transform2D:
    _, _, _, mu_p, mu_q = _weighted_stats(translation_corrs)
    c, s = math.cos(omega), math.sin(omega)
    tx = mu_q[0] - (mu_p[0] * c - mu_p[1] * s)
    ty = mu_q[1] - (mu_p[0] * s + mu_p[1] * c)
    return Transform2D(omega, tx, ty)


def order_by_bearing(points_xy: np.ndarray, origin=(0.0, 0.0)) -> np.ndarray:
    """Sort planar points by bearing about ``origin`` (stable in index)."""
    pts = np.asarray(points_xy, dtype=float)
    _, bearings = cartesian_to_polar(pts, origin)
    return pts[np.argsort(bearings, kind="stable")]


def match(
    moving_xy: np.ndarray,
    fixed_xy: np.ndarray,
    params: MatchParams = MatchParams(),
    initial_guess: Transform2D = Transform2D.identity(),
    fixed_origin=(0.0, 0.0),
) -> MatchResult:
    """Align ``moving_xy`` onto ``fixed_xy``.

    The returned transform maps moving-frame points onto the fixed
    frame and already includes ``initial_guess``.  ``fixed_origin`` is
    the viewpoint used to order the fixed set by bearing (the sensor
    origin for scans, the pose prior for map crops).

    The error driving the stop conditions is the fractional RMS
    distance of the translation correspondences at the selected
    fraction, evaluated before each update, so a converged result
    reports the error of the transform it returns.
    """
    moving0 = np.asarray(moving_xy, dtype=float)[:, :2]
    fixed = np.asarray(fixed_xy, dtype=float)[:, :2]
    if moving0.shape[0] == 0 or fixed.shape[0] == 0:
        raise EmptyInput("match needs non-empty point sets")
    fixed = order_by_bearing(fixed, fixed_origin)

    start = time.perf_counter()
    total = initial_guess
    moved = total.apply(moving0)
    prev_err: float | None = None
    err = math.inf
    f_star = 1.0
    window = math.nan
    trace: list[IterationDiag] = []
    reason = "max_iter"
    converged = False
    iterations = 0
    # Trimming engages only once the untrimmed fit has settled (or the
    # warmup cap is hit): fitting all pairs first pulls the alignment
    # out of slide-along-the-wall minima that the trimmed objective
    # cannot escape on its own.
    warmup_until = params.frmsd_warmup_iterations if params.use_frmsd else 0

    for it in range(1, params.max_iterations + 1):
        iterations = it
        if params.use_interpolation:
            tcorr = correspondences_interpolated(moved, fixed, params.max_segment_length)
        else:
            tcorr = correspondences_closest(moved, fixed)
        in_warmup = params.use_frmsd and it <= warmup_until
        trimming = params.use_frmsd and not in_warmup
        if params.use_frmsd:
            tcorr = _median_gate(tcorr, params.gross_outlier_gate)
        if trimming:
            f_star, err, tcorr = select_inliers(
                tcorr, params.trim_exponent, params.f_grid_step, params.f_plateau_tolerance
            )
        else:
            f_star = 1.0
            err = frmsd(tcorr.distances, 1.0, params.trim_exponent)

        if params.keep_trace:
            trace.append(IterationDiag(it, err, f_star, window, total))
        log.debug(
            "iter=%d frmsd=%.6f f=%.2f window=%.4f T=(%.4f, %.4f, %.4f)",
            it, err, f_star, window, total.rotation, total.tx, total.ty,
        )

        if err < params.frmsd_stop:
            reason, converged = "threshold", True
            break
        if prev_err is not None and abs(prev_err - err) < params.delta_stop:
            if in_warmup:
                # untrimmed fit has settled; switch to the trimmed
                # objective instead of stopping
                warmup_until = it
                prev_err = None
            else:
                reason, converged = "delta", True
                break
        else:
            prev_err = err
        if (time.perf_counter() - start) * 1000.0 > params.time_budget_ms:
            reason, converged = "budget", False
            break

        shared_sets = not params.use_imrp
        if params.use_imrp:
            window = shrink_window(params.window_initial, params.window_decay, it - 1)
            origin = moved.mean(axis=0)
            rcorr = correspondences_imrp(moved, fixed, window, origin)
            if params.use_frmsd:
                rcorr = _median_gate(rcorr, params.gross_outlier_gate)
            if trimming:
                _, _, rcorr = select_inliers(
                    rcorr, params.trim_exponent, params.f_grid_step, params.f_plateau_tolerance
                )
        else:
            rcorr = tcorr

        if params.use_weighting:
            tcorr = apply_weights(tcorr)
            rcorr = tcorr if shared_sets else apply_weights(rcorr)

        try:
            step = solve_transform(tcorr, rcorr)
        except DegenerateGeometry:
            step = _translation_for(tcorr, 0.0)
        total = step.compose(total)
        moved = total.apply(moving0)
    else:
        # max_iterations exhausted: report the error of the final transform
        final_corr = (
            correspondences_interpolated(moved, fixed, params.max_segment_length)
            if params.use_interpolation
            else correspondences_closest(moved, fixed)
        )
        if params.use_frmsd:
            f_star, err, _ = select_inliers(
                final_corr, params.trim_exponent, params.f_grid_step, params.f_plateau_tolerance
            )
        else:
            err = frmsd(final_corr.distances, 1.0, params.trim_exponent)

    return MatchResult(
        transform=total,
        final_frmsd=err,
        iterations=iterations,
        converged=converged,
        inlier_fraction=f_star,
        termination_reason=reason,
        trace=tuple(trace) if params.keep_trace else None,
    )
