"""Low-level statistical kernels: cumulants, eigen, clustering, tests.

All estimators treat the columns of a matrix (or the entries of a
vector) as equally weighted samples; moments are population-normalized
(divide by V, not V-1) so that whitened data has exactly unit sample
covariance.  Inputs to the cumulant routines are re-centered internally,
which makes the estimates shift-invariant regardless of upstream
normalization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from .errors import (
    DegenerateSampleCount,
    InsufficientSamples,
    InvalidQ,
    LengthMismatch,
    NonFinite,
    NotSymmetric,
    OrderOutOfRange,
    PartnerLengthMismatch,
    SingularCovariance,
    TooFewPoints,
    ZeroSource,
)

SUPPORTED_ORDERS = (2, 3, 4)


@dataclass(frozen=True)
class CumulantVector:
    """Cross-cumulants of each row of a matrix against one partner tuple."""

    values: np.ndarray
    order: int

    def __post_init__(self) -> None:
        if self.values.ndim != 1:
            raise ValueError("cumulant vector must be one-dimensional")


def standardize(x: np.ndarray) -> np.ndarray:
    """Return x shifted to zero mean and scaled to unit population variance."""
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    s = np.sqrt(np.mean(c * c))
    if s < 1e-300 or not np.isfinite(s):
        raise ZeroSource("cannot standardize a (near-)constant vector")
    return c / s


def cross_cumulant(order: int, *series: np.ndarray) -> float:
    """Sample cross-cumulant of ``order`` vectors.

    Orders 2 and 3 are plain product moments of the centered series; at
    order 4 the three pairwise-product corrections are subtracted, which
    makes the statistic vanish for (jointly) Gaussian data.

    Parameters
    ----------
    order
        Cumulant order, one of 2, 3, 4.
    *series
        Exactly ``order`` equal-length sample vectors.
    """
    if order not in SUPPORTED_ORDERS:
        raise OrderOutOfRange(f"order must be one of {SUPPORTED_ORDERS}, got {order}")
    if len(series) != order:
        raise LengthMismatch(f"expected {order} series, got {len(series)}")
    arrs = [np.asarray(s, dtype=float).ravel() for s in series]
    v = arrs[0].size
    if v == 0:
        raise LengthMismatch("series must be nonempty")
    if any(a.size != v for a in arrs):
        raise LengthMismatch("series lengths differ")
    for a in arrs:
        if not np.isfinite(a).all():
            raise NonFinite("series contain NaN/Inf")
    c = [a - a.mean() for a in arrs]
    if order == 2:
        return float(np.mean(c[0] * c[1]))
    if order == 3:
        return float(np.mean(c[0] * c[1] * c[2]))
    a, b, d, e = c
    m = lambda x, y: float(np.mean(x * y))
    return (
        float(np.mean(a * b * d * e))
        - m(a, b) * m(d, e)
        - m(a, d) * m(b, e)
        - m(a, e) * m(b, d)
    )


def cumulant_vector(z: np.ndarray, partners: list[np.ndarray], order: int) -> CumulantVector:
    """Cross-cumulant of every row of ``z`` against a shared partner tuple.

    Element i equals ``cross_cumulant(order, z[i], *partners)``; the whole
    vector is computed in O(rows * V) without forming V x V intermediates.
    """
    if order not in SUPPORTED_ORDERS:
        raise OrderOutOfRange(f"order must be one of {SUPPORTED_ORDERS}, got {order}")
    if len(partners) != order - 1:
        raise LengthMismatch(f"expected {order - 1} partners, got {len(partners)}")
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] == 0:
        raise LengthMismatch("z must be a nonempty 2-D array")
    v = z.shape[1]
    ps = []
    for p in partners:
        p = np.asarray(p, dtype=float).ravel()
        if p.size != v:
            raise PartnerLengthMismatch(f"partner length {p.size} != sample count {v}")
        ps.append(p - p.mean())
    zc = z - z.mean(axis=1, keepdims=True)
    if order == 2:
        vals = zc @ ps[0] / v
    elif order == 3:
        vals = zc @ (ps[0] * ps[1]) / v
    else:
        a, b, c = ps
        m_ab = a @ b / v
        m_ac = a @ c / v
        m_bc = b @ c / v
        vals = (
            zc @ (a * b * c) / v
            - (zc @ a / v) * m_bc
            - (zc @ b / v) * m_ac
            - (zc @ c / v) * m_ab
        )
    return CumulantVector(values=vals, order=order)


def cumulant_vectors_ring(
    zc: np.ndarray, partners: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All order-2/3/4 cumulant vectors over a ring of partner rows.

    For n partner rows, position alpha uses partners alpha, alpha+1, ...
    wrapping modulo n, so column alpha of the order-eta output equals
    ``cumulant_vector(zc, [partners[alpha], ..., partners[(alpha+eta-2) % n]],
    eta)``.  Inputs must already be row-centered; the outputs are (C, n)
    matrices, one column per ring position.
    """
    zc = np.asarray(zc, dtype=float)
    p0 = np.asarray(partners, dtype=float)
    if p0.ndim != 2 or p0.shape[1] != zc.shape[1]:
        raise PartnerLengthMismatch("partner rows must match the sample count of z")
    n = p0.shape[0]
    v = zc.shape[1]
    p1 = np.roll(p0, -1, axis=0)
    p2 = np.roll(p0, -2, axis=0)
    a0 = zc @ p0.T / v
    a1 = np.roll(a0, -1, axis=1)
    a2 = np.roll(a0, -2, axis=1)
    q01 = np.einsum("ij,ij->i", p0, p1) / v
    q02 = np.einsum("ij,ij->i", p0, p2) / v
    q12 = np.einsum("ij,ij->i", p1, p2) / v
    cv2 = a0
    cv3 = zc @ (p0 * p1).T / v
    cv4 = (
        zc @ (p0 * p1 * p2).T / v
        - a0 * q12[None, :]
        - a1 * q02[None, :]
        - a2 * q01[None, :]
    )
    return cv2, cv3, cv4


def excess_kurtosis(x: np.ndarray) -> float:
    """Fourth standardized cumulant (0 for Gaussian data)."""
    c = np.asarray(x, dtype=float).ravel()
    c = c - c.mean()
    m2 = np.mean(c * c)
    if m2 < 1e-300:
        raise ZeroSource("kurtosis undefined for a constant vector")
    return float(np.mean(c**4) / m2**2 - 3.0)


def _fix_sign(u: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude entry is positive."""
    i = int(np.argmax(np.abs(u)))
    return -u if u[i] < 0 else u


def dominant_eigenvector(m: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and unit eigenvector of a symmetric matrix.

    Degenerate top eigenvalues are resolved deterministically: within the
    tied eigenspace the (normalized) projection of the lowest-index basis
    vector with a nonvanishing projection is returned.  The sign makes
    the largest-magnitude entry positive.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric("matrix must be square")
    if not np.isfinite(m).all():
        raise NonFinite("matrix contains NaN/Inf")
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > 1e-10 * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    w, e = np.linalg.eigh((m + m.T) / 2.0)
    lam = float(w[-1])
    tie = w >= lam - 1e-12 * max(1.0, abs(lam))
    basis = e[:, tie]
    if basis.shape[1] == 1:
        return lam, _fix_sign(basis[:, 0])
    for i in range(m.shape[0]):
        proj = basis @ basis[i, :]
        nrm = float(np.linalg.norm(proj))
        if nrm > 1e-8:
            return lam, _fix_sign(proj / nrm)
    return lam, _fix_sign(basis[:, 0])


def covariance(x: np.ndarray) -> np.ndarray:
    """Population covariance of the rows of x (columns are samples)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DegenerateSampleCount("x must be 2-D")
    if x.shape[1] < 2:
        raise DegenerateSampleCount("need at least 2 samples")
    xc = x - x.mean(axis=1, keepdims=True)
    r = xc @ xc.T / x.shape[1]
    return (r + r.T) / 2.0


def inverse_sqrt_psd(r: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Inverse symmetric square root of a positive definite matrix."""
    r = np.asarray(r, dtype=float)
    scale = max(1.0, float(np.abs(r).max()))
    if np.abs(r - r.T).max() > 1e-10 * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    w, e = np.linalg.eigh((r + r.T) / 2.0)
    floor = tol * max(float(w[-1]), 0.0)
    if w[0] <= floor or w[-1] <= 0.0:
        raise SingularCovariance(
            f"eigenvalue {w[0]:.3e} below tolerance {floor:.3e}"
        )
    return (e * (1.0 / np.sqrt(w))) @ e.T


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    n_restarts: int = 20,
    max_iter: int = 100,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Seeded k-means with multiple restarts; best inertia wins.

    Initialization is distance-weighted (k-means++ style) per restart;
    iteration stops when assignments are stable.  Labels are renumbered
    by first occurrence, so the output is deterministic for a fixed seed.

    Returns (labels, centers, inertia).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if np.unique(pts, axis=0).shape[0] < k:
        raise TooFewPoints(f"need at least {k} distinct points")
    rng = np.random.default_rng(seed)
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    for _ in range(n_restarts):
        centers = _kpp_init(pts, k, rng)
        labels = np.zeros(n, dtype=int)
        for _ in range(max_iter):
            d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = d2.argmin(axis=1)
            for j in range(k):
                sel = new_labels == j
                if sel.any():
                    centers[j] = pts[sel].mean(axis=0)
                else:
                    centers[j] = pts[d2.min(axis=1).argmax()]
            if (new_labels == labels).all():
                labels = new_labels
                break
            labels = new_labels
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        if best is None or inertia < best[0] - 1e-12:
            best = (inertia, labels.copy(), centers.copy())
    inertia, labels, centers = best
    remap: dict[int, int] = {}
    for lab in labels:
        if int(lab) not in remap:
            remap[int(lab)] = len(remap)
    for j in range(k):
        if j not in remap:
            remap[j] = len(remap)
    new_labels = np.array([remap[int(l)] for l in labels], dtype=int)
    new_centers = np.empty_like(centers)
    for old, new in remap.items():
        new_centers[new] = centers[old]
    return new_labels, new_centers, inertia


def _kpp_init(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = pts.shape[0]
    centers = np.empty((k, pts.shape[1]), dtype=float)
    centers[0] = pts[rng.integers(n)]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = pts[idx]
        d2 = np.minimum(d2, ((pts - centers[j]) ** 2).sum(axis=1))
    return centers


def silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette width; singleton clusters score zero."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    labels = np.asarray(labels, dtype=int)
    uniq = np.unique(labels)
    if uniq.size < 2:
        return 0.0
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(pts.shape[0])
    for i in range(pts.shape[0]):
        same = labels == labels[i]
        if same.sum() <= 1:
            continue
        a = d[i, same].sum() / (same.sum() - 1)
        b = np.inf
        for lab in uniq:
            if lab == labels[i]:
                continue
            sel = labels == lab
            b = min(b, d[i, sel].mean())
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def _welch_from_stats(
    mean_a: np.ndarray,
    var_a: np.ndarray,
    na: int,
    mean_b: np.ndarray,
    var_b: np.ndarray,
    nb: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Welch t and two-sided p from per-group means and ddof-1 variances."""
    sa = var_a / na
    sb = var_b / nb
    se2 = sa + sb
    diff = mean_a - mean_b
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se2 > 0, diff / np.sqrt(np.where(se2 > 0, se2, 1.0)), 0.0)
        t = np.where((se2 <= 0) & (diff != 0), np.inf * np.sign(diff), t)
        df = np.where(
            se2 > 0,
            se2**2
            / (
                np.where(sa > 0, sa**2 / (na - 1), 0.0)
                + np.where(sb > 0, sb**2 / (nb - 1), 0.0)
                + 1e-300
            ),
            1.0,
        )
    df = np.clip(df, 1.0, None)
    p = np.where(np.isinf(t), 0.0, 2.0 * stdtr(df, -np.abs(np.where(np.isinf(t), 0.0, t))))
    p = np.where((se2 <= 0) & (diff == 0), 1.0, p)
    return t, np.clip(p, 0.0, 1.0)


def two_sample_t_test(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Welch two-sample t-test (unequal variances), two-sided p-value."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise InsufficientSamples("each group needs at least 2 observations")
    t, p = _welch_from_stats(
        np.array([a.mean()]),
        np.array([a.var(ddof=1)]),
        a.size,
        np.array([b.mean()]),
        np.array([b.var(ddof=1)]),
        b.size,
    )
    return float(t[0]), float(p[0])


def welch_t_columns(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise Welch test of two groups of rows; returns (t, p) arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise InsufficientSamples("each group needs at least 2 rows")
    return _welch_from_stats(
        a.mean(axis=0), a.var(axis=0, ddof=1), a.shape[0],
        b.mean(axis=0), b.var(axis=0, ddof=1), b.shape[0],
    )


def one_sample_t_columns(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise one-sample t-test against zero mean; returns (t, p)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n < 2:
        raise InsufficientSamples("need at least 2 rows")
    mean = a.mean(axis=0)
    var = a.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(var > 0, mean / np.sqrt(np.where(var > 0, var, 1.0) / n), 0.0)
        t = np.where((var <= 0) & (mean != 0), np.inf * np.sign(mean), t)
    p = np.where(np.isinf(t), 0.0, 2.0 * stdtr(n - 1, -np.abs(np.where(np.isinf(t), 0.0, t))))
    p = np.where((var <= 0) & (mean == 0), 1.0, p)
    return t, np.clip(p, 0.0, 1.0)


def bh_fdr(p_values: np.ndarray, q: float) -> np.ndarray:
    """Benjamini-Hochberg step-up selection at level q; boolean mask."""
    if not 0.0 < q < 1.0:
        raise InvalidQ(f"q must lie in (0, 1), got {q}")
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        return np.zeros(0, dtype=bool)
    if not np.isfinite(p).all() or p.min() < 0 or p.max() > 1:
        raise NonFinite("p-values must be finite and in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order]
    crit = q * (np.arange(1, m + 1) / m)
    passing = np.nonzero(ranked <= crit)[0]
    mask = np.zeros(m, dtype=bool)
    if passing.size:
        mask[order[: passing[-1] + 1]] = True
    return mask
