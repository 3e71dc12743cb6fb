import numpy as np


def theta2dcm(theta):
    """Rotation matrices [..., 2, 2] for angles theta [...]."""
    theta = np.asarray(theta, dtype=float)
    sin, cos = np.sin(theta), np.cos(theta)
    dcm = np.empty(theta.shape + (2, 2))
    dcm[..., 0, 0] = cos
    dcm[..., 0, 1] = -sin
    dcm[..., 1, 0] = sin
    dcm[..., 1, 1] = cos
    return dcm


def rotate(v, theta):
    return (theta2dcm(theta) @ np.asarray(v, dtype=float)[..., np.newaxis])[..., 0]


def rot90(v, sign=+1):
    """Rotate by sign*90deg without round-off: +1 counter-clockwise (left), -1 clockwise (right)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-sign * v[..., 1], sign * v[..., 0]], axis=-1)


def heading2v(theta):
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def to_local(p, origin, theta):
    """Coordinates of the world points p in the frame at origin rotated by theta."""
    return rotate(np.asarray(p, dtype=float) - origin, -theta)


# Oriented rectangles
# ----------------------------------------------------------------------------------------------------------------------
def rectangle_corners(xy, theta, half_extents):
    """Corners [..., 4, 2] counter-clockwise, half_extents = (length/2, width/2)."""
    hl, hw = half_extents
    local = np.array([[+hl, +hw], [-hl, +hw], [-hl, -hw], [+hl, -hw]])
    corners = (theta2dcm(theta)[..., np.newaxis, :, :] @ local[..., np.newaxis])[..., 0]
    return corners + np.asarray(xy)[..., np.newaxis, :]


def rectangle_rectangle(xy_a, theta_a, half_a, xy_b, theta_b, half_b, eps=0.0) -> bool:
    """Separating axis test, touching counts as overlap; eps > 0 inflates both rectangles."""
    ca = rectangle_corners(xy_a, theta_a, half_a)
    cb = rectangle_corners(xy_b, theta_b, half_b)
    axes = np.concatenate([theta2dcm(theta_a).T, theta2dcm(theta_b).T], axis=0)  # rows: unit axes of both boxes
    for ax in axes:
        pa, pb = ca @ ax, cb @ ax
        if pa.max() + eps < pb.min() - eps or pb.max() + eps < pa.min() - eps:
            return False
    return True


def point_rectangle_distance(p, xy, theta, half_extents):
    """Euclidean distance from p to the filled rectangle (0 inside)."""
    q = np.abs(to_local(p, origin=xy, theta=theta))
    d = np.maximum(q - np.asarray(half_extents), 0)
    return float(np.sqrt((d**2).sum()))


def distance_point_segment(p, a, b) -> float:
    p, a, b = (np.asarray(x, dtype=float) for x in (p, a, b))
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-12), 0, 1)
    return float(np.linalg.norm(p - (a + t * ab)))


def disc_rectangle(p, radius, xy, theta, half_extents) -> bool:
    return point_rectangle_distance(p, xy, theta, half_extents) <= radius


def point_in_rectangle(p, xy, theta, half_extents, eps=0.0) -> bool:
    q = np.abs(to_local(p, origin=xy, theta=theta))
    return bool(np.all(q <= np.asarray(half_extents) + eps))


def half_diagonal(half_extents):
    return float(np.linalg.norm(half_extents))


# Time to collision
# ----------------------------------------------------------------------------------------------------------------------
def ttc_discs(p_a, v_a, r_a, p_b, v_b, r_b):
    """
    Smallest t >= 0 at which two discs moving with constant velocity touch, +inf if they never do.
    Overlapping discs give 0.
    """
    p = np.asarray(p_b, dtype=float) - np.asarray(p_a, dtype=float)
    v = np.asarray(v_b, dtype=float) - np.asarray(v_a, dtype=float)
    r = r_a + r_b

    c = p @ p - r * r
    if c <= 0:
        return 0.0

    a = v @ v
    b = 2 * (p @ v)
    if a == 0 or b >= 0:
        return np.inf

    disc = b * b - 4 * a * c
    if disc < 0:
        return np.inf

    return float((-b - np.sqrt(disc)) / (2 * a))


# Polylines
# ----------------------------------------------------------------------------------------------------------------------
def quadratic_bezier(p0, p1, p2, n):
    t = np.linspace(0, 1, n)[:, np.newaxis]
    return (1 - t)**2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2


def line_intersection(p0, d0, p1, d1):
    """Intersection of the lines p0 + s*d0 and p1 + t*d1, None if parallel."""
    m = np.array([d0, -np.asarray(d1)]).T
    if abs(np.linalg.det(m)) < 1e-12:
        return None
    s, _ = np.linalg.solve(m, np.asarray(p1) - np.asarray(p0))
    return np.asarray(p0) + s * np.asarray(d0)


def segment(p0, p1, max_spacing):
    n = max(2, int(np.ceil(np.linalg.norm(np.asarray(p1) - p0) / max_spacing)) + 1)
    return np.linspace(p0, p1, n)


def polyline_length(x):
    return np.concatenate([[0.], np.cumsum(np.linalg.norm(np.diff(x, axis=0), axis=-1))])


def remove_duplicates(x, eps=1e-9):
    keep = np.concatenate([[True], np.linalg.norm(np.diff(x, axis=0), axis=-1) > eps])
    return x[keep]


def polyline_curvature(x):
    """Unsigned curvature at every vertex from the turning angle between adjacent segments, 0 at the ends."""
    d = np.diff(x, axis=0)
    length = np.linalg.norm(d, axis=-1)
    h = np.arctan2(d[:, 1], d[:, 0])
    dh = np.abs(np.angle(np.exp(1j * np.diff(h))))
    k = np.zeros(len(x))
    k[1:-1] = dh / (0.5 * (length[:-1] + length[1:]))
    return k


def projection_point_polyline(p, x):
    """
    Closest point on the polyline x [n, 2] to p.
    Returns (arclength s, signed lateral offset (left positive), segment index).
    """
    x0, x1 = x[:-1], x[1:]
    x21 = x1 - x0
    mu = ((p - x0) * x21).sum(axis=-1) / (x21 * x21).sum(axis=-1)
    mu = np.clip(mu, 0, 1)
    pp = x0 + mu[:, np.newaxis] * x21
    d = np.linalg.norm(pp - p, axis=-1)
    i = int(np.argmin(d))

    cum = polyline_length(x)
    s = cum[i] + mu[i] * np.linalg.norm(x21[i])
    cross = x21[i, 0] * (p[1] - x0[i, 1]) - x21[i, 1] * (p[0] - x0[i, 0])
    return float(s), float(np.sign(cross) * d[i]), i


def point_at_arclength(x, s, cum=None):
    if cum is None:
        cum = polyline_length(x)
    s = np.clip(s, 0, cum[-1])
    i = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(x) - 2))
    mu = (s - cum[i]) / max(cum[i+1] - cum[i], 1e-12)
    return x[i] + mu * (x[i+1] - x[i])


def segments_min_distance(x_a, x_b):
    """Minimal distance between two polylines, via endpoint-to-segment distances (exact for non-crossing pairs)."""
    if _polylines_cross(x_a, x_b):
        return 0.0

    def point_segments(p, x):
        x0, x1 = x[:-1], x[1:]
        x21 = x1 - x0
        mu = np.clip(((p - x0) * x21).sum(axis=-1) / np.maximum((x21 * x21).sum(axis=-1), 1e-12), 0, 1)
        return np.linalg.norm(x0 + mu[:, np.newaxis] * x21 - p, axis=-1).min()

    return float(min(min(point_segments(p, x_b) for p in x_a),
                     min(point_segments(p, x_a) for p in x_b)))


def _polylines_cross(x_a, x_b):
    a0, a1 = x_a[:-1, np.newaxis], x_a[1:, np.newaxis]
    b0, b1 = x_b[np.newaxis, :-1], x_b[np.newaxis, 1:]

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    o1, o2 = orient(a0, a1, b0), orient(a0, a1, b1)
    o3, o4 = orient(b0, b1, a0), orient(b0, b1, a1)
    return bool(np.any((o1 * o2 < 0) & (o3 * o4 < 0)))
