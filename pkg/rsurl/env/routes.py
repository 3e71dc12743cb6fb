"""
Arms, lanes and routes of the four-way junction.

The arm labels follow the image-style compass of drone-recorded intersection datasets: the N arm lies at
negative y, S at positive y, E at positive x and W at negative x. Headings are counter-clockwise positive, so
entering from N and leaving to W is a left turn. Traffic keeps right: the inbound lane of an arm lies to the
right of the inbound travel direction.
"""
from functools import lru_cache

import numpy as np

from rsurl.env import geometry
from rsurl.env.config import MapGeometry

ARMS = ("N", "E", "S", "W")
ARM_DIRECTION = dict(N=np.array([0., -1.]),
                     E=np.array([1., 0.]),
                     S=np.array([0., 1.]),
                     W=np.array([-1., 0.]))  # unit vector from the junction centre outwards

ROLES = ("left", "straight", "right")
MANEUVERS = ROLES

SPAWN_RANGE = (0.25, 0.6)  # fraction of the arm length before the box
GOAL_RANGE = (0.25, 0.5)  # fraction of the arm length after the box
MAX_SPACING = 1.0  # m, centerline sampling


def role_one_hot(role):
    return np.eye(3)[role2index(role)]


def role2index(role):
    try:
        return ROLES.index(role)
    except ValueError:
        raise ValueError(f"Unknown role '{role}', expected one of {ROLES}")


def arm_from_direction(u):
    scores = [float(ARM_DIRECTION[a] @ u) for a in ARMS]
    return ARMS[int(np.argmax(scores))]


def exit_arm(entry, maneuver):
    d_in = -ARM_DIRECTION[entry]
    if maneuver == "left":
        return arm_from_direction(geometry.rot90(d_in, +1))
    elif maneuver == "right":
        return arm_from_direction(geometry.rot90(d_in, -1))
    elif maneuver == "straight":
        return arm_from_direction(d_in)
    else:
        raise ValueError(f"Unknown maneuver '{maneuver}', expected one of {MANEUVERS}")


def maneuver_between(entry, exit_):
    for m in MANEUVERS:
        if exit_arm(entry, m) == exit_:
            return m
    raise ValueError(f"No maneuver leads from arm '{entry}' to arm '{exit_}' (U-turns are not modelled)")


def inbound_offset(arm, lane_width):
    return geometry.rot90(-ARM_DIRECTION[arm], -1) * lane_width / 2


def outbound_offset(arm, lane_width):
    return geometry.rot90(ARM_DIRECTION[arm], -1) * lane_width / 2


def inbound_point(arm, s, geom: MapGeometry):
    """Inbound lane centre at distance s from the junction centre."""
    return ARM_DIRECTION[arm] * s + inbound_offset(arm, geom.lane_width)


def outbound_point(arm, s, geom: MapGeometry):
    return ARM_DIRECTION[arm] * s + outbound_offset(arm, geom.lane_width)


def in_map(xy, geom: MapGeometry, margin=1.0):
    return bool(np.all(np.abs(np.asarray(xy)) <= geom.extent + margin))


class Route:
    """
    Centerline from the far end of the entry arm through the junction to the far end of the exit arm.
    Consecutive centerline points are at most MAX_SPACING apart.
    """
    __slots__ = ("entry", "maneuver", "exit", "centerline", "cum", "curvature",
                 "s_box_in", "s_box_out", "goal_center", "goal_heading", "goal_half_extents")

    def __init__(self, entry, maneuver, geom: MapGeometry):
        self.entry = entry
        self.maneuver = maneuver
        self.exit = exit_arm(entry, maneuver)

        far = geom.extent
        p_start = inbound_point(entry, far, geom)
        p_in = inbound_point(entry, geom.box_half, geom)
        p_out = outbound_point(self.exit, geom.box_half, geom)
        p_end = outbound_point(self.exit, far, geom)

        d_in = -ARM_DIRECTION[entry]
        d_out = ARM_DIRECTION[self.exit]
        control = geometry.line_intersection(p_in, d_in, p_out, d_out)
        if control is None:
            turn = geometry.segment(p_in, p_out, max_spacing=MAX_SPACING)
        else:
            chord = np.linalg.norm(control - p_in) + np.linalg.norm(p_out - control)
            turn = geometry.quadratic_bezier(p_in, control, p_out, n=int(np.ceil(chord / MAX_SPACING)) + 2)

        x = np.concatenate([geometry.segment(p_start, p_in, max_spacing=MAX_SPACING),
                            turn,
                            geometry.segment(p_out, p_end, max_spacing=MAX_SPACING)], axis=0)
        self.centerline = geometry.remove_duplicates(x)
        self.cum = geometry.polyline_length(self.centerline)
        self.curvature = geometry.polyline_curvature(self.centerline)

        self.s_box_in = geom.arm_length
        self.s_box_out = self.cum[-1] - geom.arm_length

        g0, g1 = GOAL_RANGE
        self.goal_center = outbound_point(self.exit, geom.box_half + geom.arm_length * (g0 + g1) / 2, geom)
        self.goal_heading = float(np.arctan2(d_out[1], d_out[0]))
        self.goal_half_extents = np.array([geom.arm_length * (g1 - g0) / 2, geom.lane_width / 2])

    @property
    def length(self):
        return float(self.cum[-1])

    @property
    def role(self):
        return self.maneuver

    def in_goal(self, xy) -> bool:
        return geometry.point_in_rectangle(xy, self.goal_center, self.goal_heading, self.goal_half_extents)

    def project(self, xy):
        """(arclength, signed lateral offset)"""
        s, lat, _ = geometry.projection_point_polyline(np.asarray(xy, dtype=float), self.centerline)
        return s, lat

    def point(self, s):
        return geometry.point_at_arclength(self.centerline, s, cum=self.cum)

    def heading_at(self, s):
        p0, p1 = self.point(s), self.point(s + 0.5)
        if np.allclose(p0, p1):
            p0 = self.point(s - 0.5)
        return float(np.arctan2(p1[1] - p0[1], p1[0] - p0[0]))

    def spawn_pose(self, s_before_box):
        """Position on the inbound lane s_before_box meters before the box edge and the inbound heading."""
        s = self.s_box_in - s_before_box
        return self.point(s), self.heading_at(s)

    def __repr__(self):
        return f"Route({self.entry}->{self.exit}, {self.maneuver})"


@lru_cache(maxsize=64)
def _route_cached(entry, maneuver, name, arm_length, lane_width, box_half):
    return Route(entry, maneuver, MapGeometry(name=name, arm_length=arm_length, lane_width=lane_width,
                                               box_half=box_half))


def get_route(entry, maneuver, geom: MapGeometry) -> Route:
    """Routes are immutable and shared between vehicles."""
    return _route_cached(entry, maneuver, geom.name, geom.arm_length, geom.lane_width, geom.box_half)


@lru_cache(maxsize=512)
def _conflict_cached(entry_a, maneuver_a, entry_b, maneuver_b, name, arm_length, lane_width, box_half, clearance):
    geom = MapGeometry(name=name, arm_length=arm_length, lane_width=lane_width, box_half=box_half)
    if entry_a == entry_b:
        return False  # same inbound lane: ordered by car following

    ra, rb = get_route(entry_a, maneuver_a, geom), get_route(entry_b, maneuver_b, geom)
    if ra.exit == rb.exit:
        return True  # merge

    def box_part(r):
        return r.centerline[np.all(np.abs(r.centerline) <= box_half + 1e-9, axis=-1)]

    return geometry.segments_min_distance(box_part(ra), box_part(rb)) < clearance


def routes_conflict(route_a: Route, route_b: Route, geom: MapGeometry, clearance=2.5) -> bool:
    """Whether the paths of two routes come closer than clearance inside the junction box, or merge."""
    return _conflict_cached(route_a.entry, route_a.maneuver, route_b.entry, route_b.maneuver,
                            geom.name, geom.arm_length, geom.lane_width, geom.box_half, clearance)
