"""
Roadside unit: keeps the newest report of every CAV, assigns driving roles and, once per tick, runs the role
actors on the ground-truth snapshot of the junction to command every reporting CAV.
"""
import numpy as np

from rsurl.math2 import wrap_angle
from rsurl.object2 import SlotsObject
from rsurl.printing import print2
from rsurl.env.config import A_MIN, MapGeometry, clamp_action
from rsurl.env.routes import ARMS, ARM_DIRECTION, inbound_point, maneuver_between
from rsurl.env.state import WorldState
from rsurl.env.geometry import rot90
from rsurl.env.observation import build_observation
from rsurl.env.reward import min_pairwise_ttc
from rsurl.nets.actor import Actor, RoleActorSet, to_physical
from rsurl.rsu.codec import V2iStateReport, V2iCommand

SAFE_STOP = np.array([A_MIN, 0.0])

TURN_HEADING = 0.35  # rad, heading change that settles a turn
STRAIGHT_HEADING = 0.15  # rad, below this past the junction centre the route is straight
DRIFT_MIN = 0.5  # m, lateral offset from the inbound lane centre that hints at a turn

MONITOR_COLUMNS = ("tick", "min_ttc", "commands_sent", "stale_count", "junction_occupancy")


class MissingWeightsError(RuntimeError):
    pass


class StaleSnapshotError(RuntimeError):
    pass


class RsuConfig(SlotsObject):
    __slots__ = ("stale_ticks",   # reports older than this get a safe-stop command
                 "command_ttl")   # ticks a command stays valid

    def __init__(self, stale_ticks=3, command_ttl=3):
        self.stale_ticks = stale_ticks
        self.command_ttl = command_ttl

    def validate(self):
        if self.stale_ticks < 0 or self.command_ttl < 1:
            raise ValueError(f"Need stale_ticks >= 0 and command_ttl >= 1, got {self.stale_ticks}, "
                             f"{self.command_ttl}")
        return self


def time_ms(state: WorldState) -> int:
    return int(round(state.time * 1000))


def mean_action(actor: Actor, obs) -> np.ndarray:
    """Deterministic action in physical units, the command payload."""
    u = actor.act(np.asarray(obs, dtype=float)[np.newaxis])[0]
    return clamp_action(to_physical(np.clip(u, -1, 1)))


def in_process_policy(actors: RoleActorSet):
    """The RSU's decision rule without the protocol: state -> {id: action} for world.run_episode."""
    def policy(state: WorldState):
        return {v.id: mean_action(actors[v.role], build_observation(state, v.id)) for v in state.cavs()}

    return policy


# Roles
# ----------------------------------------------------------------------------------------------------------------------
def infer_role(history, geom: MapGeometry):
    """
    Role of a CAV with undeclared route from its approach track, as (role, final).
    A heading change of TURN_HEADING settles a turn, passing the junction centre without one settles straight.
    Before that the lateral drift from the inbound lane centre gives a provisional turn, otherwise straight.
    """
    first, last = history[0], history[-1]
    entry = ARMS[first.entry_arm]
    d_in = -ARM_DIRECTION[entry]

    dtheta = wrap_angle(last.heading - np.arctan2(d_in[1], d_in[0]))
    if abs(dtheta) >= TURN_HEADING:
        return ("left" if dtheta > 0 else "right"), True

    xy = last.xy
    if xy @ d_in > 0 and abs(dtheta) < STRAIGHT_HEADING:
        return "straight", True

    lateral = float((xy - inbound_point(entry, 0., geom)) @ rot90(d_in, +1))  # > 0 left of the lane centre
    if abs(lateral) >= DRIFT_MIN:
        return ("left" if lateral > 0 else "right"), False
    return "straight", False


def assign_role(history, geom: MapGeometry) -> str:
    """Role from the declared entry and exit arm, or inferred from the track if the exit is undeclared."""
    if len(history) == 0:
        raise ValueError("Cannot assign a role without any report")
    last = history[-1]
    if last.exit is not None:
        return maneuver_between(last.entry, last.exit)
    return infer_role(history, geom)[0]


# State
# ----------------------------------------------------------------------------------------------------------------------
class RsuState:
    """Single writer: only tick() and receive() change it."""

    def __init__(self, geom: MapGeometry, config: RsuConfig = None, actors: RoleActorSet = None):
        self.geom = geom
        self.config = RsuConfig() if config is None else config.validate()
        self.actors = actors
        self.reports = {}       # id -> newest report
        self.history = {}       # id -> accepted reports in order
        self.roles = {}         # id -> role, fixed once assigned
        self.seq = {}           # id -> sequence number of the last command
        self.unreported = {}    # id -> tick it first appeared in a snapshot, while it has not reported yet
        self.tick = 0
        self.last_step = None

        self.min_ttc = np.inf
        self.n_commands = 0
        self.n_stale = 0
        self.n_rejected = 0     # out-of-order or undecodable reports

    def load_weights(self, actors: RoleActorSet):
        self.actors = actors
        return self

    def receive(self, report: V2iStateReport) -> bool:
        k = report.vehicle_id
        newest = self.reports.get(k)
        if newest is not None and (report.seq <= newest.seq or report.timestamp < newest.timestamp):
            self.n_rejected += 1
            return False

        self.reports[k] = report
        self.history.setdefault(k, []).append(report)
        return True

    def role(self, k) -> str:
        if k in self.roles:
            return self.roles[k]

        history = self.history[k]
        if history[-1].exit is not None:
            role, final = assign_role(history, self.geom), True
        else:
            role, final = infer_role(history, self.geom)
        if final:
            self.roles[k] = role
        return role

    def forget(self, k):
        for d in (self.reports, self.history, self.roles, self.seq, self.unreported):
            d.pop(k, None)

    def staleness(self, k, now, dt) -> int:
        """Age of the newest report of k in ticks of dt seconds, now in ms."""
        return int(round((now - self.reports[k].timestamp) / (dt * 1000)))

    def counters(self) -> dict:
        return dict(ticks=self.tick, min_ttc=self.min_ttc, commands_sent=self.n_commands, stale_count=self.n_stale,
                    rejected=self.n_rejected)


def _command(rsu: RsuState, k, action, now, dt) -> V2iCommand:
    rsu.seq[k] = rsu.seq.get(k, 0) + 1
    ttl = max(1, int(round(rsu.config.command_ttl * dt * 1000)))
    return V2iCommand(vehicle_id=k, timestamp=now, a_acc=action[0], a_steer=action[1], seq=rsu.seq[k],
                      valid_until=now + ttl)


def tick(rsu: RsuState, inbox, snapshot: WorldState, verbose=None):
    """
    One RSU cycle on a new snapshot: accept the inbox, then one command per running CAV that has reported,
    in the vehicle order of the snapshot. A running CAV that never reported gets no command; its staleness counts
    the ticks since it first appeared and it is stale past stale_ticks like a silent reporter.
    Returns (commands, monitoring record).
    """
    if rsu.actors is None:
        raise MissingWeightsError("No actor weights loaded into the RSU")
    if rsu.last_step is not None and snapshot.step <= rsu.last_step:
        raise StaleSnapshotError(f"Snapshot of step {snapshot.step} is not newer than the last one "
                                 f"(step {rsu.last_step})")
    rsu.last_step = snapshot.step

    for report in inbox:
        rsu.receive(report)

    now = time_ms(snapshot)
    running = snapshot.cavs()
    commands, staleness = [], {}
    n_stale = 0
    for v in running:
        reported = v.id in rsu.reports
        if reported:
            rsu.unreported.pop(v.id, None)
            age = rsu.staleness(v.id, now=now, dt=snapshot.config.dt)
        else:
            age = rsu.tick - rsu.unreported.setdefault(v.id, rsu.tick)
        staleness[v.id] = age
        stale = age > rsu.config.stale_ticks
        n_stale += stale

        if not reported:
            if stale:
                print2(f"RSU tick {rsu.tick}: no report from vehicle {v.id} for {age} ticks", verbose=verbose)
            continue
        if stale:
            print2(f"RSU tick {rsu.tick}: report of vehicle {v.id} is {age} ticks old, safe stop", verbose=verbose)
            action = SAFE_STOP
        else:
            role = rsu.role(v.id)
            if role not in rsu.actors:
                raise MissingWeightsError(f"No actor weights for role '{role}' of vehicle {v.id}")
            action = mean_action(rsu.actors[role], build_observation(snapshot, v.id))
        commands.append(_command(rsu, v.id, action, now=now, dt=snapshot.config.dt))

    ids = {v.id for v in running}
    for k in [k for k in {**rsu.reports, **rsu.unreported} if k not in ids]:
        rsu.forget(k)

    min_ttc = min_pairwise_ttc(snapshot)
    rsu.min_ttc = min(rsu.min_ttc, min_ttc)
    rsu.n_commands += len(commands)
    rsu.n_stale += n_stale
    record = dict(tick=rsu.tick, min_ttc=min_ttc, commands_sent=len(commands), stale_count=n_stale,
                  junction_occupancy=snapshot.junction_occupancy(), staleness=staleness)
    rsu.tick += 1
    return commands, record
