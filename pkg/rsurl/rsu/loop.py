"""
Closed loop of simulator, CAV clients, links and RSU. Per step:
every running CAV reports over its uplink, the RSU ticks on the snapshot with the delivered reports, the commands
travel over the downlinks and each CAV applies its newest valid command, or brakes.
"""
import numpy as np
import pandas as pd

from rsurl import files, random2
from rsurl.printing import print2
from rsurl.env.config import ScenarioConfig
from rsurl.env.routes import ARMS
from rsurl.env.state import Vehicle
from rsurl.env.world import reset, step
from rsurl.nets.actor import RoleActorSet
from rsurl.rsu.codec import V2iStateReport, V2iCommand, UNDECLARED, DecodeError, encode, decode
from rsurl.rsu.link import LinkConfig, Link
from rsurl.rsu.coordinator import RsuConfig, RsuState, SAFE_STOP, MONITOR_COLUMNS, tick, time_ms


class CavClient:
    """Vehicle side of the protocol."""

    def __init__(self, vehicle: Vehicle, declare_exit=True):
        self.id = vehicle.id
        self.entry_arm = ARMS.index(vehicle.route.entry)
        self.exit_arm = ARMS.index(vehicle.route.exit) if declare_exit else UNDECLARED
        self.seq = 0
        self.command = None
        self.n_safe_stops = 0

    def report(self, vehicle: Vehicle, now) -> V2iStateReport:
        self.seq += 1
        return V2iStateReport(vehicle_id=self.id, timestamp=now, x=vehicle.xy[0], y=vehicle.xy[1],
                              heading=vehicle.heading, speed=vehicle.speed, entry_arm=self.entry_arm,
                              exit_arm=self.exit_arm, seq=self.seq)

    def receive(self, command: V2iCommand):
        if command.vehicle_id != self.id:
            raise ValueError(f"Command for vehicle {command.vehicle_id} delivered to vehicle {self.id}")
        if self.command is None or command.seq > self.command.seq:
            self.command = command

    def action(self, now) -> np.ndarray:
        """The newest command while it is valid, a safe stop otherwise."""
        if self.command is not None and now < self.command.valid_until:
            return self.command.action
        self.n_safe_stops += 1
        return SAFE_STOP.copy()


def _links(ids, config: LinkConfig, seed):
    ss = random2.spawn(seed, 2 * len(ids))
    up = {k: Link(config, rng=np.random.default_rng(ss[2*i])) for i, k in enumerate(ids)}
    down = {k: Link(config, rng=np.random.default_rng(ss[2*i+1])) for i, k in enumerate(ids)}
    return up, down


def _decode_all(frames, rsu: RsuState, verbose):
    msgs = []
    for b in frames:
        try:
            msgs.append(decode(b))
        except DecodeError as e:
            rsu.n_rejected += 1
            print2(f"RSU: dropped undecodable frame, {e}", verbose=verbose)
    return msgs


def run_rsu_episode(config: ScenarioConfig, seed, actors: RoleActorSet, link: LinkConfig = None,
                    rsu_config: RsuConfig = None, declare_exit=True, link_seed=None, on_step=None, verbose=None):
    """
    One episode with the RSU in the loop. Link randomness comes from link_seed (default: seed) and never touches
    the simulator streams. on_step(state, actions, results) as in world.run_episode.
    Returns (final state, per-CAV returns, monitoring records, RsuState, {id: CavClient}).
    """
    link = LinkConfig() if link is None else link.validate()
    state = reset(config, seed)
    rsu = RsuState(geom=config.map, config=rsu_config, actors=actors)

    cavs = state.cavs()
    clients = {v.id: CavClient(v, declare_exit=declare_exit) for v in cavs}
    up, down = _links([v.id for v in cavs], config=link, seed=seed if link_seed is None else link_seed)

    returns = {v.id: 0.0 for v in cavs}
    records = []
    if on_step is not None:
        on_step(state, None, None)
    while not state.done:
        now = time_ms(state)
        running = state.cavs()
        for v in running:
            up[v.id].send(encode(clients[v.id].report(v, now)), now)
        inbox = _decode_all([b for k in sorted(up) for b in up[k].deliver(now)], rsu=rsu, verbose=verbose)

        commands, record = tick(rsu, inbox, state, verbose=verbose)
        records.append(record)
        for c in commands:
            down[c.vehicle_id].send(encode(c), now)
        for k in sorted(down):
            for c in _decode_all(down[k].deliver(now), rsu=rsu, verbose=verbose):
                clients[k].receive(c)

        actions = {v.id: clients[v.id].action(now) for v in running}
        state, results = step(state, actions)
        for k, res in results.items():
            returns[k] += res.reward
        if on_step is not None:
            on_step(state, actions, results)

    return state, returns, records, rsu, clients


def monitoring_frame(records) -> pd.DataFrame:
    return pd.DataFrame([[r[c] for c in MONITOR_COLUMNS] for r in records], columns=list(MONITOR_COLUMNS))


def save_monitoring(file, records, seed=None, config_hash=None):
    files.save_csv(monitoring_frame(records), file=file, seed=seed, config_hash=config_hash)
