"""Deterministic discrete-event core: topology, links, event loop.

Events are ordered by (timestamp, scheduling sequence number); the
sequence number is assigned globally at scheduling time, so simultaneous
events run in the order they were scheduled and two runs of the same
configuration produce identical traces.

Node model: end systems originate VCs (persistent greedy sources) and
turn forward RM cells around; switches queue forward-path cells on the
output port toward the next hop.  Backward RM cells are never queued:
each switch stamps them against the port that carries the VC's forward
data (that port's measurement is what the source's rate should track) and
re-emits them on the reverse link immediately.  That priority treatment
of feedback is a deliberate simplification and is reported in run
metadata.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from . import protocol
from .metrics import Recorder
from .protocol import Cell, Direction, SourceParams
from .switch import PortState
from .units import CellRate, SimTime, PS_PER_MS, PS_PER_US, cell_tx_time


class ConfigError(Exception):
    """Topology or scenario that cannot be built."""


class SimulationError(Exception):
    """Internal invariant violated during a run."""


@dataclass(frozen=True)
class LinkSpec:
    name: str
    rate: CellRate  # cells/s
    prop_delay: SimTime  # one-way propagation, ps

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigError(f"link {self.name}: rate must be > 0")
        if self.prop_delay < 0:
            raise ConfigError(f"link {self.name}: propagation delay must be >= 0")


@dataclass(frozen=True)
class SwitchParams:
    target_utilization: float = 0.9
    interval_cell_limit: int = 30
    interval_time_limit: SimTime = 20 * PS_PER_US


@dataclass(frozen=True)
class VcSpec:
    vc_id: str
    path: tuple[str, ...]  # path[0] sends, path[-1] receives


@dataclass
class Topology:
    """Nodes, links and VCs; the forward and backward directions of every
    VC traverse the same links in reverse."""

    source_params: dict[str, SourceParams] = field(default_factory=dict)
    switch_params: dict[str, SwitchParams] = field(default_factory=dict)
    links: dict[tuple[str, str], LinkSpec] = field(default_factory=dict)
    vcs: tuple[VcSpec, ...] = ()

    def add_duplex_link(self, a: str, b: str, spec: LinkSpec) -> None:
        if (a, b) in self.links or (b, a) in self.links:
            raise ConfigError(f"duplicate link between {a} and {b}")
        self.links[(a, b)] = spec
        self.links[(b, a)] = spec


class VcRuntime:
    __slots__ = (
        "vc_id",
        "params",
        "path",
        "source_node",
        "dest_node",
        "fwd_hop",
        "bwd_hop",
        "state",
        "emitted",
        "delivered",
        "turned",
        "bwd_delivered",
    )

    def __init__(self, spec: VcSpec, params: SourceParams):
        self.vc_id = spec.vc_id
        self.params = params
        self.path = spec.path
        self.source_node = spec.path[0]
        self.dest_node = spec.path[-1]
        self.fwd_hop = {spec.path[i]: spec.path[i + 1] for i in range(len(spec.path) - 1)}
        self.bwd_hop = {spec.path[i]: spec.path[i - 1] for i in range(1, len(spec.path))}
        self.state = protocol.new_state(params)
        self.emitted = 0
        self.delivered = 0
        self.turned = 0
        self.bwd_delivered = 0


class SwitchRuntime:
    __slots__ = ("name", "params", "ports")

    def __init__(self, name: str, params: SwitchParams):
        self.name = name
        self.params = params
        self.ports: dict[str, PortState] = {}  # keyed by next-hop node

    def queued_cells(self) -> int:
        return sum(len(p.queue) for p in self.ports.values())


# Event kinds; payloads are never compared because sequence numbers are unique.
_EMIT = 0
_DELIVER = 1
_SERVICE = 2
_TIMER = 3
_TICK = 4

_TICK_INTERVAL = PS_PER_MS  # queue sampling cadence
_AUDIT_EVERY_TICKS = 100  # conservation audit cadence


class Engine:
    """Single-threaded event loop over one topology."""

    def __init__(self, topology: Topology, recorder: Recorder | None = None):
        self.topology = topology
        self.recorder = recorder
        self.now: SimTime = 0
        self._heap: list = []
        self._seq = 0
        self._ticks = 0
        self.events_processed = 0

        self._validate(topology)

        self.links = dict(topology.links)
        self._link_tx = {key: cell_tx_time(spec.rate) for key, spec in self.links.items()}
        self.switches = {
            name: SwitchRuntime(name, params) for name, params in topology.switch_params.items()
        }
        self.vcs: dict[str, VcRuntime] = {}
        for spec in topology.vcs:
            params = topology.source_params[spec.path[0]]
            self.vcs[spec.vc_id] = VcRuntime(spec, params)

        # Create the output ports each VC's forward direction needs.
        for vc in self.vcs.values():
            for i in range(1, len(vc.path) - 1):
                node, nxt = vc.path[i], vc.path[i + 1]
                sw = self.switches[node]
                if nxt not in sw.ports:
                    link = self.links[(node, nxt)]
                    sw.ports[nxt] = PortState(
                        name=f"{node}->{nxt}",
                        to_node=nxt,
                        link_rate=link.rate,
                        prop_delay=link.prop_delay,
                        target_utilization=sw.params.target_utilization,
                        interval_cell_limit=sw.params.interval_cell_limit,
                        interval_time_limit=sw.params.interval_time_limit,
                    )

        if recorder is not None:
            for vc in self.vcs.values():
                recorder.start_vc(vc.vc_id, vc.params.icr)
            for name in self.switches:
                recorder.start_switch(name)
            recorder.deviation(
                "backward RM cells bypass port queues (stamped and re-emitted "
                "immediately, ahead of reverse-direction data)"
            )
            self._push(_TICK_INTERVAL, _TICK, None)

        for vc in self.vcs.values():
            self._push(0, _EMIT, vc)
        for sw in self.switches.values():
            for port in sw.ports.values():
                self._push(port.interval_time_limit, _TIMER, (port, port.interval_id))

    @staticmethod
    def _validate(topology: Topology) -> None:
        if not topology.vcs:
            raise ConfigError("topology has no VCs")
        for spec in topology.vcs:
            path = spec.path
            if len(path) < 2:
                raise ConfigError(f"vc {spec.vc_id}: path needs at least two nodes")
            if len(set(path)) != len(path):
                raise ConfigError(f"vc {spec.vc_id}: path must be acyclic")
            if path[0] not in topology.source_params:
                raise ConfigError(f"vc {spec.vc_id}: no source parameters for {path[0]}")
            for end in (path[0], path[-1]):
                if end in topology.switch_params:
                    raise ConfigError(f"vc {spec.vc_id}: endpoint {end} is a switch")
            for node in path[1:-1]:
                if node not in topology.switch_params:
                    raise ConfigError(f"vc {spec.vc_id}: intermediate node {node} is not a switch")
            for a, b in zip(path, path[1:]):
                if (a, b) not in topology.links or (b, a) not in topology.links:
                    raise ConfigError(f"vc {spec.vc_id}: no link between {a} and {b}")

    # -- scheduling ---------------------------------------------------

    def _push(self, time: SimTime, kind: int, payload) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, kind, payload))

    def run_until(self, t_end: SimTime) -> None:
        """Process every event with timestamp <= t_end, in order."""
        if t_end < self.now:
            raise SimulationError(f"cannot run backwards: now={self.now}, t_end={t_end}")
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            time, _seq, kind, payload = heapq.heappop(heap)
            if time < self.now:
                raise SimulationError(f"event scheduled in the past: {time} < {self.now}")
            self.now = time
            self.events_processed += 1
            if kind == _EMIT:
                self._on_emit(payload)
            elif kind == _DELIVER:
                self._on_deliver(payload[0], payload[1])
            elif kind == _SERVICE:
                self._on_service(payload)
            elif kind == _TIMER:
                self._on_timer(payload[0], payload[1])
            else:
                self._on_tick()
        if t_end > self.now:
            self.now = t_end

    # -- transmission helpers ------------------------------------------

    def _forward(self, vc: VcRuntime, cell: Cell, node: str) -> None:
        nxt = vc.fwd_hop[node]
        key = (node, nxt)
        arrival = self.now + self._link_tx[key] + self.links[key].prop_delay
        self._push(arrival, _DELIVER, (cell, nxt))

    def _backward(self, vc: VcRuntime, cell: Cell, node: str) -> None:
        nxt = vc.bwd_hop[node]
        key = (node, nxt)
        arrival = self.now + self._link_tx[key] + self.links[key].prop_delay
        self._push(arrival, _DELIVER, (cell, nxt))

    # -- event handlers -------------------------------------------------

    def _on_emit(self, vc: VcRuntime) -> None:
        state = vc.state
        prev_acr = state.acr
        was_quiescent = state.quiescent
        cell = protocol.next_cell(state, vc.params, vc.vc_id, self.now)
        vc.emitted += 1
        rec = self.recorder
        if rec is not None:
            if state.acr != prev_acr:
                rec.acr_change(vc.vc_id, self.now, state.acr)
            if state.quiescent and not was_quiescent:
                rec.deviation(
                    f"vc {vc.vc_id}: rate decayed to zero; keep-alive RM probing engaged"
                )
        self._forward(vc, cell, vc.source_node)
        self._push(state.next_departure, _EMIT, vc)

    def _on_deliver(self, cell: Cell, node: str) -> None:
        vc = self.vcs[cell.vc_id]
        rm = cell.rm
        if rm is not None and rm.direction is Direction.BACKWARD:
            if node == vc.source_node:
                vc.bwd_delivered += 1
                state = vc.state
                prev_acr = state.acr
                protocol.on_backward_rm(state, vc.params, rm)
                rec = self.recorder
                if rec is not None:
                    rec.backward_rm(vc.vc_id, self.now)
                    if state.acr != prev_acr:
                        rec.acr_change(vc.vc_id, self.now, state.acr)
            else:
                port = self.switches[node].ports[vc.fwd_hop[node]]
                port.stamp_backward(rm, cell.vc_id)
                self._backward(vc, cell, node)
        elif node == vc.dest_node:
            vc.delivered += 1
            if self.recorder is not None:
                self.recorder.delivery(vc.vc_id, self.now, vc.delivered)
            if rm is not None:
                back = protocol.turnaround(rm)
                vc.turned += 1
                self._backward(vc, Cell(cell.vc_id, cell.seq, self.now, back), node)
        else:
            port = self.switches[node].ports[vc.fwd_hop[node]]
            if port.enqueue(cell, self.now):
                self._push(self.now + port.interval_time_limit, _TIMER, (port, port.interval_id))
            if not port.busy:
                port.busy = True
                self._push(self.now + port.tx_time, _SERVICE, port)

    def _on_service(self, port: PortState) -> None:
        cell = port.pop()
        self._push(self.now + port.prop_delay, _DELIVER, (cell, port.to_node))
        if port.queue:
            self._push(self.now + port.tx_time, _SERVICE, port)
        else:
            port.busy = False

    def _on_timer(self, port: PortState, interval_id: int) -> None:
        if interval_id != port.interval_id:
            return  # interval already closed by cell count
        port.end_interval(self.now)
        self._push(self.now + port.interval_time_limit, _TIMER, (port, port.interval_id))

    def _on_tick(self) -> None:
        rec = self.recorder
        for sw in self.switches.values():
            rec.queue_sample(sw.name, self.now, sw.queued_cells())
        self._ticks += 1
        if self._ticks % _AUDIT_EVERY_TICKS == 0:
            self.audit()
        self._push(self.now + _TICK_INTERVAL, _TICK, None)

    # -- accounting -------------------------------------------------------

    def audit(self) -> dict[str, dict[str, int]]:
        """Check per-VC cell conservation; raises SimulationError on a leak.

        Forward direction: cells emitted == delivered + queued at ports +
        in flight on links.  Backward direction: RM cells turned around ==
        delivered back to the source + in flight.  In-flight counts come
        from scanning pending delivery events, independently of the
        counters kept by the protocol handlers.
        """
        inflight_fwd: dict[str, int] = {vc_id: 0 for vc_id in self.vcs}
        inflight_bwd: dict[str, int] = {vc_id: 0 for vc_id in self.vcs}
        for _time, _seq, kind, payload in self._heap:
            if kind != _DELIVER:
                continue
            cell = payload[0]
            rm = cell.rm
            if rm is not None and rm.direction is Direction.BACKWARD:
                inflight_bwd[cell.vc_id] += 1
            else:
                inflight_fwd[cell.vc_id] += 1
        queued: dict[str, int] = {vc_id: 0 for vc_id in self.vcs}
        for sw in self.switches.values():
            for port in sw.ports.values():
                for cell in port.queue:
                    queued[cell.vc_id] += 1
        report = {}
        for vc_id, vc in self.vcs.items():
            fwd_rhs = vc.delivered + queued[vc_id] + inflight_fwd[vc_id]
            if vc.emitted != fwd_rhs:
                raise SimulationError(
                    f"vc {vc_id}: forward cell conservation violated at t={self.now}: "
                    f"emitted {vc.emitted} != delivered {vc.delivered} + queued "
                    f"{queued[vc_id]} + in-flight {inflight_fwd[vc_id]}"
                )
            bwd_rhs = vc.bwd_delivered + inflight_bwd[vc_id]
            if vc.turned != bwd_rhs:
                raise SimulationError(
                    f"vc {vc_id}: backward RM conservation violated at t={self.now}: "
                    f"turned {vc.turned} != delivered {vc.bwd_delivered} + "
                    f"in-flight {inflight_bwd[vc_id]}"
                )
            report[vc_id] = {
                "emitted": vc.emitted,
                "delivered": vc.delivered,
                "queued": queued[vc_id],
                "in_flight": inflight_fwd[vc_id],
            }
        if self.recorder is not None:
            self.recorder.audits_passed += 1
        return report
