"""Output-buffered switch port: FIFO service and explicit-rate feedback.

Each output port owns an unbounded FIFO served at link rate (work
conserving, no loss) and measures its own input over short intervals: an
interval ends after a fixed cell count or a fixed time, whichever comes
first.  From the latest measurement the port offers each VC an explicit
rate: the larger of the equal split of the target rate and the VC's own
rate normalized by the load factor, never above the target rate.  The
running minimum of those offers is stamped into backward RM cells.

An interval in which nothing arrived keeps the previous measurement; with
no measurement at all the port offers the target rate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .protocol import Cell, Direction, RmFields
from .units import CellRate, SimTime, PS_PER_SEC, PS_PER_US, cell_tx_time


@dataclass(frozen=True)
class Measurement:
    input_rate: CellRate  # cells/s arrived over the interval
    num_active: int  # distinct VCs seen in the interval
    load_factor: float  # input_rate / target rate


class PortState:
    """One output port of a switch, including its attached link."""

    def __init__(
        self,
        name: str,
        to_node: str,
        link_rate: CellRate,
        prop_delay: SimTime,
        target_utilization: float = 0.9,
        interval_cell_limit: int = 30,
        interval_time_limit: SimTime = 20 * PS_PER_US,
    ):
        if not 0.0 < target_utilization <= 1.0:
            raise ValueError(f"target utilization must be in (0, 1], got {target_utilization}")
        if interval_cell_limit < 1 or interval_time_limit < 1:
            raise ValueError("interval limits must be positive")
        self.name = name
        self.to_node = to_node
        self.link_rate = link_rate
        self.prop_delay = prop_delay
        self.tx_time = cell_tx_time(link_rate)
        self.target_utilization = target_utilization
        self.interval_cell_limit = interval_cell_limit
        self.interval_time_limit = interval_time_limit

        self.queue: deque[Cell] = deque()
        self.busy = False

        self.accum_cells = 0
        self.interval_start: SimTime = 0
        self.interval_id = 0  # bumps on every close; stale timers check it
        self.active_vcs: set[str] = set()
        self.ccr_table: dict[str, CellRate] = {}
        self.measurement: Measurement | None = None

        self.enqueued = 0
        self.dequeued = 0
        self.max_queue = 0

    @property
    def target_rate(self) -> CellRate:
        return self.target_utilization * self.link_rate

    def enqueue(self, cell: Cell, now: SimTime) -> bool:
        """Append a cell, account for it, and close the interval if due.

        Returns True when this arrival closed the measurement interval
        (the caller then restarts the interval timer).
        """
        self.queue.append(cell)
        self.enqueued += 1
        if len(self.queue) > self.max_queue:
            self.max_queue = len(self.queue)
        self.accum_cells += 1
        self.active_vcs.add(cell.vc_id)
        rm = cell.rm
        if rm is not None and rm.direction is Direction.FORWARD:
            self.ccr_table[cell.vc_id] = rm.ccr
        if (
            self.accum_cells >= self.interval_cell_limit
            or now - self.interval_start >= self.interval_time_limit
        ):
            self.end_interval(now)
            return True
        return False

    def end_interval(self, now: SimTime) -> Measurement | None:
        """Close the measurement interval; returns the measurement now in effect.

        Empty and zero-length intervals retain the previous measurement so
        that a silent source does not wipe out the feedback basis.
        """
        duration = now - self.interval_start
        if duration > 0:
            if self.accum_cells > 0:
                input_rate = self.accum_cells * PS_PER_SEC / duration
                self.measurement = Measurement(
                    input_rate=input_rate,
                    num_active=len(self.active_vcs),
                    load_factor=input_rate / self.target_rate,
                )
            self.interval_start = now
        self.accum_cells = 0
        self.active_vcs.clear()
        self.interval_id += 1
        return self.measurement

    def compute_er(self, vc_id: str) -> CellRate:
        """Explicit rate offered to ``vc_id`` from the latest measurement."""
        m = self.measurement
        target = self.target_rate
        if m is None or m.num_active < 1:
            return target
        fair_share = target / m.num_active
        ccr = self.ccr_table.get(vc_id, 0.0)
        vc_share = ccr / m.load_factor if m.load_factor > 0 else 0.0
        return min(max(fair_share, vc_share), target)

    def stamp_backward(self, rm: RmFields, vc_id: str) -> None:
        """Lower (never raise) the explicit rate carried by a backward RM cell."""
        if rm.direction is not Direction.BACKWARD:
            raise ValueError("only backward RM cells are stamped")
        er = self.compute_er(vc_id)
        if er < rm.er:
            rm.er = er

    def pop(self) -> Cell:
        """Dequeue the head cell at service completion."""
        self.dequeued += 1
        return self.queue.popleft()
