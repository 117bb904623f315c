"""ABR source and destination end-system behavior.

A source paces cells at its allowed cell rate (ACR), starting each cycle
of ``nrm`` cells with one forward RM cell.  The destination turns forward
RM cells around; switches along the way stamp an explicit rate into the
backward copies, and the source adjusts ACR to that feedback.

The safety valve modeled here is the no-feedback cutoff: immediately
before each forward RM cell, if at least ``crm`` forward RM cells have
gone out since the last backward RM cell with BN=0 arrived, ACR is cut by
``acr * cdf`` (never below MCR).  The check runs once per RM emission and
the counter is reset only by feedback, so with feedback absent the cut
repeats on every subsequent RM cell and the rate decays geometrically.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .units import CellRate, SimTime, PS_PER_MS, cell_tx_time

# Keep-alive spacing once ACR has decayed all the way to zero (possible
# only when cdf == 1 and mcr == 0).  A truly silent source could never be
# restarted by feedback, so it keeps probing with one forward RM cell per
# 100 ms; runs report the engagement as a modeling deviation.
QUIESCENT_PROBE_GAP: SimTime = 100 * PS_PER_MS

# cdf is either 0 or a power of two between 1/64 and 1.
VALID_CDF = (0.0, 1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0)


class Direction(Enum):
    FORWARD = "fwd"
    BACKWARD = "bwd"


@dataclass
class RmFields:
    """Control fields of an RM cell.

    ``bn`` is False for source-generated cells (the only kind modeled;
    switches here never originate RM cells).  ``er`` starts at the
    source's PCR and is only ever lowered along the path.
    """

    direction: Direction
    bn: bool
    er: CellRate
    ccr: CellRate


@dataclass
class Cell:
    """One simulated cell; ``rm`` is None for data cells."""

    vc_id: str
    seq: int
    emitted_at: SimTime
    rm: RmFields | None = None

    @property
    def is_rm(self) -> bool:
        return self.rm is not None


@dataclass(frozen=True)
class SourceParams:
    """Per-VC rate parameters, in cells/second.

    ``crm`` and ``tbe`` must agree: crm == ceil(tbe / nrm).  There is no
    size cap on either; crm values far beyond 8 bits are the point.
    """

    pcr: CellRate
    mcr: CellRate
    icr: CellRate
    nrm: int = 32
    rif: float = 1.0
    cdf: float = 1 / 16
    crm: int = 32
    tbe: int = 1024

    def __post_init__(self):
        if not 0 <= self.mcr <= self.icr <= self.pcr:
            raise ValueError(
                f"need 0 <= mcr <= icr <= pcr, got mcr={self.mcr} icr={self.icr} pcr={self.pcr}"
            )
        if self.pcr <= 0:
            raise ValueError("pcr must be > 0")
        if self.nrm < 1:
            raise ValueError(f"nrm must be >= 1, got {self.nrm}")
        if not 0.0 < self.rif <= 1.0:
            raise ValueError(f"rif must be in (0, 1], got {self.rif}")
        if self.cdf not in VALID_CDF:
            raise ValueError(f"cdf must be 0 or a power of two in [1/64, 1], got {self.cdf}")
        if self.crm < 1 or self.tbe < 1:
            raise ValueError(f"crm and tbe must be >= 1, got {self.crm}, {self.tbe}")
        if self.crm != -(-self.tbe // self.nrm):
            raise ValueError(
                f"crm ({self.crm}) inconsistent with ceil(tbe/nrm) = "
                f"{-(-self.tbe // self.nrm)} (tbe={self.tbe}, nrm={self.nrm})"
            )


@dataclass
class SourceState:
    """Mutable per-VC source machine."""

    acr: CellRate
    unacked_fwd_rm: int = 0
    cells_since_rm: int = 0
    next_departure: SimTime = 0
    cells_sent_total: int = 0
    rm_sent_total: int = 0
    seq: int = 0
    rule6_count: int = 0
    first_rule6_cells: int | None = None
    quiescent: bool = False


def new_state(params: SourceParams) -> SourceState:
    # cells_since_rm starts one short of a full cycle so that the very
    # first cell on the wire is an RM cell.
    return SourceState(acr=params.icr, cells_since_rm=params.nrm - 1)


def apply_rule6(state: SourceState, params: SourceParams) -> bool:
    """No-feedback cutoff check, run immediately before each forward RM cell.

    Returns True when the cut fired.  Firing does not reset the counter,
    so the cut repeats on successive RM cells until feedback arrives.
    """
    if state.unacked_fwd_rm < params.crm:
        return False
    state.acr = max(params.mcr, state.acr - state.acr * params.cdf)
    state.rule6_count += 1
    if state.first_rule6_cells is None:
        state.first_rule6_cells = state.cells_sent_total
    return True


def on_backward_rm(state: SourceState, params: SourceParams, rm: RmFields) -> None:
    """Apply explicit-rate feedback from one backward RM cell.

    A BN=0 cell proves the round-trip path is alive and resets the
    unanswered-RM counter; a BN=1 cell adjusts the rate but leaves the
    counter alone.  The rate moves by at most ``rif * pcr`` upward, is
    capped by the explicit rate, and stays inside [mcr, pcr].
    """
    if rm.direction is not Direction.BACKWARD:
        raise ValueError("feedback must come from a backward RM cell")
    if not rm.bn:
        state.unacked_fwd_rm = 0
    wanted = min(state.acr + params.rif * params.pcr, rm.er)
    state.acr = min(max(wanted, params.mcr), params.pcr)


def next_cell(state: SourceState, params: SourceParams, vc_id: str, now: SimTime) -> Cell:
    """Emit the next cell of a persistent source and reschedule its pacing.

    Caller must hold ``now >= state.next_departure``.  Every ``nrm``-th
    cell is a forward RM cell carrying ccr = current ACR and er = PCR; the
    cutoff check runs just before it.  A source whose ACR has decayed to
    zero emits only keep-alive RM probes every 100 ms.
    """
    if state.acr == 0 or state.cells_since_rm == params.nrm - 1:
        apply_rule6(state, params)
        fields = RmFields(Direction.FORWARD, bn=False, er=params.pcr, ccr=state.acr)
        cell = Cell(vc_id, state.seq, now, fields)
        state.unacked_fwd_rm += 1
        state.rm_sent_total += 1
        state.cells_since_rm = 0
    else:
        cell = Cell(vc_id, state.seq, now)
        state.cells_since_rm += 1
    state.seq += 1
    state.cells_sent_total += 1
    if state.acr > 0:
        state.next_departure = now + cell_tx_time(state.acr)
        state.quiescent = False
    else:
        state.next_departure = now + QUIESCENT_PROBE_GAP
        state.quiescent = True
    return cell


def turnaround(rm: RmFields) -> RmFields:
    """Destination behavior: flip a forward RM cell around, fields intact."""
    if rm.direction is not Direction.FORWARD:
        raise ValueError("only forward RM cells are turned around")
    return RmFields(Direction.BACKWARD, rm.bn, rm.er, rm.ccr)
