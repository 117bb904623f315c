"""Closed-form calculators for sizing the no-feedback rate cutoff.

These functions answer, without running the simulator, the questions the
simulator answers empirically: how many unanswered RM cells a source
should tolerate before cutting its rate (``min_crm``), how many cells fit
in flight on a path (``flight_capacity``), what rate remains after a run
of cutoff decrements (``decay_after``), and when the cutoff condition
triggers at all (``trigger_predicate``).

``decay_after`` is computed by iterating the per-RM decrement, exactly as
a live source does; ``decay_closed_form`` is the power-law shortcut and
is validated against the iterated version in the test suite.  Keep both:
they are intentionally independent routes to the same number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .units import CellRate, SimTime, ps_to_s


@dataclass(frozen=True)
class PathSpec:
    """A round-trip path: RTT, bottleneck link rate, RM interleave, hops.

    ``rtt`` is the full round-trip time in picoseconds.  ``hops`` counts
    bottleneck (long-delay) hops in series; the required cutoff threshold
    scales linearly with it.
    """

    rtt: SimTime
    link_rate: CellRate
    nrm: int = 32
    hops: int = 1

    def __post_init__(self):
        if self.rtt < 0:
            raise ValueError(f"rtt must be >= 0, got {self.rtt}")
        if self.link_rate <= 0:
            raise ValueError(f"link_rate must be > 0, got {self.link_rate}")
        if self.nrm < 1 or self.hops < 1:
            raise ValueError(f"nrm and hops must be >= 1, got {self.nrm}, {self.hops}")


def crm_from_tbe(tbe: int, nrm: int) -> int:
    """Cutoff threshold implied by a transient buffer exposure of ``tbe`` cells.

    One RM cell is sent per ``nrm`` cells, so the threshold is the ceiling
    of ``tbe / nrm``.
    """
    if tbe < 1:
        raise ValueError(f"tbe must be >= 1, got {tbe}")
    if nrm < 1:
        raise ValueError(f"nrm must be >= 1, got {nrm}")
    return -(-tbe // nrm)


def flight_capacity(path: PathSpec) -> int:
    """Cells needed to fill the path both ways: RTT times the link rate."""
    return math.ceil(ps_to_s(path.rtt) * path.link_rate)


def min_crm(path: PathSpec) -> int:
    """Smallest cutoff threshold that never triggers on an idle-free path.

    The threshold must cover a full round trip of RM cells,
    ``RTT * rate / nrm``, rounded up (rounding down would allow spurious
    rate cuts), and scales with the number of bottleneck hops.
    """
    per_hop = math.ceil(ps_to_s(path.rtt) * path.link_rate / path.nrm)
    return per_hop * path.hops


def decay_after(icr: CellRate, cdf: float, mcr: CellRate, k: int) -> CellRate:
    """Rate left after the cutoff has fired on ``k + 1`` consecutive RM cells.

    Iterates the per-RM decrement ``acr <- max(mcr, acr - acr*cdf)`` from
    ``icr``: one decrement for the triggering RM cell plus ``k`` more for
    the RM cells that follow with still no feedback.  This is bit-for-bit
    what the simulated source computes.
    """
    if not 0.0 <= cdf <= 1.0:
        raise ValueError(f"cdf must be in [0, 1], got {cdf}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    acr = icr
    for _ in range(k + 1):
        acr = max(mcr, acr - acr * cdf)
    return acr


def decay_closed_form(icr: CellRate, cdf: float, mcr: CellRate, k: int) -> CellRate:
    """Power-law form of ``decay_after``; cross-check only."""
    if not 0.0 <= cdf <= 1.0:
        raise ValueError(f"cdf must be in [0, 1], got {cdf}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return max(mcr, icr * (1.0 - cdf) ** (k + 1))


def trigger_predicate(fwd_rate: CellRate, bwd_rate: CellRate, crm: int) -> bool:
    """True when the cutoff condition holds for the given RM cell rates.

    The cutoff fires when backward RM cells return at less than 1/crm of
    the forward RM rate, i.e. when ``fwd_rate >= crm * bwd_rate``.  The
    boundary case is inclusive.
    """
    if fwd_rate <= 0:
        raise ValueError(f"forward rate must be > 0, got {fwd_rate}")
    return fwd_rate >= crm * bwd_rate
