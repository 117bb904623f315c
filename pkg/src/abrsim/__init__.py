"""ATM ABR rate-control simulator and sizing calculators.

The package has two halves that check each other:

* a deterministic discrete-event simulator of ABR sources, switches and
  links (``engine``, ``protocol``, ``switch``, ``metrics``), and
* closed-form calculators for the rule-6 parameter arithmetic
  (``analysis``).

Everything is driven from the ``abrsim`` command line tool; see
``abrsim --help`` and the bundled ``fig3.cfg`` scenario.
"""

__version__ = "0.1.0"

from .units import CellRate, SimTime, cell_tx_time, cps_to_mbps, mbps_to_cps

__all__ = [
    "CellRate",
    "SimTime",
    "cell_tx_time",
    "cps_to_mbps",
    "mbps_to_cps",
    "__version__",
]
