"""Simulation toolkit for hardware-enabled compute guarantees.

Subpackages: ``protocol`` (signed ruleset updates on simulated devices),
``oversight`` (sampling, registry and inspection), ``stability`` (the
cooperation game) and ``scenario`` (config-driven end-to-end runs).
"""

__version__ = "0.1.0"
