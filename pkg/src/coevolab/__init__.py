"""Surrogate-assisted cooperative coevolution laboratory.

Subpackages and modules:

* :mod:`coevolab.nkcs` -- seeded NKCS coevolutionary fitness landscapes.
* :mod:`coevolab.evolution` -- steady-state cooperative GA (CGA-b/br/re/o).
* :mod:`coevolab.surrogate` -- MLP surrogate and the SCGA variants.
* :mod:`coevolab.experiments` -- batch suites, curves, significance tables.
* :mod:`coevolab.stats` -- Mann-Whitney U test.
* :mod:`coevolab.vawt` -- 17-gene wind turbine geometry, STL and KE fitness.
"""

__version__ = "0.1.0"
