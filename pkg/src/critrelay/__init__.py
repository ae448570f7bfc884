"""Critical distance relay identification for transient stability studies.

Subpackages and modules:

* ``gridcase``  case files, admittance matrix, Newton-Raphson power flow
* ``dynsim``    classical-machine time-domain simulation with relay monitoring
* ``relaysim``  mho distance relays, zone timers and placement
* ``dataset``   contingency suites, first-cycle features and labeled corpora
* ``forest``    random forest, metrics, cross-validation and grid search
* ``pipeline``  identification and three-case verification workflows
"""

__version__ = "0.1.0"
