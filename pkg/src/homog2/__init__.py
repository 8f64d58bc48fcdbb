"""Second-order homogenization of parameterized hyperelastic RVEs.

Library layout:

- ``geometry``:  hole splines, mesh ingestion, geometry transformation map
- ``material``:  compressible Mooney-Rivlin plane-strain model
- ``fem``:       TRI6 element machinery, quadrature, constrained solves
- ``micro``:     RVE boundary-value problem and effective quantities
- ``snapshots``: sampling plans, snapshot generation and storage
- ``pod``:       proper orthogonal decomposition of snapshot sets
- ``cubature``:  empirical cubature (greedy point selection + NNLS)
- ``rom``:       reduced-order micro model (artifact build/save/solve)
- ``macroscale``: strain-gradient plate problem driven by either micro model
- ``cli``:       the ``homog2`` command line front end
"""

__version__ = "0.1.0"
