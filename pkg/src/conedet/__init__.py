"""Determinants of Laplacians on branched covers of the sphere with conical metrics.

Modules
-------
metric       conformal factors ``rho |dz|^2`` with cone points
cover        rational maps, critical data and distinguished local parameters
mesh         graded two-chart triangulations of the cover
fem          P1 stiffness/mass assembly, eigensolver, the special solution Y
asymptotics  expansion coefficients near critical points, ``b(lambda)``
zeta         heat-trace fitting and zeta-regularized determinants
formula      closed-form right-hand side and the constant ``log C``
harness      configs, verification experiments and outputs (CLI in ``cli``)
"""
__version__ = "0.1.0"
