"""Bounded-support Gaussian mechanisms with per-instance RDP and FIL accounting.

Modules:
  numerics     normal special functions in log space, quadrature
  mechanisms   specs, samplers and densities
  fil          Fisher information loss closed forms
  rdp          Renyi divergence closed forms and per-instance accounting
  oracles      numerical references for the closed forms
  accountant   per-step accounting of clipped gradient sums
  experiments  privacy curves and the mean-estimation sweep
  cli          command-line front end
"""

from boundedgauss.mechanisms import (MechanismKind, MechanismSpec, SupportBox,
                                     SupportInterval, make_rng)
from boundedgauss.rdp import DEFAULT_ALPHAS, RdpCurve, RdpPoint, Sensitivity

__all__ = ['MechanismKind', 'MechanismSpec', 'SupportBox', 'SupportInterval', 'make_rng',
           'DEFAULT_ALPHAS', 'RdpCurve', 'RdpPoint', 'Sensitivity']
__version__ = '0.1.0'
