"""Closed-form right-hand side of the genus-zero determinant formula.

For a cover with simple critical values ``z_1, ..., z_M`` over a conical
metric ``rho |dz|^2``::

    Det' Delta = C |tau|^2 prod_k rho(z_k)^(1/8)

with ``C`` independent of the moduli.  Only the degree-2 tau-function
``tau = (z1 - z2)^(1/4)`` is built in; others plug in via ``TauProvider``.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cover import COINCIDENCE_TOL
from .errors import DegenerateModuli
from .metric import eval_rho


def tau_deg2(z1, z2):
    """Principal fourth root of ``z1 - z2``.

    Only ``|tau|^2`` is used downstream, so the branch is immaterial.
    """
    z1, z2 = complex(z1), complex(z2)
    if not (np.isfinite(z1) and np.isfinite(z2)):
        raise DegenerateModuli("critical values must be finite")
    if abs(z1 - z2) <= COINCIDENCE_TOL * max(1.0, abs(z1), abs(z2)):
        raise DegenerateModuli("z1 and z2 must differ")
    return (z1 - z2) ** 0.25


@dataclass(frozen=True)
class TauProvider:
    """Maps critical values ``(z_1, ..., z_M)`` to a complex tau."""

    evaluator: Callable
    label: str = "custom"

    def __call__(self, critical_values):
        tau = complex(self.evaluator(*critical_values))
        if tau == 0 or not np.isfinite(tau):
            raise DegenerateModuli(f"tau vanishes or diverges at {tuple(critical_values)}")
        return tau


DEG2 = TauProvider(tau_deg2, "deg2")


def rhs_genus0(tau, metric, critical_values):
    """``|tau|^2 prod_k rho(z_k)^(1/8)``.

    Parameters
    ----------
    tau : TauProvider or complex
        Either a provider evaluated at ``critical_values`` or a precomputed value.
    metric : ConicalMetricSpec
    critical_values : sequence of complex
    """
    zs = [complex(z) for z in critical_values]
    t = tau(zs) if callable(tau) else complex(tau)
    log_rho = sum(np.log(eval_rho(metric, z)) for z in zs)
    return float(abs(t) ** 2 * np.exp(log_rho / 8.0))


def log_rhs_genus0(tau, metric, critical_values):
    """``ln`` of :func:`rhs_genus0`, computed without overflow."""
    zs = [complex(z) for z in critical_values]
    t = tau(zs) if callable(tau) else complex(tau)
    return float(2.0 * np.log(abs(t)) + sum(np.log(eval_rho(metric, z)) for z in zs) / 8.0)


def log_C(log_det, rhs):
    """``log_det - ln(rhs)``; constant across moduli if the formula holds."""
    if not rhs > 0:
        raise ValueError("rhs must be positive")
    return float(log_det) - float(np.log(rhs))
