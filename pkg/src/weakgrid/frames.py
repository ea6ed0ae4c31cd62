"""Per-unit dq-frame arithmetic shared by the plant and both controllers.

Every electrical signal in this package is a balanced three-phase quantity
projected onto some rotating reference frame, stored as a (d, q) pair.
Changing from a frame to one that leads it by ``delta`` radians multiplies
the complex phasor d + jq by exp(-j*delta); that sign convention is fixed
here and used consistently everywhere.
"""

from __future__ import annotations

import math
from typing import NamedTuple

__all__ = ["DqVector", "rotate", "active_power"]

# Frame angles are plain floats in radians; all operations on them are
# 2*pi-periodic.
FrameAngle = float


class DqVector(NamedTuple):
    """A balanced three-phase signal in a rotating frame, in per unit."""

    d: float
    q: float


def rotate(v: DqVector, delta: float) -> DqVector:
    """Express ``v`` in a frame that leads the current one by ``delta`` rad.

    Multiplies the phasor by exp(-j*delta), so ``rotate(rotate(v, a), -a)``
    recovers ``v`` and the Euclidean norm is preserved.
    """
    d, q = v
    if not (math.isfinite(d) and math.isfinite(q) and math.isfinite(delta)):
        raise ValueError("rotate requires finite components and angle")
    c = math.cos(delta)
    s = math.sin(delta)
    return DqVector(d * c + q * s, -d * s + q * c)


def active_power(v: DqVector, i: DqVector) -> float:
    """Active power of a voltage/current pair expressed in a common frame.

    Equals Re{V conj(I)} = v.d*i.d + v.q*i.q and is invariant under a
    simultaneous rotation of both arguments.
    """
    return v[0] * i[0] + v[1] * i[1]
