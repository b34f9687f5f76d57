"""Cubic sigmoid on an additively shared vector, as a standalone step.

The engines run this inline; the function here exposes the same pipeline
for direct use and testing. All parties call it with their share of z and
aligned round state (a fresh session suffices).
"""

from __future__ import annotations

from ..ring import RingMatrix
from .base import _EngineBase
from .config import TrainingConfig


def sigmoid_poly_shares(session, z_share: RingMatrix,
                        config: TrainingConfig, pool=None) -> RingMatrix:
    """Shares of q0 + q1 z + q2 z^2 + q3 z^3 for a shared column vector.

    z_share carries f fractional bits; the result carries 2f, so reconstruct
    with frac_bits doubled (or shift down by f first). Reconstruction
    matches the real polynomial within a few 2^-f: the z^2/z^3 truncations
    each lose at most a one-ulp carry per party, so even q0-only inputs
    like z=0 can come back one ulp shy of exact.
    """
    if z_share.cols != 1:
        raise ValueError("z must be a column vector")
    eng = _EngineBase(session, config, task="logistic", layout="sigmoid",
                      pool=pool)
    return eng._sigmoid_from_zf(z_share)
