"""Logarithmic-increase / multiplicative-decrease bandwidth probing."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class ProberState:
    probed_bw: float = 0.0


def probe_update(state: ProberState, amended_bw: float, alpha: float, delta: float) -> float:
    """Advance the probe by one segment and return the new probed bandwidth.

    Below the estimate the gap is halved, with ``delta`` as the minimum step.
    At or above it the probe backs off by ``alpha`` times the overshoot,
    which lands it at or below the estimate for ``1 < alpha <= 2``.
    """
    b = state.probed_bw
    if b < amended_bw:
        b = b + max((amended_bw - b) / 2.0, delta)
    else:
        b = b + alpha * (amended_bw - b)
    state.probed_bw = max(b, 0.0)
    return state.probed_bw
