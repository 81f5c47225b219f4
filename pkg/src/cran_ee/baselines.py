"""Comparison schemes sharing the penalized-DC machinery.

Two reference designs bracket the selection-enabled energy-efficiency
solver:

* ``run_semax`` maximizes the sum rate outright (every user served, all
  selection variables pinned to one, no power-versus-rate trade-off in the
  objective).  At generous power budgets it spends everything it is given,
  which is exactly why its energy efficiency collapses at high budgets.
* ``run_eemax_noselect`` keeps the energy-efficiency objective but again
  serves every user over every RU.  It saturates instead of collapsing,
  and in the power-starved regime it behaves like ``run_semax`` -- with
  little power to spare, spending it all *is* the efficient design.

Both reuse the iteration loop, surrogates, and extraction from
:mod:`cran_ee.sdpdc`; the only differences are the objective and that the
RU-user link set stays fixed at all-on.
"""

from __future__ import annotations

from typing import Optional, Tuple

from cran_ee.model import ChannelRealization, NetworkConfig, SolutionCandidate
from cran_ee.sdpdc import (
    EE_NOSELECT,
    SE_MAX,
    IterationTrace,
    SdpDcSettings,
    run,
)

__all__ = ["run_semax", "run_eemax_noselect"]


def run_semax(channel: ChannelRealization, cfg: NetworkConfig,
              settings: Optional[SdpDcSettings] = None
              ) -> Tuple[SolutionCandidate, IterationTrace]:
    """Sum-rate maximization with every RU-user link active.

    Same DC loop and constraint set as the main solver, but the objective
    is the sum of the rate epigraphs alone and the per-link power bounds
    act directly on the precoder block traces.  Energy efficiency of the
    result is a post-hoc evaluation, not an optimization target.
    """
    return run(channel, cfg, settings, algorithm=SE_MAX)


def run_eemax_noselect(channel: ChannelRealization, cfg: NetworkConfig,
                       settings: Optional[SdpDcSettings] = None
                       ) -> Tuple[SolutionCandidate, IterationTrace]:
    """Energy-efficiency maximization without link selection.

    The static power term is constant at all-on selection, so this
    maximizes rate per watt of spent (not budgeted) power; it may leave
    budget unused, unlike :func:`run_semax`.
    """
    return run(channel, cfg, settings, algorithm=EE_NOSELECT)
