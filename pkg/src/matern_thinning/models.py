"""Model specifications for the three thinning variants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .distributions import MarkDistribution, WeightDistribution
from .interactions import InteractionFunction

__all__ = ["ModelSpec", "VARIANTS"]

VARIANTS = ("mat1", "mat1-marked", "mat2")


@dataclass(frozen=True)
class ModelSpec:
    """A thinned-Poisson model.

    variant "mat1": unmarked base process, pairwise mutual deletion.
    variant "mat1-marked": marked base process, mark-dependent mutual
    deletion.  variant "mat2": marked and weighted base process; in a
    competing pair only the point with the larger (or tied) weight is at
    risk.  `lam` is the base Poisson intensity, `p0` the independent
    retention probability applied to survivors.
    """

    variant: str
    lam: float
    p0: float
    f: InteractionFunction
    dim: int
    mu: Optional[MarkDistribution] = None
    nu: Optional[WeightDistribution] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if not (0.0 < self.p0 <= 1.0):
            raise ValueError("p0 must be in (0, 1]")
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        if self.variant == "mat1":
            if self.f.marked:
                raise ValueError("mat1 requires an unmarked interaction")
        else:
            if self.mu is None:
                raise ValueError(f"{self.variant} requires a mark distribution")
            if not self.f.marked:
                raise ValueError(f"{self.variant} requires a marked interaction")
        if self.variant == "mat2" and self.nu is None:
            raise ValueError("mat2 requires a (continuous) weight distribution")

    @property
    def marked(self) -> bool:
        return self.variant != "mat1"

    def mark_upper(self) -> Optional[float]:
        return None if self.mu is None else self.mu.support()[1]

    def interaction_range(self) -> float:
        """Cutoff of f, maximized over the mark support (may be inf)."""
        if self.f.marked:
            return self.f.max_cutoff(self.mark_upper())
        return self.f.cutoff()
