"""Result models for inference tests"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .resampling import Sidedness, decide, exceedance_p, is_degenerate


@dataclass
class TestResult:
    """Outcome of one resampling test"""

    __test__ = False  # not a pytest class

    method: str
    mode: str
    statistic: float
    draws: NDArray[np.float64]
    p_value: float
    alpha: float
    sided: Sidedness
    decision: bool | None
    degenerate: bool = False
    seed: int | None = None
    count_observed: bool = False
    dropped: int = 0
    details: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_draws(  # noqa: PLR0913
        cls,
        method: str,
        mode: str,
        statistic: float,
        draws: NDArray[np.float64],
        alpha: float,
        sided: Sidedness,
        seed: int | None = None,
        count_observed: bool = False,
        dropped: int = 0,
        details: dict[str, Any] | None = None,
    ) -> "TestResult":
        """Compute p-value and decision; a degenerate statistic withholds the decision"""
        degenerate = is_degenerate(draws, statistic)
        p_value = exceedance_p(draws, statistic, count_observed) if draws.size else 1.0
        return cls(
            method=method,
            mode=mode,
            statistic=float(statistic),
            draws=draws,
            p_value=p_value,
            alpha=alpha,
            sided=sided,
            decision=None if degenerate else decide(p_value, alpha, sided),
            degenerate=degenerate,
            seed=seed,
            count_observed=count_observed,
            dropped=dropped,
            details=details or {},
        )

    @property
    def n_draws(self) -> int:
        return int(self.draws.shape[0])

    @property
    def rejected(self) -> bool:
        """Withheld decisions count as non-rejections"""
        return bool(self.decision)

    def recompute_p(self) -> float:
        return exceedance_p(self.draws, self.statistic, self.count_observed)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "mode": self.mode,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "sided": self.sided,
            "decision": self.decision,
            "degenerate": self.degenerate,
            "n_draws": self.n_draws,
            "dropped": self.dropped,
            "seed": self.seed,
            "details": self.details,
        }
