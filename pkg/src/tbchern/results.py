from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class InvariantResult:
    """An invariant value with its nearest integer and method diagnostics."""

    value: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def integer(self) -> int:
        return int(round(self.value))

    @property
    def deviation(self) -> float:
        return abs(self.value - round(self.value))

    def __float__(self) -> float:
        return float(self.value)
