"""
Entrywise transforms f applied to the hidden matrix.

Supported families:
- Log1pPower(c):  f(x) = log^c(|x| + 1)
- AbsPower(p):    f(x) = |x|^p, p in (0, 2]

`squared()` gives f^2, which the row-norm sketch uses: log^c becomes
log^(2c) and |x|^p becomes |x|^(2p) (admissible while p <= 1).

CLI strings: "log1p", "log1p:2", "pow:0.5".
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Union

import numpy as np

from app.errors import ConfigError


class EntrywiseTransform(ABC):
    """f applied independently to every entry."""

    kind: str

    @abstractmethod
    def apply(self, values: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def squared(self) -> "EntrywiseTransform":
        ...

    @property
    @abstractmethod
    def spec(self) -> str:
        """String form accepted by parse_transform."""

    def __call__(self, values: Union[float, np.ndarray]) -> np.ndarray:
        return self.apply(np.asarray(values, dtype=np.float64))


@dataclass(frozen=True)
class Log1pPower(EntrywiseTransform):
    power: int = 1
    kind: str = "log"

    def __post_init__(self):
        if int(self.power) != self.power or self.power < 1:
            raise ConfigError(f"log power must be a positive integer, got {self.power}")

    def apply(self, values: np.ndarray) -> np.ndarray:
        out = np.log1p(np.abs(values))
        return out if self.power == 1 else out ** self.power

    def squared(self) -> "Log1pPower":
        return Log1pPower(power=2 * self.power)

    @property
    def spec(self) -> str:
        return "log1p" if self.power == 1 else f"log1p:{self.power}"


@dataclass(frozen=True)
class AbsPower(EntrywiseTransform):
    p: float = 1.0
    kind: str = "poly"

    def __post_init__(self):
        if not (0.0 < self.p <= 2.0):
            raise ConfigError(f"p must be in (0, 2], got {self.p}")

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.abs(values) ** self.p

    def squared(self) -> "AbsPower":
        if self.p > 1.0:
            raise ConfigError(f"|x|^p squared needs p <= 1, got p={self.p}")
        return AbsPower(p=2.0 * self.p)

    @property
    def spec(self) -> str:
        return f"pow:{self.p:g}"


def parse_transform(text: str) -> EntrywiseTransform:
    """Parse "log1p", "log1p:c" or "pow:p".

    Raises:
        ConfigError: On unknown names or bad parameters
    """
    name, _, arg = text.strip().partition(":")
    try:
        if name == "log1p":
            return Log1pPower(power=int(arg) if arg else 1)
        if name == "pow":
            return AbsPower(p=float(arg) if arg else 1.0)
    except ValueError as e:
        raise ConfigError(f"Bad transform parameter in '{text}': {e}") from e
    raise ConfigError(f"Unknown transform '{text}' (expected log1p, log1p:c or pow:p)")
