"""Physical rates and integration controls. Time is measured in units of 1/k."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

STABILITY_LIMIT = 0.1
SCHEME_NAMES = ("euler", "milstein", "kraus")


class ParamError(ValueError):
    """Invalid simulation parameter; ``field`` names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class SimParams:
    k: float = 1.0
    gamma: float = 0.1
    nT: float = 0.1
    omega: float = 10.0
    dt: float = 1e-4
    t_burn: float = 10.0
    t_avg: float = 20.0
    seed: int = 0
    scheme: str = "euler"

    def __post_init__(self):
        checks = {
            "k": self.k >= 0,
            "gamma": self.gamma >= 0,
            "nT": self.nT >= 0,
            "omega": self.omega >= 0,
            "dt": self.dt > 0,
            "t_burn": self.t_burn >= 0,
            "t_avg": self.t_avg > 0,
        }
        for name, ok in checks.items():
            value = getattr(self, name)
            if not ok or not math.isfinite(value):
                raise ParamError(name, f"invalid {name}={value!r}")
        if not 0 <= self.seed < 2**64:
            raise ParamError("seed", f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.scheme not in SCHEME_NAMES:
            raise ParamError("scheme", f"invalid scheme={self.scheme!r}; expected one of {SCHEME_NAMES}")
        fastest = max(self.k, self.gamma * (self.nT + 1.0), self.omega)
        if self.dt * fastest > STABILITY_LIMIT:
            raise ParamError(
                "dt", f"dt={self.dt!r} too coarse: dt*max(k, gamma*(nT+1), omega)="
                f"{self.dt * fastest:.3g} > {STABILITY_LIMIT}"
            )

    @property
    def burn_steps(self) -> int:
        return int(round(self.t_burn / self.dt))

    @property
    def avg_steps(self) -> int:
        return int(round(self.t_avg / self.dt))

    def replace(self, **changes) -> "SimParams":
        return dataclasses.replace(self, **changes)
