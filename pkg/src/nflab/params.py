"""Model and numerical parameters."""
from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ModelParams:
    """Physical constants plus solver and time-stepping controls.

    Parameters
    ----------
    D : float
        Diffusivity of the conductance field, ``D >= 0``.
    c : float
        Pumping strength, ``c > 0``.
    gamma : float
        Metabolic exponent, ``gamma >= 1``.
    epsilon : float
        Heat-kernel time used by the mollified model.
    cg_tol : float
        Relative residual tolerance for every conjugate-gradient solve.
    dt0, dt_max : float
        Initial and maximal time step.
    t_end : float
        Final time of transient runs.
    steady_tol : float
        Runs stop early once ``||dm/dt||_{L2}`` falls below this value.
    """

    D: float = 0.01
    c: float = 1.0
    gamma: float = 2.0
    epsilon: float = 1e-3
    cg_tol: float = 1e-12
    dt0: float = 1e-3
    dt_max: float = 0.1
    t_end: float = 10.0
    steady_tol: float = 1e-8

    def __post_init__(self):
        checks = [
            (self.D >= 0, "D must be >= 0"),
            (self.c > 0, "c must be > 0"),
            (self.gamma >= 1, "gamma must be >= 1"),
            (self.epsilon >= 0, "epsilon must be >= 0"),
            (self.cg_tol > 0, "cg_tol must be > 0"),
            (self.dt0 > 0, "dt0 must be > 0"),
            (self.dt_max >= self.dt0, "dt_max must be >= dt0"),
            (self.t_end >= 0, "t_end must be >= 0"),
            (self.steady_tol >= 0, "steady_tol must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def beta(self) -> float:
        """Pumping-to-diffusion ratio ``c^2 / D^2``."""
        if self.D == 0:
            raise ValueError("beta is undefined for D = 0")
        return self.c ** 2 / self.D ** 2

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)
