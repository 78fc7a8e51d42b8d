"""Q-HSES: HSES whose first switch is decided online by a learned policy.

The univariate phase runs in chunks of ``step`` iterations. After each chunk
the policy sees the discretised progress state and either asks for another
chunk or hands over to CMA-ES; after ``horizon`` chunks the switch is forced.
Everything after the switch is the ordinary HSES tail, drawn from the same
random streams, so a run equals the fixed-switch HSES run at the realised
switch iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .benchmarks import Problem
from .es_core import CMAParams
from .hses import DECISION_STEP, HORIZON, ConfigError, HsesConfig, RunTrace, _advance, _complete, _start, _streams
from .rl_agent import SWITCH, Policy, compute_state, dimension_scale, discretize, select_action


class PolicyMismatchError(ValueError):
    pass


@dataclass
class QhsesConfig:
    policy: Policy
    max_nfe: int | None = None
    population_size: int = 200
    cma: CMAParams = field(default_factory=CMAParams)
    detect_threshold: float = 1e-6
    final_phase_reserve: float = 0.1
    step: int = DECISION_STEP
    horizon: int = HORIZON

    def hses_config(self) -> HsesConfig:
        return HsesConfig(self.step * self.horizon, self.max_nfe, self.population_size, self.cma,
                          self.detect_threshold, self.final_phase_reserve)


def run_qhses(problem: Problem, config: QhsesConfig, seed: int) -> RunTrace:
    """One Q-HSES run; the trace records the realised switch and visited states."""
    policy = config.policy
    if abs(policy.scale - dimension_scale(problem.dimension)) > 1e-15:
        raise PolicyMismatchError(
            f"policy was trained for s2 scale {policy.scale}, problem dimension {problem.dimension} "
            f"needs {dimension_scale(problem.dimension)}"
        )
    hcfg = config.hses_config()
    try:
        hcfg.check(problem.dimension)
    except ConfigError as exc:
        raise ConfigError(f"horizon x step x population must fit in the budget: {exc}") from None

    rng_init, rng_uni, rng_cma, rng_final, rng_policy = _streams(seed)
    part = _start(problem, hcfg, rng_init)
    states = []
    t = 0
    while True:
        _advance(part, problem, config.step, rng_uni)
        t += 1
        state = discretize(compute_state(part.curve, t, config.step), problem.dimension)
        states.append(state.flat)
        if select_action(policy, state, rng_policy) == SWITCH or t >= config.horizon:
            break
    return _complete(part, problem, hcfg, seed, config.step * t, rng_cma, rng_final, states=states)
