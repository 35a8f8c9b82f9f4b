import numpy as np
import pytest

from qreps.features import tabular_features
from qreps.harness.checks import random_context, random_mdp
from qreps.lbe import LossContext
from qreps.mdp import TabularMdp, exact_occupancy


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fig3_mdp(discount=0.9, r_stay=1.0):
    from qreps.envs import two_state_stochastic

    return two_state_stochastic(discount=discount, r_stay=r_stay)


def deterministic_two_state(discount=0.9):
    from qreps.envs import two_state_deterministic

    return two_state_deterministic(discount=discount)


def context_for(mdp: TabularMdp, policy=None, eta=0.5, alpha=0.5) -> LossContext:
    policy = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions) if policy is None else policy
    fmap = tabular_features(mdp.n_states, mdp.n_actions)
    return LossContext(mdp, fmap, policy, eta, alpha, p_ref=exact_occupancy(mdp, policy))


__all__ = ["random_context", "random_mdp", "fig3_mdp", "deterministic_two_state", "context_for", "record_criterion"]


# criterion -> list of (part, passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def record_criterion(number: int, part: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(number, []).append((part, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p for _, p, _ in parts)
        failed = [name for name, p, _ in parts if not p]
        tail = f" (failing: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}{tail}")
        for name, p, detail in parts:
            terminalreporter.write_line(f"    {'ok ' if p else 'BAD'} {name}: {detail}")
