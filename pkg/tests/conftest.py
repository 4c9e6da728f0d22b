import numpy as np
import pytest

from ftql.game import anti_coordination_game, coordination_game


@pytest.fixture
def fig1_game():
    return coordination_game(5.1, 2.4)


@pytest.fixture
def ex1_game():
    return anti_coordination_game(99.1, 100.9)


@pytest.fixture
def ex2_game():
    return anti_coordination_game(0.04, 0.8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_game(rng, shape, integer=False):
    """Random game with i.i.d. payoffs; integer payoffs exercise ties."""
    from ftql.game import Game

    if integer:
        payoffs = [rng.integers(-3, 4, size=shape).astype(float) for _ in shape]
    else:
        payoffs = [rng.normal(size=shape) for _ in shape]
    actions = [[f"{chr(97 + i)}{k + 1}" for k in range(n)] for i, n in enumerate(shape)]
    return Game(actions, payoffs)


def random_profile(rng, shape):
    return [rng.dirichlet(np.ones(n)) for n in shape]


# -- acceptance report ------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record a named acceptance criterion; the outcome and a detail line are
    printed in the terminal summary."""
    state = {"detail": ""}

    def note(text):
        state["detail"] = text

    yield note
    rep = getattr(request.node, "rep_call", None)
    passed = rep is not None and rep.passed
    name = request.node.name.split("_")[1].upper()
    ACCEPTANCE[name] = (passed, state["detail"])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s[1:])):
        passed, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if passed else 'FAIL'}  {detail}")
