import numpy as np
import pytest

from hefl.ckks import Decryptor, Encoder, Encryptor, Evaluator, default_params, keygen, toy_params


class Ctx:
    """Everything needed to run homomorphic checks against one key set."""

    def __init__(self, params, seed, rotation_steps=None):
        self.params = params
        self.keys = keygen(params, seed, rotation_steps)
        self.encoder = Encoder(params)
        self.encryptor = Encryptor(params, self.keys.public, seed + 1)
        self.decryptor = Decryptor(params, self.keys.secret)

    def evaluator(self, **kw):
        return Evaluator(self.params, self.keys.relin, self.keys.rotations, **kw)

    def enc(self, values, level=None):
        return self.encryptor.encrypt(self.encoder.encode(values, level=level))

    def dec(self, ct, length=None):
        return self.encoder.decode(self.decryptor.decrypt(ct), length)


@pytest.fixture(scope="session")
def ctx():
    return Ctx(default_params(), 1234)


@pytest.fixture(scope="session")
def toy():
    return Ctx(toy_params(32), 99)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


# -- acceptance summary ----------------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion, whatever the outcome."""
    state = {}

    def start(number: int, title: str):
        state.update(number=number, title=title, notes=[])
        return state["notes"]

    yield start
    if not state:
        return
    report = getattr(request.node, "rep_call", None)
    ok = report is not None and report.passed
    notes = "; ".join(state["notes"])
    line = f"criterion {state['number']}: {'PASS' if ok else 'FAIL'} {state['title']}" + (f" ({notes})" if notes else "")
    ACCEPTANCE[state["number"]] = line
    print(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
