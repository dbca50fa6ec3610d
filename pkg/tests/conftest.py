import itertools

import numpy as np
import pytest

from snaplab.data import PropertyPredicate, Schema, SynthSpec, synth_sample
from snaplab.synthetic import census_like


def random_spec(rng, n_other, in_victim=None, v=0):
    """Two-feature spec: ``group`` in {in, out} times ``other`` with ``n_other`` values.

    The property is ``group == in``. ``in_victim`` pins ``P[Y=v | cell]`` for
    every in-property cell; by default it is drawn at random.
    """
    schema = Schema((("group", ("in", "out")), ("other", tuple(f"o{i}" for i in range(n_other)))))
    codes = np.array(list(itertools.product(range(2), range(n_other))))
    probs = rng.dirichlet(np.ones(len(codes)))
    p_y1 = rng.uniform(0.05, 0.95, size=len(codes))
    inside = codes[:, 0] == 0
    if in_victim is not None:
        p_v = np.full(inside.sum(), in_victim)
        p_y1[inside] = p_v if v == 1 else 1 - p_v
    return SynthSpec(schema, codes, probs, p_y1, PropertyPredicate.of(group="in"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_census():
    spec = census_like(property_share=0.1)
    return spec, synth_sample(spec, 40000, 3)


_acceptance_lines = []


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        status = "PASS" if report.outcome == "passed" else "FAIL"
        detail = dict(report.user_properties).get("detail", "")
        _acceptance_lines.append(f"{status}  {name}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
