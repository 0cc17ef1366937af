from __future__ import annotations

import numpy as np
import pytest

from elconsensus.plant import PLANT_MODELS, TwoLinkArm, register_plant
from elconsensus.scenario import EXAMPLE_THETAS
from elconsensus.verification import (
    dual_form_residual,
    regression_residual,
    run_suite,
    skewness_residual,
)


class FlippedCoriolis(TwoLinkArm):
    """Two-link arm with the Coriolis matrix sign corrupted."""

    name = "two_link_flipped"

    def coriolis_matrix(self, q, dq, theta=None):
        return -super().coriolis_matrix(q, dq, theta)


@pytest.fixture(scope="module", autouse=True)
def registered():
    register_plant(FlippedCoriolis)
    yield
    PLANT_MODELS.pop(FlippedCoriolis.name)


def test_suite_passes_on_builtin(builtin):
    results = run_suite(builtin)
    assert all(r.passed for r in results), [r.line() for r in results]
    assert len(results) == 3 * 4 + 1


@pytest.mark.parametrize("theta", EXAMPLE_THETAS)
def test_skewness_and_regression(theta):
    plant = TwoLinkArm(theta)
    assert skewness_residual(plant) < 1e-6
    assert regression_residual(plant) < 1e-10


def test_mutation_breaks_skewness(builtin):
    from dataclasses import replace

    from elconsensus.plant import make_plant

    plants = tuple(make_plant("two_link_flipped", pl.theta) for pl in builtin.plants)
    results = {r.name: r for r in run_suite(replace(builtin, plants=plants), samples=2000)}
    assert not results["follower 1 skewness"].passed
    assert results["follower 1 regression identity"].passed


def test_zero_velocity_is_vacuous():
    assert skewness_residual(FlippedCoriolis(EXAMPLE_THETAS[0]), velocity_scale=0.0) == 0.0


def test_dual_form(builtin):
    assert dual_form_residual(builtin) < 1e-10


def test_result_line(builtin):
    line = run_suite(builtin, samples=100)[0].line()
    assert line.startswith("[PASS] follower 1 skewness")
    assert np.isfinite(float(line.split(": ")[1].split()[0]))
