import numpy as np
import pytest

from equipart.measures import build_measure

SQUARE = {"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]}
DISC = {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0}


def uniform(support=SQUARE, mass=1.0, n=40_000, seed=0):
    return build_measure({"kind": "uniform", "dimension": len(support.get("lo", support.get("center"))),
                          "parameters": {"support": support}, "total_mass": mass,
                          "seed": seed, "sample_budget": n})


def gaussian(mean, sigma, support=SQUARE, mass=1.0, n=40_000, seed=0):
    d = len(mean)
    return build_measure({"kind": "gaussian", "dimension": d,
                          "parameters": {"mean": list(mean), "cov": (sigma**2 * np.eye(d)).tolist(),
                                         "support": support},
                          "total_mass": mass, "seed": seed, "sample_budget": n})


def mixture(components, mass=1.0, n=40_000, seed=0, d=2):
    return build_measure({"kind": "mixture", "dimension": d, "parameters": {"components": components},
                          "total_mass": mass, "seed": seed, "sample_budget": n})


def mc_tol(mass_fraction, n, total=1.0, sigmas=4.0):
    """Binomial standard-error bound for an MC mass estimate."""
    return sigmas * total * np.sqrt(mass_fraction * (1 - mass_fraction) / n)


@pytest.fixture
def unit_square():
    return uniform()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
