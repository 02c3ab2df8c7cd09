"""Ready-made layout problems: square, circular and irregular farms with NREL 5 MW turbines."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .layout import WindFarmCase, circle_boundary, load_boundary, square_boundary
from .wake import WakeParams, load_rose, nrel_5mw

__all__ = ["data_path", "case_square", "case_circle", "case_irregular", "CASES", "build_case"]


def data_path(name: str) -> Path:
    return Path(str(resources.files("windbo") / "data" / name))


def case_square(wake: WakeParams = None) -> WindFarmCase:
    """16 turbines in an 18D x 18D square, 8-direction rose."""
    t = nrel_5mw()
    side = 18 * t.rotor_diameter
    return WindFarmCase.build(16, t, load_rose(data_path("rose_8state.txt")), square_boundary(side),
                              wake, name="case1")


def case_circle(wake: WakeParams = None) -> WindFarmCase:
    """16 turbines in a circle of diameter 18D, 8-direction rose."""
    t = nrel_5mw()
    return WindFarmCase.build(16, t, load_rose(data_path("rose_8state.txt")),
                              circle_boundary(18 * t.rotor_diameter), wake, name="case2")


def case_irregular(wake: WakeParams = None) -> WindFarmCase:
    """25 turbines inside a non-convex polygon, 12-direction rose."""
    t = nrel_5mw()
    return WindFarmCase.build(25, t, load_rose(data_path("rose_12state.txt")),
                              load_boundary(data_path("case3_boundary.txt")), wake, name="case3")


CASES = {"case1": case_square, "case2": case_circle, "case3": case_irregular}


def build_case(name: str, wake: WakeParams = None) -> WindFarmCase:
    try:
        return CASES[name](wake)
    except KeyError:
        raise KeyError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None
