"""Bundled test systems.

``case14`` is the standard IEEE 14-bus system. ``case30`` and ``case118``
are synthetic desk-scale systems of those sizes (generated by
scripts/make_cases.py) with meshed topology, resistive branches, finite
thermal limits on part of the network, and AC-solvable voltage profiles.
"""

from importlib import resources

from ..network import PowerNetwork, parse_case

BUNDLED = ("case14", "case30", "case118")


def case_text(name: str) -> str:
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled case {name!r}; have {BUNDLED}")
    return resources.files(__package__).joinpath(f"{name}.m").read_text()


def load_case(name: str) -> PowerNetwork:
    return parse_case(case_text(name), name=name)
