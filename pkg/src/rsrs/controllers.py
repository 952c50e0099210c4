"""Memoryless sensing-to-action controllers.

A controller is any callable ``(agent_id, y, tick) -> ControlCommand``.
The shipped ones ignore ``agent_id`` and ``tick``; the arguments exist so
stateful controllers can be dropped in without touching the engine.
"""

from __future__ import annotations

from .config import ControlCommand, ControllerSpec, TrialConfig


def mill_controller(y: int, v: float, omega: float) -> ControlCommand:
    """Forward at ``v``; turn left (+omega) on a detection, right otherwise."""
    return ControlCommand(v, omega if y == 1 else -omega)


class TableController:
    """Maps the 1-bit output to one of two fixed commands."""

    def __init__(self, on_clear: tuple[float, float], on_detect: tuple[float, float]):
        self.commands = (ControlCommand(*on_clear), ControlCommand(*on_detect))

    def __call__(self, agent_id: int, y: int, tick: int) -> ControlCommand:
        return self.commands[1 if y else 0]

    def __repr__(self):
        return f"TableController({self.commands[0]}, {self.commands[1]})"


def build_controller(config: TrialConfig) -> TableController:
    spec: ControllerSpec = config.controller
    if spec.kind == "mill":
        return TableController((config.v, -config.omega), (config.v, config.omega))
    if spec.kind == "constant":
        return TableController((config.v, config.omega), (config.v, config.omega))
    if spec.kind == "custom":
        return TableController(spec.table[0], spec.table[1])
    raise ValueError(f"unknown controller kind {spec.kind!r}")
