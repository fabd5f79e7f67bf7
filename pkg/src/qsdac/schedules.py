"""Step-size schedules ``n -> eta_n`` (``n >= 1``) with a string round-trip.

Spellings accepted by :func:`parse_schedule`::

    const:0.04          eta_n = 0.04
    power:0.99          eta_n = n ** -0.99
    maxpower:0.1:0.2    eta_n = max(n ** -0.1, 0.2)
    loopy-01            alias of maxpower:0.1:0.2 (``paper-loopy-01`` is also accepted)
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not self.value > 0.0:
            raise ValueError("step size must be positive")

    def __call__(self, n: int) -> float:
        return self.value

    def __str__(self):
        return f"const:{self.value!r}"


@dataclass(frozen=True)
class Power:
    """``eta_n = scale * n ** -exponent``."""

    exponent: float
    scale: float = 1.0

    def __call__(self, n: int) -> float:
        return self.scale * n ** -self.exponent

    def __str__(self):
        if self.scale == 1.0:
            return f"power:{self.exponent!r}"
        return f"power:{self.exponent!r}:{self.scale!r}"


@dataclass(frozen=True)
class MaxPower:
    """``eta_n = max(n ** -exponent, floor)``."""

    exponent: float
    floor: float

    def __call__(self, n: int) -> float:
        return max(n ** -self.exponent, self.floor)

    def __str__(self):
        if (self.exponent, self.floor) == (0.1, 0.2):
            return "loopy-01"
        return f"maxpower:{self.exponent!r}:{self.floor!r}"


LOOPY_01 = MaxPower(0.1, 0.2)


def parse_schedule(text) -> Constant | Power | MaxPower:
    if not isinstance(text, str):
        if callable(text):
            return text
        return Constant(float(text))
    text = text.strip()
    if text in ("loopy-01", "paper-loopy-01"):
        return LOOPY_01
    kind, _, rest = text.partition(":")
    try:
        args = [float(a) for a in rest.split(":")] if rest else []
        if kind == "const" and len(args) == 1:
            return Constant(args[0])
        if kind == "power" and len(args) in (1, 2):
            return Power(*args)
        if kind == "maxpower" and len(args) == 2:
            return MaxPower(*args)
        if not rest:
            return Constant(float(kind))
    except ValueError:
        pass
    raise ValueError(f"unrecognized step-size schedule {text!r}")
