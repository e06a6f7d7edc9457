"""Built-in models and the preset experiment catalog."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import BandSpec, CouplingBlockSpec, ModelSpec, SystemSpec
from .propagator import InitialRecipe

LAMBDA_CAN = 5e-4
GAP = 25.0
WIDTH = 0.5
LEVELS = 500
XI_GRID = (0.0, 0.5, 1.0, 2.0, 3.0, 5.0)
SIZE_GRID = (10, 25, 50, 100, 200, 400, 800)


def two_band_model(N: int = LEVELS, lam: float = LAMBDA_CAN, width: float = WIDTH, gap: float = GAP,
                   full_canonical: bool = True, name: str = "two-band") -> ModelSpec:
    """Two-level system on two bands, bands separated by the system gap.

    With ``full_canonical`` every ``|0><1| x C_01,ab`` block is random; only
    ``(01, 21)`` is resonant.  Otherwise just the resonant block is kept.
    """
    pairs = [(0, 0), (0, 1), (1, 0), (1, 1)] if full_canonical else [(1, 0)]
    blocks = tuple(CouplingBlockSpec((0, 1), ab, lam) for ab in pairs)
    bands = (BandSpec(0.0, width, N), BandSpec(gap, width, N))
    return ModelSpec(SystemSpec((0.0, gap)), bands, blocks, name=name)


def three_band_model(xi: float, N: int = LEVELS, lam: float = LAMBDA_CAN, width: float = WIDTH,
                     gap: float = GAP, name: str = "three-band") -> ModelSpec:
    """Decoherence model: canonical blocks ``(01,21)``, ``(01,32)`` and, for
    ``xi > 0``, microcanonical blocks ``(00,22)``, ``(11,11)``, ``(11,22)``,
    ``(00,33)`` of strength ``xi * lam``."""
    blocks = [CouplingBlockSpec((0, 1), (1, 0), lam), CouplingBlockSpec((0, 1), (2, 1), lam)]
    if xi > 0:
        mic = xi * lam
        blocks += [CouplingBlockSpec((0, 0), (1, 1), mic), CouplingBlockSpec((1, 1), (0, 0), mic),
                   CouplingBlockSpec((1, 1), (1, 1), mic), CouplingBlockSpec((0, 0), (2, 2), mic)]
    bands = tuple(BandSpec(k * gap, width, N) for k in range(3))
    return ModelSpec(SystemSpec((0.0, gap)), bands, tuple(blocks), name=name)


def tiny_model(N: int = 4, lam: float = 0.01, width: float = 0.5, gap: float = 2.0,
               name: str = "tiny") -> ModelSpec:
    """Two levels, two bands, every block random; small enough for brute force."""
    keys = [((0, 0), (0, 0)), ((0, 0), (0, 1)), ((0, 0), (1, 1)),
            ((1, 1), (0, 0)), ((1, 1), (0, 1)), ((1, 1), (1, 1)),
            ((0, 1), (0, 0)), ((0, 1), (0, 1)), ((0, 1), (1, 0)), ((0, 1), (1, 1))]
    blocks = tuple(CouplingBlockSpec(ij, ab, lam) for ij, ab in keys)
    bands = (BandSpec(0.0, width, N), BandSpec(gap, width, N))
    return ModelSpec(SystemSpec((0.0, gap)), bands, blocks, name=name)


EXCITED_LOWER = InitialRecipe(((1, 0, 1.0),))
HALF_SUPERPOSITION = InitialRecipe(((0, 0, 0.5), (1, 0, 0.5)), shared_environment=True)
NINETY_TEN = InitialRecipe(((0, 1, 0.9), (1, 1, 0.1)), shared_environment=True)
CORRELATED_3_1 = InitialRecipe(((1, 0, 0.75), (0, 1, 0.25)))


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str                     # dynamics | decoherence | ensemble | scaling | dyson
    description: str
    model: ModelSpec | None
    recipe: InitialRecipe | None = None
    engines: tuple[str, ...] = ("exact", "ham-ode")
    seeds: tuple[int, ...] = (1,)
    params: dict = field(default_factory=dict)


def preset_catalog() -> dict[str, Preset]:
    fig1 = two_band_model(name="fig1")
    return {
        "fig6": Preset("fig6", "dynamics", "two-band model, excited system, random lower-band environment",
                       fig1, EXCITED_LOWER, ("exact", "ham-ode", "ham-map"), params={"born_reference": True}),
        "fig7": Preset("fig7", "dynamics", "two-band model, 50:50 product superposition, lower band",
                       fig1, HALF_SUPERPOSITION, ("exact", "ham-ode", "ham-map")),
        "fig8": Preset("fig8", "decoherence", "three-band model, 90:10 superposition in the middle band, xi sweep",
                       three_band_model(0.0, name="fig4"), NINETY_TEN, ("exact", "ham-ode", "closed-form"),
                       params={"xi": XI_GRID}),
        "fig9": Preset("fig9", "ensemble", "deviation D over Haar samples of the 3/4-1/4 correlated family",
                       fig1, CORRELATED_3_1, ("exact", "ham-ode"), params={"ensemble": 100, "nu": 3}),
        "fig10": Preset("fig10", "scaling", "D^2 versus environment size at fixed golden-rule rate",
                        two_band_model(name="fig1-resonant", full_canonical=False), CORRELATED_3_1,
                        ("exact", "ham-ode"), params={"sizes": SIZE_GRID, "ensemble": 1, "nu": 3}),
        "appendixB": Preset("appendixB", "dyson", "brute-force second-order trace identities on tiny models",
                            tiny_model(), None, (), seeds=tuple(range(1, 21)),
                            params={"sizes": (4, 8, 16), "t": 0.5, "tau": 2.0}),
    }


def scaled_coupling(N: int, lam0: float = LAMBDA_CAN, N0: int = LEVELS) -> float:
    """Coupling that keeps ``lambda^2 N`` (hence the golden-rule rate) fixed."""
    return lam0 * math.sqrt(N0 / N)
