import pytest

from thermostat.config import format_model, load_model, save_model
from thermostat.exceptions import SpecificationError
from thermostat.presets import three_band_model, two_band_model

FIG1 = """
[model]
name = fig1

[system]
levels = 0, 25          # E_i

[band.1]
energy = 0
width = 0.5
levels = 500

[band.2]
energy = 25
width = 0.5
levels = 500

[block.1]
system = 0 1
bands = 2 1
strength = 5e-4
"""


def test_parse_fig1_text():
    spec = load_model(FIG1)
    assert spec.name == "fig1"
    assert spec.dim == 2000
    assert spec.blocks[0].key == (0, 1, 1, 0)
    assert spec.blocks[0].strength == 5e-4


@pytest.mark.parametrize("spec", [two_band_model(N=7), three_band_model(2.0, N=3)])
def test_round_trip(tmp_path, spec):
    path = tmp_path / "m.ini"
    save_model(spec, path)
    again = load_model(path)
    assert again == spec
    assert format_model(again) == format_model(spec)


@pytest.mark.parametrize("text, message", [
    ("[model]\nname = x\n", "system"),
    ("[system]\nlevels = 0\n", "band"),
    ("[system]\nlevels = 0\n[band.1]\nenergy = 0\nwidth = 0\nlevels = 3\n", "width"),
    ("[system]\nlevels = 0, 1\n[band.1]\nenergy = 0\nwidth = 1\nlevels = 3\n"
     "[block.1]\nsystem = 0 1\nbands = 1 4\nstrength = 1\n", "undefined band"),
    ("[system]\nlevels = 0\n[band.1]\nenergy = 0\nwidth = 1\n", "invalid"),
])
def test_invalid_configs(text, message):
    with pytest.raises(SpecificationError, match=message):
        load_model(text)


def test_missing_file(tmp_path):
    with pytest.raises(SpecificationError, match="not found"):
        load_model(tmp_path / "nope.ini")
