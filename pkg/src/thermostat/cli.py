"""Command line entry point ``thermostat``."""
from __future__ import annotations

import sys

import click

from .config import load_model
from .exceptions import SpecificationError
from .ham import golden_rates
from .model import classify_blocks, energy_shells
from .presets import preset_catalog
from .propagator import DEFAULT_DIMENSION_CAP
from .scenarios import characteristic_time, resolve_target, run_scenario, scenario_from_config


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Exact and HAM relaxation dynamics of a few-level system in a banded environment."""


@main.command()
@click.argument("target")
@click.option("--seed", type=int, default=None, help="Interaction/initial-state seed (overrides the preset).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default runs/<target>).")
@click.option("--engines", default=None, help="Comma list of exact, ham-ode, ham-map, closed-form, or all.")
def run(target, seed, out_dir, engines):
    """Run a preset or a model config file and write CSV data plus a manifest."""
    try:
        cfg = resolve_target(target, seed, engines, out_dir)
        if out_dir is None:
            cfg.out_dir = cfg.out_dir / cfg.target.replace("/", "_").replace(".", "_")
        summary = run_scenario(cfg)
    except (SpecificationError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(summary.text())


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
def validate(config):
    """Check a model config and print its blocks, rates and shells."""
    try:
        spec = load_model(config)
        scenario_from_config(config)
    except SpecificationError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(2)
    click.echo(f"model {spec.name or config}: N_S = {spec.n_system}, bands = {spec.band_sizes}, dim = {spec.dim}")
    if spec.dim > DEFAULT_DIMENSION_CAP:
        click.echo(f"warning: dimension exceeds the exact-engine cap {DEFAULT_DIMENSION_CAP}")
    for cls in classify_blocks(spec):
        i, j, a, b = cls.block.key
        click.echo(f"  block ({i}{j},{a + 1}{b + 1}) {cls.kind:14s} lambda = {cls.block.strength:g} "
                   f"detuning = {cls.detuning:g} {'resonant' if cls.resonant else 'off-resonant'}")
    rates = golden_rates(spec)
    for k, shell in enumerate(energy_shells(spec)):
        click.echo(f"  shell {k}: " + ", ".join(f"({i},{a + 1})" for i, a in shell))
    if rates.out_rates.max() > 0:
        click.echo(f"  max out-rate = {rates.out_rates.max():.6g}, T_th = {characteristic_time(rates):.6g}")
    click.echo("ok")


@main.command()
def presets():
    """List the built-in scenarios."""
    for name, p in preset_catalog().items():
        dims = f"dim {p.model.dim}" if p.model is not None else ""
        click.echo(f"{name:10s} {p.kind:12s} {dims:10s} {p.description}")


if __name__ == "__main__":
    main()
