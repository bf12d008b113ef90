"""Command-line interface around the library.

Four subcommands cover the full loop: simulate writes a synthetic scene
log with map and run-configuration sidecars, estimate streams the
filtered intention posterior frame by frame, predict emits the weighted
trajectory forecast for one time point, and eval scores models against
the logged ground truth and can render report figures next to the
metrics table.

Exit status is 0 on success, 1 when an input cannot be processed, and 2
for usage errors.  Filter seeds resolve in order: the --seed flag, the
SCENE_FORECASTER_SEED environment variable, then the run configuration.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional

import click

from scene_forecaster import __version__, inference
from scene_forecaster.config import RunConfig
from scene_forecaster.evaluation import (
    FILTER_MODELS,
    MODELS,
    evaluate_scene,
    mean_eps,
    write_csv,
)
from scene_forecaster.forecast import predict_scene
from scene_forecaster.lanegraph import LaneGraph, MapError, dump_map, load_map
from scene_forecaster.scenario import ARCHETYPES, eval_config, load_scene, save_scene, simulate

_SEED_ENV = "SCENE_FORECASTER_SEED"
_INPUT_ERRORS = (MapError, ValueError, RuntimeError, OSError)


def _resolve_seed(seed: Optional[int], config: RunConfig) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(_SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise click.UsageError(f"{_SEED_ENV} must be an integer, got {env!r}")
    return config.seed


def _sidecar(scene_path: Path, kind: str) -> Path:
    return scene_path.with_suffix(f".{kind}.json")


def _load_inputs(
    scene_path: Path, map_path: Optional[Path], config_path: Optional[Path]
) -> tuple[list, LaneGraph, RunConfig]:
    """Scene log plus its map and config, preferring explicit paths, then
    the sidecars simulate writes, then the tuned default configuration."""
    frames = load_scene(scene_path)
    if map_path is None:
        map_path = _sidecar(scene_path, "map")
        if not map_path.exists():
            raise click.UsageError(
                f"no map given and sidecar {map_path} does not exist; pass --map"
            )
    graph = load_map(map_path)
    if config_path is not None:
        config = RunConfig.from_json(config_path)
    else:
        sidecar = _sidecar(scene_path, "config")
        config = RunConfig.from_json(sidecar) if sidecar.exists() else eval_config()
    return frames, graph, config


def _belief_flags(model: str) -> tuple[bool, bool]:
    return model != "map_based", model != "yield_assumed"


def _run_belief(frames, graph, config, model, upto: Optional[float] = None):
    interaction, maneuvers = _belief_flags(model)
    belief = inference.init_particles(
        frames[0].measurements(), graph, config, interaction=interaction, maneuvers=maneuvers
    )
    yield frames[0], belief
    for frame in frames[1:]:
        if upto is not None and frame.t > upto + 1e-9:
            break
        inference.predict(belief)
        inference.update(belief, frame.measurements())
        inference.resample(belief)
        inference.rejuvenate(belief, frame.measurements())
        yield frame, belief


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Interaction-aware trajectory prediction for road agents."""


@main.command()
@click.option("--scenario", type=click.Choice(sorted(ARCHETYPES)), required=True,
              help="archetype to generate")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="scene log to write (JSON lines)")
@click.option("--seed", type=int, default=None, help="ground-truth noise seed")
def simulate_cmd(scenario: str, out: Path, seed: Optional[int]) -> None:
    """Generate a synthetic scene log with map and config sidecars."""
    graph, spec, config = ARCHETYPES[scenario]()
    seed = _resolve_seed(seed, config)
    config = config.replace(seed=seed)
    try:
        frames = simulate(graph, spec, config, seed=seed)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_scene(frames, out)
        map_path = _sidecar(out, "map")
        dump_map(graph, map_path)
        config_path = _sidecar(out, "config")
        config.to_json(config_path)
    except _INPUT_ERRORS as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {out} ({len(frames)} frames, {len(spec.agents)} agents)")
    click.echo(f"wrote {map_path}")
    click.echo(f"wrote {config_path} (seed {seed})")


main.add_command(simulate_cmd, name="simulate")


@main.command()
@click.option("--scene", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="scene log (JSON lines)")
@click.option("--map", "map_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="lane-graph map (default: scene sidecar)")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="run configuration (default: scene sidecar)")
@click.option("--model", type=click.Choice(FILTER_MODELS), default="interactive",
              show_default=True, help="filter variant")
@click.option("--seed", type=int, default=None, help="filter seed")
@click.option("--out", type=click.File("w"), default="-",
              help="posterior stream, one JSON line per frame (default stdout)")
def estimate(scene, map_path, config_path, model, seed, out) -> None:
    """Filter a scene log and stream the intention posterior."""
    try:
        frames, graph, config = _load_inputs(scene, map_path, config_path)
        config = config.replace(seed=_resolve_seed(seed, config))
        for frame, belief in _run_belief(frames, graph, config, model):
            posterior = inference.intention_posterior(belief)
            agents = {}
            for aid in belief.agent_ids:
                routes = sorted(posterior.route_marginal[aid].items(), key=lambda kv: -kv[1])
                orders = sorted(posterior.maneuver_marginal[aid].items(), key=lambda kv: -kv[1])
                agents[aid] = {
                    "routes": [
                        {"lanes": list(k), "p": round(p, 6)} for k, p in routes if p > 0
                    ],
                    "maneuvers": [
                        {"orders": [list(rel) for rel in k], "p": round(p, 6)}
                        for k, p in orders if p > 0
                    ],
                }
            doc = {"t": frame.t, "n_eff": round(belief.n_eff(), 1), "agents": agents}
            out.write(json.dumps(doc) + "\n")
    except _INPUT_ERRORS as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--scene", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="scene log (JSON lines)")
@click.option("--map", "map_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="lane-graph map (default: scene sidecar)")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="run configuration (default: scene sidecar)")
@click.option("--model", type=click.Choice(FILTER_MODELS), default="interactive",
              show_default=True, help="filter variant")
@click.option("--at", "at_time", type=float, default=None,
              help="forecast time point (default: last frame)")
@click.option("--horizon", type=float, default=None,
              help="forecast horizon in seconds (default: configuration)")
@click.option("--seed", type=int, default=None, help="filter seed")
@click.option("--out", type=click.File("w"), default="-",
              help="forecast document (default stdout)")
def predict(scene, map_path, config_path, model, at_time, horizon, seed, out) -> None:
    """Forecast weighted scene trajectories from one time point."""
    try:
        frames, graph, config = _load_inputs(scene, map_path, config_path)
        config = config.replace(seed=_resolve_seed(seed, config))
        if at_time is not None and at_time < frames[0].t - 1e-9:
            raise click.UsageError(f"--at {at_time} lies before the first frame at {frames[0].t}")
        if horizon is not None:
            if horizon <= 0:
                raise click.UsageError("--horizon must be > 0")
            config = config.replace(horizon=horizon)
        belief = None
        for _, belief in _run_belief(frames, graph, config, model, upto=at_time):
            pass
        prediction = predict_scene(belief)
        doc = {
            "t0": round(prediction.t0, 6),
            "dt": prediction.dt,
            "model": model,
            "agents": list(prediction.agent_ids),
            "hypotheses": [
                {
                    "probability": p.hypothesis.probability,
                    "routes": {a: list(r) for a, r in p.hypothesis.routes.items()},
                    "maneuvers": {
                        a: [list(rel) for rel in m] for a, m in p.hypothesis.maneuvers.items()
                    },
                    "trajectories": {
                        a: [[round(float(v), 4) for v in row] for row in traj]
                        for a, traj in p.trajectories.items()
                    },
                }
                for p in prediction.predictions
            ],
        }
        out.write(json.dumps(doc) + "\n")
    except _INPUT_ERRORS as exc:
        raise click.ClickException(str(exc))


@main.command(name="eval")
@click.option("--scene", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="scene log (JSON lines)")
@click.option("--map", "map_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="lane-graph map (default: scene sidecar)")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="run configuration (default: scene sidecar)")
@click.option("--model", "models", type=click.Choice(MODELS + ("yield_assumed",)),
              multiple=True, default=MODELS, show_default=True, help="models to score")
@click.option("--tau", "taus", type=float, multiple=True, default=(1.0, 3.0, 5.0),
              show_default=True, help="forecast horizons in seconds")
@click.option("--seed", type=int, default=None, help="filter seed")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="metrics table to write (CSV)")
@click.option("--figures", "figures_dir", type=click.Path(file_okay=False, path_type=Path),
              default=None, help="directory for report figures (PNG)")
def eval_cmd(scene, map_path, config_path, models, taus, seed, out, figures_dir) -> None:
    """Score forecasts against the logged ground truth."""
    if any(t <= 0 for t in taus):
        raise click.UsageError("--tau values must be > 0")
    try:
        frames, graph, config = _load_inputs(scene, map_path, config_path)
        config = config.replace(seed=_resolve_seed(seed, config))
        rows = evaluate_scene(frames, graph, config, models=models, taus=sorted(set(taus)))
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(rows, out)
        if figures_dir is not None:
            from scene_forecaster.figures import render_report

            for path in render_report(graph, frames, rows, figures_dir):
                click.echo(f"wrote {path}")
    except _INPUT_ERRORS as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {out} ({len(rows)} rows)")
    header = "model".ljust(14) + "".join(f"tau={t:g}".rjust(10) for t in sorted(set(taus)))
    click.echo(header)
    for model in models:
        cells = []
        for t in sorted(set(taus)):
            try:
                cells.append(f"{mean_eps(rows, model=model, tau=t):10.3f}")
            except ValueError:
                cells.append("n/a".rjust(10))
        click.echo(model.ljust(14) + "".join(cells))


if __name__ == "__main__":
    main()
