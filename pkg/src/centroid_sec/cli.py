"""Command-line front end.

Subcommands: ``bounds`` (closed-form curves and values), ``simulate``
(Monte Carlo experiments with trace/summary emission), ``corpus`` (synthetic
corpus generation, embedding, intrinsic-dimension analysis), and ``attack``
(a single greedy attack run with its trace).

Flags override values from an optional flat ``section.key = value`` config
file. All emitted CSV uses ``.`` decimals, LF line endings, and a mandatory
header row; reruns with identical flags and seed produce byte-identical
files. Exit codes: 0 success, 2 usage error, 3 runtime/convergence failure.
"""

from __future__ import annotations

import math
import os
import sys
import csv as csv_mod
from pathlib import Path

import click
import numpy as np

from centroid_sec import attack as attack_mod
from centroid_sec import bounds as bounds_mod
from centroid_sec import kernels, sim
from centroid_sec.core import AttackContext, CentroidState, RandomSource
from centroid_sec.learner import radius_from_quantile

_CONFIG_KEY = "centroid_sec_config"


def _parse_config(path: str) -> dict[str, dict[str, str]]:
    """Parse a flat ``section.key = value`` config file."""
    sections: dict[str, dict[str, str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.UsageError(f"{path}:{lineno}: expected 'section.key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if "." not in key:
                raise click.UsageError(f"{path}:{lineno}: key {key!r} lacks a section prefix")
            section, param = key.split(".", 1)
            sections.setdefault(section, {})[param] = value
    return sections


def _apply_config(ctx: click.Context, command: str) -> None:
    """Fill parameters from the config file where flags were not given."""
    config = (ctx.obj or {}).get(_CONFIG_KEY) or {}
    section = dict(config.get(command, {}))
    known = {p.name for p in ctx.command.params}
    unknown = set(section) - known
    if unknown:
        raise click.UsageError(
            f"unknown config keys in section [{command}]: {', '.join(sorted(unknown))}"
        )
    for name, value in section.items():
        if ctx.get_parameter_source(name) == click.core.ParameterSource.DEFAULT:
            param = next(p for p in ctx.command.params if p.name == name)
            ctx.params[name] = param.type.convert(value, param, ctx)


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Flat 'section.key = value' config file; flags override it.")
@click.option("--threads", type=int, default=None,
              envvar="CENTROID_SEC_THREADS",
              help="Worker cap for parallel sections (results are deterministic regardless).")
@click.pass_context
def main(ctx: click.Context, config: str | None, threads: int | None) -> None:
    """Online centroid anomaly detection analysis toolkit."""
    ctx.ensure_object(dict)
    ctx.obj[_CONFIG_KEY] = _parse_config(config) if config else {}
    ctx.obj["threads"] = threads if threads is not None else 1


def _open_csv(path: str):
    fh = open(path, "w", encoding="ascii", newline="\n")
    return fh, csv_mod.writer(fh, lineterminator="\n")


def _curve_indices(i: int) -> np.ndarray:
    stride = max(1, math.ceil(i / 1000))
    idx = np.arange(0, i + 1, stride)
    if idx[-1] != i:
        idx = np.append(idx, i)
    return idx


@main.command()
@click.option("--variant", required=True,
              type=click.Choice(["infinite", "finite", "limited", "protected",
                                 "nu-crit", "voronoi"]))
@click.option("--n", type=int, default=1000, help="Window size.")
@click.option("--i", "i_", type=int, default=0, help="Iteration index / curve end.")
@click.option("--nu", type=float, default=0.05, help="Adversarial traffic fraction.")
@click.option("--alpha", type=float, default=0.0, help="False-positive cap.")
@click.option("--displacement", type=float, default=None,
              help="Target relative displacement (nu-crit).")
@click.option("--d", type=int, default=2, help="Dimension (voronoi).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV output path; omit to print a single value.")
@click.pass_context
def bounds(ctx, variant, n, i_, nu, alpha, displacement, d, out):
    """Evaluate a closed-form bound: print a value or emit a CSV curve."""
    _apply_config(ctx, "bounds")
    n, i_, nu, alpha = ctx.params["n"], ctx.params["i_"], ctx.params["nu"], ctx.params["alpha"]
    displacement, d, out = ctx.params["displacement"], ctx.params["d"], ctx.params["out"]
    variant = ctx.params["variant"]
    if variant == "nu-crit":
        if displacement is None:
            raise click.UsageError("--displacement is required for nu-crit")
        click.echo(f"{bounds_mod.nu_crit(displacement):.4f}")
        return
    if variant == "voronoi":
        click.echo(repr(bounds_mod.voronoi_slope(n, d)))
        return
    if out is None:
        if variant == "infinite":
            click.echo(repr(bounds_mod.exact_infinite(i_, n)))
        elif variant == "finite":
            click.echo(repr(float(bounds_mod.displacement_finite(i_, n))))
        elif variant == "limited":
            e, _ = bounds_mod.limited_moments(i_, bounds_mod.MixModel(nu=nu, n=n))
            click.echo(repr(float(e)))
        else:
            e_up, _, _ = bounds_mod.protected_moments(
                i_, bounds_mod.MixModel(nu=nu, n=n, alpha=alpha))
            click.echo(repr(float(e_up)))
        return
    idx = _curve_indices(i_)
    fh, writer = _open_csv(out)
    with fh:
        if variant == "infinite":
            writer.writerow(["i", "exact", "bound"])
            exact = bounds_mod.exact_infinite_trace(i_, n)
            bound = bounds_mod.bound_infinite(idx, n)
            for k, ii in enumerate(idx):
                writer.writerow([int(ii), repr(float(exact[ii])), repr(float(bound[k]))])
        elif variant == "finite":
            writer.writerow(["i", "displacement"])
            disp = bounds_mod.displacement_finite(idx, n)
            for k, ii in enumerate(idx):
                writer.writerow([int(ii), repr(float(disp[k]))])
        elif variant == "limited":
            writer.writerow(["i", "expectation", "variance_bound"])
            e, v = bounds_mod.limited_moments(idx, bounds_mod.MixModel(nu=nu, n=n))
            for k, ii in enumerate(idx):
                writer.writerow([int(ii), repr(float(e[k])), repr(float(v[k]))])
        else:
            writer.writerow(["i", "expectation_upper", "expectation_lower",
                             "variance_bound"])
            e_up, e_lo, v = bounds_mod.protected_moments(
                idx, bounds_mod.MixModel(nu=nu, n=n, alpha=alpha))
            for k, ii in enumerate(idx):
                writer.writerow([int(ii), repr(float(e_up[k])),
                                 repr(float(e_lo[k])), repr(float(v[k]))])


@main.command()
@click.option("--model", required=True,
              type=click.Choice(["axiom6", "axiom7", "greedy", "fp-sensitivity",
                                 "nu-sweep"]))
@click.option("--nu", type=float, default=0.05)
@click.option("--alpha", type=float, default=0.0)
@click.option("--n", type=int, default=1000)
@click.option("--iters", type=int, default=50_000)
@click.option("--reps", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.option("--d", type=int, default=2)
@click.option("--source", type=click.Choice(list(sim.INNOCUOUS_SOURCES)),
              default="uniform_circle")
@click.option("--radius", type=float, default=1.0,
              help="Innocuous source radius in (0, 1].")
@click.option("--dcrit", type=float, default=0.18,
              help="Target displacement for nu-sweep.")
@click.option("--grid", type=str, default="0.05,0.10,0.14,0.16",
              help="Comma-separated nu grid for the sweep models.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Trace/curve CSV path.")
@click.option("--summary", type=click.Path(dir_okay=False), default=None,
              help="Summary JSON path.")
@click.pass_context
def simulate(ctx, model, nu, alpha, n, iters, reps, seed, d, source, radius,
             dcrit, grid, out, summary):
    """Run a Monte Carlo simulation; emit trace CSV, summary JSON, and
    pass/fail lines for the bound-dominance checks."""
    _apply_config(ctx, "simulate")
    p = ctx.params
    try:
        grid_values = tuple(float(tok) for tok in p["grid"].split(",") if tok)
    except ValueError as exc:
        raise click.UsageError(f"bad --grid: {exc}") from exc
    model_name = {"greedy": "greedy_gaussian", "fp-sensitivity": "fp_sensitivity",
                  "nu-sweep": "nu_sweep"}.get(p["model"], p["model"])
    cfg = sim.SimConfig(
        model=model_name, nu=p["nu"], alpha=p["alpha"], n=p["n"],
        iterations=p["iters"], repetitions=p["reps"], d=p["d"],
        innocuous_source=p["source"], innocuous_radius=p["radius"],
        seed=p["seed"], nu_grid=grid_values, target_displacement=p["dcrit"],
    )
    out, summary = p["out"], p["summary"]
    payload: dict = {}
    try:
        if model_name in ("axiom6", "axiom7"):
            trace = sim.run_axiom6(cfg) if model_name == "axiom6" else sim.run_axiom7(cfg)
            if out:
                trace.to_csv(out)
            checks = trace.dominance_checks()
            for name, ok in sorted(checks.items()):
                click.echo(f"dominance {name}: {'PASS' if ok else 'FAIL'}")
            payload["dominance"] = checks
            payload["final_mean_D"] = float(trace.mean_D[-1])
        elif model_name == "greedy_gaussian":
            result = sim.run_greedy_gaussian(cfg)
            if out:
                result.trace.to_csv(out)
            payload["slopes"] = [float(s) for s in result.slopes]
            payload["mean_slope"] = float(result.slopes.mean())
            payload["r_squared"] = [float(r) for r in result.r_squared]
            click.echo(f"mean_slope={result.slopes.mean()!r}")
        elif model_name == "fp_sensitivity":
            curve = sim.run_fp_sensitivity(cfg)
            if out:
                fh, writer = _open_csv(out)
                with fh:
                    writer.writerow(["nu", "max_fp"])
                    for nu_val, fp in curve:
                        writer.writerow([repr(nu_val), repr(fp)])
            payload["curve"] = [{"nu": a, "max_fp": b} for a, b in curve]
        else:  # nu_sweep
            results = sim.run_nu_sweep(cfg)
            click.echo("reached=" + ",".join(
                "true" if row["reached"] else "false" for row in results))
            if out:
                fh, writer = _open_csv(out)
                with fh:
                    writer.writerow(["nu", "reached", "final_D"])
                    for row in results:
                        writer.writerow([repr(row["nu"]),
                                         int(bool(row["reached"])),
                                         repr(row["final_D"])])
            payload["results"] = results
    except (attack_mod.AttackStalledError, np.linalg.LinAlgError) as exc:
        click.echo(f"simulation failed: {exc}", err=True)
        sys.exit(3)
    if summary:
        sim.write_summary(summary, cfg, payload)


@main.command()
@click.argument("subaction", type=click.Choice(["generate", "embed", "dim"]))
@click.option("--size", type=int, default=1000)
@click.option("--seed", type=int, default=0)
@click.option("--k", type=int, default=3, help="Gram length.")
@click.option("--diversity", type=int, default=16)
@click.option("--variance", type=float, default=0.99,
              help="Target explained-variance fraction (dim).")
@click.option("--pca", type=int, default=None,
              help="Number of embedding components (embed).")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Input corpus file (embed/dim); generated when omitted.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def corpus(ctx, subaction, size, seed, k, diversity, variance, pca, in_path, out):
    """Generate a synthetic corpus, embed it, or report its intrinsic dimension."""
    _apply_config(ctx, "corpus")
    p = ctx.params
    size, seed, k = p["size"], p["seed"], p["k"]
    if p["subaction"] == "generate":
        if not p["out"]:
            raise click.UsageError("corpus generate requires --out")
        sequences = kernels.synth_corpus(RandomSource(seed), size,
                                         diversity=p["diversity"])
        try:
            kernels.write_corpus(p["out"], sequences, k)
        except OSError as exc:
            click.echo(f"cannot write corpus {p['out']}: {exc}", err=True)
            sys.exit(3)
        return
    if p["in_path"]:
        try:
            sequences, k = kernels.read_corpus(p["in_path"])
        except (OSError, ValueError) as exc:
            click.echo(f"cannot read corpus {p['in_path']}: {exc}", err=True)
            sys.exit(3)
    else:
        sequences = kernels.synth_corpus(RandomSource(seed), size,
                                         diversity=p["diversity"])
    spectra = [kernels.extract_spectrum(s, k) for s in sequences]
    K = kernels.kernel_matrix(spectra, kernels.KernelConfig(k=k, normalize=True))
    if p["subaction"] == "dim":
        embedding = kernels.kernel_pca(K, target_variance=p["variance"])
        click.echo(str(embedding.components))
        if p["out"]:
            fh, writer = _open_csv(p["out"])
            with fh:
                writer.writerow(["component", "eigenvalue", "variance_fraction"])
                for idx, (ev, vf) in enumerate(
                        zip(embedding.eigenvalues, embedding.variance_fraction), 1):
                    writer.writerow([idx, repr(float(ev)), repr(float(vf))])
        return
    # embed
    if not p["out"]:
        raise click.UsageError("corpus embed requires --out")
    embedding = kernels.kernel_pca(K, target_variance=1.0)
    m = embedding.coordinates.shape[1]
    if p["pca"] is not None:
        m = min(p["pca"], m)
    coords = embedding.coordinates[:, :m]
    fh, writer = _open_csv(p["out"])
    with fh:
        writer.writerow([f"c{j}" for j in range(m)])
        for row in coords:
            writer.writerow([repr(float(v)) for v in row])


@main.command()
@click.option("--d", type=int, default=2)
@click.option("--n", type=int, default=100)
@click.option("--iters", type=int, default=500)
@click.option("--seed", type=int, default=0)
@click.option("--normalized", is_flag=True, default=False,
              help="Project cell solutions onto the unit sphere.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Attack trace CSV path.")
@click.pass_context
def attack(ctx, d, n, iters, seed, normalized, out):
    """Run a single greedy nearest-out attack on Gaussian data with a trace."""
    _apply_config(ctx, "attack")
    p = ctx.params
    gen = RandomSource(p["seed"], stream_id=0).generator()
    points = gen.normal(size=(p["n"], p["d"]))
    if p["normalized"]:
        points = points / np.linalg.norm(points, axis=1, keepdims=True)
    center = points.mean(axis=0)
    radius = radius_from_quantile(points, center, alpha=0.001)
    state = CentroidState.from_working_set(points, radius)
    direction = gen.normal(size=p["d"])
    direction /= np.linalg.norm(direction)
    ctx_attack = AttackContext(direction=direction, initial_center=center.copy())
    step = attack_mod.greedy_step_normalized if p["normalized"] else attack_mod.greedy_step
    attack_state = None
    try:
        for _ in range(p["iters"]):
            state, attack_state = step(state, ctx_attack, attack_state)
    except attack_mod.AttackStalledError as exc:
        click.echo(f"attack stalled: {exc}", err=True)
        if p["out"] and attack_state is not None:
            attack_mod.write_attack_trace(p["out"], attack_state)
        sys.exit(3)
    click.echo(f"final_displacement={attack_state.trace[-1]!r}")
    if p["out"]:
        attack_mod.write_attack_trace(p["out"], attack_state)


if __name__ == "__main__":
    main()
