"""Command-line front end: ``optosync <subcommand> ...``.

Subcommands
-----------
simulate   config -> trajectory CSV
spectrum   config or trajectory CSV -> spectrum CSV
classify   config or trajectory CSV -> classification JSON
sweep      sweep config -> results directory (resumable)
phase      finished sweep directory (or sweep config) -> phase-diagram CSV
oracle     bath-oracle config -> oracle JSON + per-tau error CSV
preset     NAME -> built-in config file

Exit status: 0 ok, 1 bad configuration, 2 divergence, 3 I/O error.
Every file output gets a ``<output>.manifest.json`` (directories get
``manifest.json`` inside) with the resolved parameters, the overrides and
the tool version.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, Optional, Sequence

from . import __version__
from .analysis import (
    DISPLACEMENT,
    INTENSITY,
    classification_to_json,
    classify,
    power_spectrum,
    write_spectrum_csv,
)
from .config import (
    ANGLE_KEYS,
    CIRCUIT_KEYS,
    PLAN_KEYS,
    PRESETS,
    THRESHOLD_KEYS,
    apply_overrides,
    format_kv,
    plan_from_mapping,
    plan_to_mapping,
    preset,
    read_kv,
    setup_from_mapping,
    setup_to_mapping,
    thresholds_from_mapping,
    thresholds_to_mapping,
)
from .dynamics import (
    DivergenceError,
    StepSizeError,
    WindowTooShort,
    initial_state,
    integrate,
    read_trajectory_csv,
    steady_window,
    write_trajectory_csv,
)
from .model import ConfigError
from .sweep import (
    CheckpointMismatch,
    completed_points,
    load_result,
    phase_diagram,
    run_sweep,
    sweep_spec_from_mapping,
    sweep_spec_to_mapping,
)

EXIT_CONFIG = 1
EXIT_DIVERGENCE = 2
EXIT_IO = 3

ORACLE_KEYS = ("J1", "J2", "J3", "theta", "phi", "band_halfwidth", "n_modes", "omega0", "taper", "delta",
               "a1", "a2", "a3", "horizon", "dt", "sign_check")


def _load_mapping(args) -> Dict[str, str]:
    mapping: Dict[str, str] = {}
    if getattr(args, "config", None):
        mapping = read_kv(args.config)
    mapping = apply_overrides(mapping, args.set or [])
    if getattr(args, "seed", None) is not None:
        mapping["seed"] = str(args.seed)
    return mapping


def _seed(mapping) -> Optional[int]:
    s = str(mapping.get("seed", "")).strip().lower()
    if s in ("", "none"):
        return None
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"seed: expected an integer, got {mapping['seed']!r}", key="seed") from None


def _write_manifest(path: Path, command: str, args, parameters: Dict[str, object], **extra) -> None:
    manifest = {
        "tool": "optosync",
        "version": __version__,
        "command": command,
        "config": str(args.config) if getattr(args, "config", None) else None,
        "overrides": list(args.set or []),
        "parameters": parameters,
        **extra,
    }
    target = path / "manifest.json" if path.is_dir() else path.with_name(path.name + ".manifest.json")
    target.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _circuit_and_plan(mapping):
    circuit = {k: v for k, v in mapping.items() if k not in PLAN_KEYS and k not in THRESHOLD_KEYS}
    setup = setup_from_mapping(circuit)
    plan = plan_from_mapping(mapping)
    seed = _seed(mapping)
    if seed is not None:
        plan = replace(plan, initial=initial_state(setup.config, seed))
    return setup, plan, seed


def _resolved(setup, plan, seed, thresholds=None) -> Dict[str, object]:
    out: Dict[str, object] = setup_to_mapping(setup, pi_units=True)
    out.update(plan_to_mapping(plan))
    out["seed"] = seed
    if thresholds is not None:
        out.update(thresholds_to_mapping(thresholds))
    return out


def _simulate(mapping):
    setup, plan, seed = _circuit_and_plan(mapping)
    traj = integrate(plan, setup.config, setup.coupling())
    return setup, plan, seed, traj


def _window_from(args, mapping):
    """Steady window plus the resolved parameters it came from."""
    if args.input:
        src = Path(args.input)
        params: Dict[str, object] = {}
        man = src.with_name(src.name + ".manifest.json")
        coupling = None
        if man.exists():
            params = json.loads(man.read_text(encoding="utf-8")).get("parameters", {})
            known = {k: v for k, v in params.items()
                     if k in CIRCUIT_KEYS or (k.endswith("_pi") and k[:-3] in ANGLE_KEYS)}
            coupling = setup_from_mapping(known).coupling()
        try:
            traj = read_trajectory_csv(src, coupling)
        except ValueError as exc:
            raise OSError(f"{src}: not a trajectory CSV ({exc})") from None
        merged = {**{k: v for k, v in params.items() if k in PLAN_KEYS and v is not None}, **mapping}
        plan = plan_from_mapping(merged)
        params = {**params, **plan_to_mapping(plan), "input": str(src)}
    else:
        setup, plan, seed, traj = _simulate(mapping)
        params = _resolved(setup, plan, seed)
    return steady_window(traj, plan.discard_fraction), params


def cmd_simulate(args) -> int:
    mapping = _load_mapping(args)
    setup, plan, seed, traj = _simulate(mapping)
    out = Path(args.out)
    write_trajectory_csv(traj, out)
    _write_manifest(out, "simulate", args, _resolved(setup, plan, seed), samples=len(traj))
    print(f"wrote {out} ({len(traj)} samples)")
    return 0


def cmd_spectrum(args) -> int:
    mapping = _load_mapping(args)
    window, params = _window_from(args, mapping)
    signals = INTENSITY + DISPLACEMENT if args.displacement else INTENSITY
    spec = power_spectrum(window, signals)
    out = Path(args.out)
    write_spectrum_csv(spec, out)
    _write_manifest(out, "spectrum", args, params, bin_width=spec.bin_width)
    print(f"wrote {out} ({spec.f_over_f0.size} bins, bin width {spec.bin_width:.3g})")
    return 0


def cmd_classify(args) -> int:
    mapping = _load_mapping(args)
    thresholds = thresholds_from_mapping(mapping)
    window, params = _window_from(args, mapping)
    cls = classify(power_spectrum(window), window, thresholds)
    out = Path(args.out)
    classification_to_json(cls, out)
    params = {**params, **thresholds_to_mapping(thresholds)}
    _write_manifest(out, "classify", args, params)
    f = "" if cls.sync_frequency is None else f" at f/f0 = {cls.sync_frequency:.6g}"
    print(f"{cls.state}{f}")
    return 0


def _run_sweep(spec, out: Path, workers: int):
    def progress(done, total):
        if done == total or done % max(1, total // 20) == 0:
            print(f"  {done}/{total} points", file=sys.stderr, flush=True)

    return run_sweep(spec, workers=workers, out_dir=out, progress=progress)


def cmd_sweep(args) -> int:
    mapping = _load_mapping(args)
    spec = sweep_spec_from_mapping(mapping)
    out = Path(args.out)
    before = completed_points(out, spec)
    if before >= spec.size:
        print(f"resume: {before}/{spec.size} points already complete (100%)")
    elif before:
        print(f"resume: {before}/{spec.size} points already complete")
    result = _run_sweep(spec, out, args.workers)
    counts: Dict[str, int] = {}
    for r in result.records:
        counts[r["state"]] = counts.get(r["state"], 0) + 1
    print(f"sweep complete: {len(result)}/{spec.size} points (100%) -> {out}")
    print("  " + ", ".join(f"{k}: {v}" for k, v in sorted(counts.items())))
    return 0


def cmd_phase(args) -> int:
    out = Path(args.out)
    if args.input:
        result = load_result(args.input)
        source = str(args.input)
    else:
        mapping = _load_mapping(args)
        spec = sweep_spec_from_mapping(mapping)
        sweep_dir = Path(args.sweep_dir) if args.sweep_dir else out.with_name(out.stem + "_sweep")
        result = _run_sweep(spec, sweep_dir, args.workers)
        source = str(sweep_dir)
    pd = phase_diagram(result)
    pd.write_csv(out)
    _write_manifest(out, "phase", args, sweep_spec_to_mapping(result.spec), sweep_dir=source,
                    counts=pd.counts())
    print(", ".join(f"{k}: {v}" for k, v in pd.counts().items()))
    return 0


def _oracle_from_mapping(mapping):
    from .bath import BathSpec, effective_config

    for key in mapping:
        base = key[:-3] if key.endswith("_pi") else key
        if base not in ORACLE_KEYS:
            raise ConfigError(f"{key}: unknown oracle key", key=key)

    def num(key, default):
        if key + "_pi" in mapping:
            return float(mapping[key + "_pi"]) * math.pi
        if key not in mapping:
            return default
        try:
            return float(mapping[key])
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {mapping[key]!r}", key=key) from None

    J = tuple(num(k, 0.0) for k in ("J1", "J2", "J3"))
    theta, phi = num("theta", 0.5 * math.pi), num("phi", 0.5 * math.pi)
    omega0 = num("omega0", math.pi)
    rate = max(2 * math.pi * j * j * omega0 for j in J)
    B = num("band_halfwidth", 200.0 * rate if rate > 0 else 10.0)
    try:
        spec = BathSpec(J, (0.0, theta, theta + phi), B, int(num("n_modes", 4001)), omega0, num("taper", 0.2))
    except ValueError as exc:
        raise ConfigError(str(exc), key="oracle") from None
    a0 = tuple(num(k, 1.0 if k == "a1" else 0.0) for k in ("a1", "a2", "a3"))
    delta = num("delta", 0.0)
    try:
        config = effective_config(spec, delta) if rate > 0 else None
    except ValueError as exc:
        raise ConfigError(str(exc), key="J1") from None
    sign = str(mapping.get("sign_check", "true")).strip().lower() in ("1", "true", "yes", "on")
    horizon = num("horizon", None)
    dt = num("dt", None)
    return spec, config, a0, sign, horizon, dt


def cmd_oracle(args) -> int:
    from .bath import run_oracle

    mapping = _load_mapping(args)
    mapping.pop("seed", None)
    spec, config, a0, sign, horizon, dt = _oracle_from_mapping(mapping)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep, record = run_oracle(spec, config, a0, out_dir=out, sign_check=sign, horizon=horizon, dt=dt)
    params = {"J_site": list(spec.J_site), "positions": list(spec.positions), "band_halfwidth": spec.band_halfwidth,
              "n_modes": spec.n_modes, "omega0": spec.omega0, "taper": spec.taper, "a0": [str(x) for x in a0]}
    _write_manifest(out, "oracle", args, params)
    print(f"max error {rep.max_error:.3g} over tau <= {rep.horizon:g} -> {out / 'oracle.json'}")
    return 0


def cmd_preset(args) -> int:
    if args.list or not args.name:
        for name in PRESETS:
            print(name)
        return 0
    setup = preset(args.name)
    mapping = setup_to_mapping(setup, pi_units=True)
    text = format_kv(mapping, header=f"optosync preset {args.name}")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="optosync", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"optosync {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--out", required=out_required, help="output path")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a key (repeatable)")
        sp.add_argument("--seed", type=int, help="seeded perturbation of the zero initial state")

    sp = sub.add_parser("simulate", help="integrate and write the trajectory CSV")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("spectrum", cmd_spectrum, "power spectra of the steady window"),
                                 ("classify", cmd_classify, "classify the oscillation state")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--input", help="trajectory CSV written by 'simulate' (otherwise simulate from --config)")
        if name == "spectrum":
            sp.add_argument("--displacement", action="store_true", help="also include q1..q3")
        sp.set_defaults(func=func)

    sp = sub.add_parser("sweep", help="1-D or 2-D parameter sweep into a results directory")
    common(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("phase", help="phase-diagram CSV grid from a 2-D sweep")
    common(sp)
    sp.add_argument("--input", help="finished sweep directory")
    sp.add_argument("--sweep-dir", help="where to run the sweep when --config is given")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_phase)

    sp = sub.add_parser("oracle", help="explicit-line check of the effective couplings")
    common(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("preset", help="write a built-in configuration")
    sp.add_argument("name", nargs="?", choices=sorted(PRESETS))
    sp.add_argument("--out", help="output path (default: stdout)")
    sp.add_argument("--list", action="store_true", help="list preset names")
    sp.set_defaults(func=cmd_preset)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) is not None and getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, StepSizeError) as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except WindowTooShort as exc:
        print(f"config error: t_total: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CheckpointMismatch as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
