"""Command-line front end.

Subcommands: simulate, sample, reconstruct, pipeline, compare,
validate-config. Exit codes: 0 success, 2 configuration/validation failure,
3 numerical-floor errors. ``--config`` accepts a path or the name of a
bundled configuration (``paper.config``, ``improved.config``).
"""

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .errors import NumericalFloorError, ValidationError
from .fock import FockDim
from .homodyne import (MeasurementPlan, load_dataset, normalize_dataset,
                       sample_quadratures, save_dataset)
from .pipeline import (ExperimentConfig, compare_reports, format_compare,
                       load_report, run_pipeline, write_report)
from .tomography import bootstrap_errors, mle_reconstruct
from .wigner import wigner_eval
from ._accel import USING_NUMBA

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def bundled_config_path(name: str) -> Path:
    ref = resources.files("photonsub") / "configs" / name
    with resources.as_file(ref) as p:
        return Path(p)


def _resolve_config(path_arg: str) -> ExperimentConfig:
    p = Path(path_arg)
    if not p.exists():
        candidate = path_arg if path_arg.endswith(".config") else path_arg + ".config"
        ref = resources.files("photonsub") / "configs" / candidate
        if ref.is_file():
            return ExperimentConfig.from_dict(json.loads(ref.read_text()))
        raise ValidationError(f"config file not found: {path_arg}")
    return ExperimentConfig.from_json(p)


def _apply_overrides(cfg, args):
    import dataclasses

    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        updates["output_dir"] = args.out
    if getattr(args, "cases", None):
        wanted = {int(c) for c in args.cases.split(",")}
        keep = tuple(c for c in cfg.cases if c.tap.herald_n in wanted)
        missing = wanted - {c.tap.herald_n for c in keep}
        if missing:
            raise ValidationError(f"config has no herald cases {sorted(missing)}")
        updates["cases"] = keep
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _cmd_simulate(args):
    cfg = _apply_overrides(_resolve_config(args.config), args)
    report = run_pipeline(cfg, mode="simulate", out_dir=args.out)
    _print_summary(report)
    return EXIT_OK


def _cmd_pipeline(args):
    cfg = _apply_overrides(_resolve_config(args.config), args)
    report = run_pipeline(cfg, mode=args.mode if args.mode != "simulate-only"
                          else "simulate", out_dir=args.out)
    _print_summary(report)
    return EXIT_OK


def _cmd_sample(args):
    cfg = _apply_overrides(_resolve_config(args.config), args)
    out = Path(args.out or cfg.output_dir or ".")
    from .pipeline import _case_seed, _simulate_case
    from .stateprep import loss_channel, squeezed_vacuum
    from .fock import apply_channel

    param, _ = cfg.source_param()
    sdim = FockDim(cfg.two_mode_signal_n_max)
    source = squeezed_vacuum(param, sdim)
    if cfg.loss_budget.efficiency_before_tap < 1.0:
        source = apply_channel(
            source, loss_channel(cfg.loss_budget.efficiency_before_tap, sdim))
    for idx, spec in enumerate(cfg.cases):
        _, state = _simulate_case(cfg, spec, source)
        plan = MeasurementPlan(phases=cfg.phases,
                               frames_per_phase=spec.frames_per_phase,
                               shot_frames=cfg.shot_frames,
                               seed=_case_seed(cfg.seed, idx))
        ds = sample_quadratures(state, plan)
        dest = out / f"case_{spec.tap.herald_n}" / "dataset"
        save_dataset(ds, dest)
        print(f"case {spec.tap.herald_n}: wrote {ds.values.size} frames to {dest}")
    return EXIT_OK


def _cmd_reconstruct(args):
    cfg = _apply_overrides(_resolve_config(args.config), args)
    ds = normalize_dataset(load_dataset(args.data))
    rec = mle_reconstruct(ds, cfg.mle)
    rec = bootstrap_errors(ds, cfg.mle, rec)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    rec.save(out / "reconstruction.json")
    import numpy as np

    x = np.linspace(cfg.grid_x[0], cfg.grid_x[1], cfg.grid_x[2])
    p = np.linspace(cfg.grid_p[0], cfg.grid_p[1], cfg.grid_p[2])
    wigner_eval(rec.rho, x, p).save(out / "wigner_rec")
    print(f"reconstruction: {rec.iterations_used} iterations, "
          f"converged={rec.converged}, wrote {out / 'reconstruction.json'}")
    return EXIT_OK


def _cmd_compare(args):
    diff = compare_reports(load_report(args.report_a), load_report(args.report_b))
    print(format_compare(diff))
    if args.out:
        Path(args.out).write_text(json.dumps(diff, indent=1, sort_keys=True))
    return EXIT_OK


def _cmd_validate(args):
    cfg = _resolve_config(args.config)
    print(f"config ok: {len(cfg.cases)} herald cases, hash {cfg.config_hash()[:16]}")
    return EXIT_OK


def _print_summary(report):
    src = report["source"]
    print(f"source: r={src['r']:.4f} phase={src['phase']:.3f} "
          f"eta_extra={src['eta_extra'] if src['eta_extra'] is None else round(src['eta_extra'], 4)}")
    for c in report["cases"]:
        sim = c["simulated"]
        line = (f"herald {c['herald_n']}: p={c['probability']:.3e} "
                f"rate={c['rate_hz']:.3g}/s W(0,0)={sim['w_origin']:+.4f} "
                f"w_min={sim['w_min']:+.5f} at "
                f"({sim['w_min_location'][0]:+.2f},{sim['w_min_location'][1]:+.2f})")
        nar = c.get("narrowing_vs_herald0")
        if nar:
            line += f" narrowing={nar['width_ratio_narrowing'] * 100:.1f}%"
        if "reconstructed" in c:
            line += (f" | rec W(0,0)={c['reconstructed']['w_origin']:+.4f} "
                     f"F={c['reconstructed']['fidelity_to_simulated']:.4f}")
        print(line)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="photonsub",
        description="Simulate multi-photon-subtracted squeezed states, their "
                    "Wigner negativity, and a synthetic homodyne-tomography loop.")
    ap.add_argument("--version", action="version",
                    version=f"%(prog)s {_version()} "
                            f"({'numba' if USING_NUMBA else 'numpy'} kernels)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", required=True,
                       help="config path or bundled name (paper.config, improved.config)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--cases", help="comma-separated herald numbers to run")
        if needs_out:
            p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="source -> loss -> herald -> Wigner metrics")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("pipeline", help="simulate, then optionally sample + reconstruct")
    common(p)
    p.add_argument("--mode", choices=["simulate", "full"], default="full")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("sample", help="write synthetic quadrature datasets only")
    common(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("reconstruct", help="maximum-likelihood reconstruction of a dataset")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory (data.csv, shot.csv, plan.json)")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("compare", help="diff two pipeline reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out", help="write the machine-readable diff here")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("validate-config", help="check a config file and exit")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate)
    return ap


def _version():
    from . import __version__

    return __version__


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFloorError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
