"""Configuration-driven pipeline: build the source state, apply the loss
budget around the tap, herald each case, evaluate Wigner metrics, and
optionally close the loop with synthetic sampling plus maximum-likelihood
reconstruction. Emits a reproducible JSON report and per-case plot data.
"""

import datetime
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .fock import DensityMatrix, FockDim, apply_channel, state_fidelity
from .homodyne import (MeasurementPlan, normalize_dataset, sample_quadratures,
                       save_dataset)
from .stateprep import (LossBudget, MeasuredSqueezing, SqueezeParam,
                        fit_initial_squeezing, loss_channel, squeezed_vacuum)
from .subtraction import TapConfig, herald
from .tomography import MleConfig, bootstrap_errors, mle_reconstruct
from .wigner import narrowing_metrics, negativity_report, wigner_eval

MODES = ("simulate", "full")


@dataclass(frozen=True)
class CaseSpec:
    tap: TapConfig
    frames_per_phase: int


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated pipeline configuration (see ``configs/paper.config``).

    Exactly one of ``measured_squeezing`` or ``source_r`` defines the source:
    either fit (r, eta_extra) to a measured dB pair against the budget, or
    take the squeezing parameter directly.
    """

    loss_budget: LossBudget
    cases: tuple
    rep_rate_hz: float
    duty: float
    phases: tuple                  # radians
    shot_frames: int
    mle: MleConfig
    grid_x: tuple                  # (min, max, points)
    grid_p: tuple
    n_max: int
    two_mode_signal_n_max: int
    seed: int
    source_phase: float = 0.0
    measured_squeezing: MeasuredSqueezing | None = None
    source_r: float | None = None
    apply_eta_extra: bool = False
    output_dir: str | None = None
    name: str = ""
    notes: str = ""

    def __post_init__(self):
        errs = []
        if (self.measured_squeezing is None) == (self.source_r is None):
            errs.append("exactly one of measured_squeezing or source_r is required")
        if not self.cases:
            errs.append("taps: at least one herald case is required")
        if self.rep_rate_hz <= 0:
            errs.append("rep_rate_hz: must be positive")
        if not 0 < self.duty <= 1:
            errs.append("duty: must lie in (0, 1]")
        if self.n_max < 2 or self.two_mode_signal_n_max < 2:
            errs.append("n_max: cutoffs must be >= 2")
        if len(self.phases) < 1:
            errs.append("plan.phases_deg: at least one phase required")
        for g, nm in ((self.grid_x, "x"), (self.grid_p, "p")):
            if g[1] <= g[0] or g[2] < 11:
                errs.append(f"wigner_grid.{nm}: need max > min and >= 11 points")
        if errs:
            raise ValidationError("; ".join(errs))

    # -- construction -------------------------------------------------------

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        errs = []

        def take(key, default=None, required=False):
            if key in raw:
                return raw[key]
            if required:
                errs.append(f"{key}: missing")
            return default

        budget_d = take("loss_budget", required=True)
        plan_d = take("plan", required=True)
        taps_d = take("taps", required=True)
        mle_d = take("mle", {})
        grid_d = take("wigner_grid", {})
        if errs:
            raise ValidationError("; ".join(errs))

        budget = LossBudget.from_dict(budget_d)
        meas = None
        source_r = None
        if "measured_squeezing" in raw and raw["measured_squeezing"] is not None:
            m = raw["measured_squeezing"]
            meas = MeasuredSqueezing(float(m["squeezing_db"]),
                                     float(m["antisqueezing_db"]))
        if "source" in raw and raw["source"] is not None:
            source_r = float(raw["source"]["r"])

        cases = []
        for i, t in enumerate(taps_d):
            try:
                tap = TapConfig(reflectance=float(t["reflectance"]),
                                herald_n=int(t["herald_n"]),
                                idler_efficiency=float(t["idler_efficiency"]))
                cases.append(CaseSpec(tap, int(t.get("frames_per_phase", 10000))))
            except (KeyError, ValidationError) as exc:
                errs.append(f"taps[{i}]: {exc}")
        if errs:
            raise ValidationError("; ".join(errs))

        n_max = int(take("n_max", 20))
        mle = MleConfig(
            dim=FockDim(int(mle_d.get("n_max", 10))),
            max_iters=int(mle_d.get("max_iters", 2000)),
            ll_tolerance=float(mle_d.get("ll_tolerance", 1e-9)),
            binning=mle_d.get("binning", 256),
            bootstrap_resamples=int(mle_d.get("bootstrap_resamples", 0)),
        )
        gx = (float(grid_d.get("x_min", -5.0)), float(grid_d.get("x_max", 5.0)),
              int(grid_d.get("points", 201)))
        gp = (float(grid_d.get("p_min", -5.0)), float(grid_d.get("p_max", 5.0)),
              int(grid_d.get("points", 201)))
        return ExperimentConfig(
            loss_budget=budget,
            cases=tuple(cases),
            rep_rate_hz=float(take("rep_rate_hz", 5e6)),
            duty=float(take("duty", 1.0)),
            phases=tuple(math.radians(float(d)) for d in plan_d["phases_deg"]),
            shot_frames=int(plan_d.get("shot_frames", 10000)),
            mle=mle,
            grid_x=gx,
            grid_p=gp,
            n_max=n_max,
            two_mode_signal_n_max=int(take("two_mode_signal_n_max", n_max)),
            seed=int(take("seed", 0)),
            source_phase=float(take("source_phase", 0.0)),
            measured_squeezing=meas,
            source_r=source_r,
            apply_eta_extra=bool(take("apply_eta_extra", False)),
            output_dir=take("output_dir"),
            name=str(take("name", "")),
            notes=str(take("notes", "")),
        )

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}")
        return ExperimentConfig.from_dict(raw)

    # -- derived quantities --------------------------------------------------

    def semantic_dict(self) -> dict:
        """Every field that changes results; basis of the config hash."""
        d = {
            "loss_budget": self.loss_budget.items(),
            "taps": [{"reflectance": c.tap.reflectance, "herald_n": c.tap.herald_n,
                      "idler_efficiency": c.tap.idler_efficiency,
                      "frames_per_phase": c.frames_per_phase} for c in self.cases],
            "rep_rate_hz": self.rep_rate_hz,
            "duty": self.duty,
            "phases_rad": list(self.phases),
            "shot_frames": self.shot_frames,
            "mle": {"n_max": self.mle.dim.n_max, "max_iters": self.mle.max_iters,
                    "ll_tolerance": self.mle.ll_tolerance,
                    "binning": self.mle.binning,
                    "bootstrap_resamples": self.mle.bootstrap_resamples},
            "grid_x": list(self.grid_x),
            "grid_p": list(self.grid_p),
            "n_max": self.n_max,
            "two_mode_signal_n_max": self.two_mode_signal_n_max,
            "seed": self.seed,
            "source_phase": self.source_phase,
            "apply_eta_extra": self.apply_eta_extra,
        }
        if self.measured_squeezing is not None:
            d["measured_squeezing"] = [self.measured_squeezing.squeezing_db,
                                       self.measured_squeezing.antisqueezing_db]
        if self.source_r is not None:
            d["source_r"] = self.source_r
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def source_param(self):
        """(SqueezeParam, fit-or-None) for the configured source."""
        if self.source_r is not None:
            return SqueezeParam(self.source_r, self.source_phase), None
        fit = fit_initial_squeezing(self.measured_squeezing, self.loss_budget,
                                    phase=self.source_phase)
        return fit.param, fit


def _thread_count():
    try:
        return max(1, int(os.environ.get("PHOTONSUB_THREADS", "1")))
    except ValueError:
        return 1


def _case_seed(seed, idx):
    return int(seed) + 7919 * int(idx)


def _simulate_case(cfg: ExperimentConfig, spec: CaseSpec, source: DensityMatrix):
    eta_post = cfg.loss_budget.efficiency_after_herald
    if cfg.apply_eta_extra:
        _, fit = cfg.source_param()
        if fit is not None:
            eta_post = min(1.0, eta_post * fit.eta_extra)
    res = herald(source, spec.tap, rep_rate_hz=cfg.rep_rate_hz, duty=1.0)
    state = res.state.embed(FockDim(cfg.n_max))
    if eta_post < 1.0:
        state = apply_channel(state, loss_channel(eta_post, state.dim))
    return res, state


def _grid_axes(cfg):
    x = np.linspace(cfg.grid_x[0], cfg.grid_x[1], cfg.grid_x[2])
    p = np.linspace(cfg.grid_p[0], cfg.grid_p[1], cfg.grid_p[2])
    return x, p


def _neg_dict(rep):
    return {
        "w_origin": rep.w_origin,
        "w_min": rep.w_min,
        "w_min_location": [rep.w_min_location[0], rep.w_min_location[1]],
        "subplanck_variance": rep.subplanck_variance,
        "n_negative_regions": rep.n_negative_regions,
    }


def _save_photon_dist(path, dist, err=None):
    with open(path, "w") as fh:
        fh.write("n,probability,error\n")
        for n, pn in enumerate(np.asarray(dist).tolist()):
            e = "" if err is None else repr(float(err[n]))
            fh.write(f"{n},{pn!r},{e}\n")


def run_pipeline(cfg: ExperimentConfig, mode: str = "simulate",
                 out_dir=None) -> dict:
    """Run all herald cases; returns the report dict (also written to disk
    when an output directory is configured).

    ``simulate`` produces source -> loss -> herald -> Wigner metrics;
    ``full`` additionally samples datasets per the plan and reconstructs.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    out = Path(out_dir or cfg.output_dir) if (out_dir or cfg.output_dir) else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    param, fit = cfg.source_param()
    sdim = FockDim(cfg.two_mode_signal_n_max)
    source = squeezed_vacuum(param, sdim)
    eta_pre = cfg.loss_budget.efficiency_before_tap
    if eta_pre < 1.0:
        source = apply_channel(source, loss_channel(eta_pre, sdim))
    x_axis, p_axis = _grid_axes(cfg)

    def one_case(idx_spec):
        idx, spec = idx_spec
        hres, state = _simulate_case(cfg, spec, source)
        grid = wigner_eval(state, x_axis, p_axis)
        rep = negativity_report(grid, state)
        record = {
            "herald_n": spec.tap.herald_n,
            "reflectance": spec.tap.reflectance,
            "idler_efficiency": spec.tap.idler_efficiency,
            "probability": hres.probability,
            "rate_hz": hres.probability * cfg.rep_rate_hz,
            "rate_hz_with_duty": hres.probability * cfg.rep_rate_hz * cfg.duty,
            "simulated": _neg_dict(rep),
            "simulated_photon_dist": state.photon_dist().tolist(),
        }
        case_dir = None
        if out is not None:
            case_dir = out / f"case_{spec.tap.herald_n}"
            case_dir.mkdir(exist_ok=True)
            grid.save(case_dir / "wigner_sim")
            _save_photon_dist(case_dir / "photon_dist_sim.csv", state.photon_dist())
        if mode == "full":
            plan = MeasurementPlan(phases=cfg.phases,
                                   frames_per_phase=spec.frames_per_phase,
                                   shot_frames=cfg.shot_frames,
                                   seed=_case_seed(cfg.seed, idx))
            ds = normalize_dataset(sample_quadratures(state, plan))
            rec = mle_reconstruct(ds, cfg.mle)
            rec = bootstrap_errors(ds, cfg.mle, rec)
            rec_state = rec.rho.embed(FockDim(cfg.n_max))
            rec_grid = wigner_eval(rec_state, x_axis, p_axis)
            rec_rep = negativity_report(rec_grid, rec_state)
            record["reconstructed"] = _neg_dict(rec_rep)
            record["reconstructed"].update({
                "photon_dist": rec.photon_dist.tolist(),
                "photon_dist_err": None if rec.photon_dist_err is None
                else rec.photon_dist_err.tolist(),
                "wigner_err_origin": rec.wigner_err_origin,
                "iterations_used": rec.iterations_used,
                "converged": rec.converged,
                "monotonic": rec.monotonic,
                "fidelity_to_simulated": state_fidelity(rec.rho, state),
            })
            if case_dir is not None:
                save_dataset(ds, case_dir / "dataset")
                rec.save(case_dir / "reconstruction.json")
                rec_grid.save(case_dir / "wigner_rec")
                _save_photon_dist(case_dir / "photon_dist_rec.csv",
                                  rec.photon_dist, rec.photon_dist_err)
        return idx, record, rep

    workers = _thread_count()
    items = list(enumerate(cfg.cases))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(one_case, items))
    else:
        done = [one_case(it) for it in items]
    done.sort(key=lambda t: t[0])
    records = [r for _, r, _ in done]
    reports = {cfg.cases[i].tap.herald_n: rep for i, _, rep in done}

    # sub-Planck narrowing of every case against the zero-herald reference
    if 0 in reports:
        for rec_ in records:
            hn = rec_["herald_n"]
            if hn != 0:
                rec_["narrowing_vs_herald0"] = narrowing_metrics(reports[hn],
                                                                 reports[0])

    report = {
        "mode": mode,
        "config_hash": cfg.config_hash(),
        "config_name": cfg.name,
        "versions": _versions(),
        "source": {
            "r": param.r,
            "phase": param.phase,
            "eta_total_fit": None if fit is None else fit.eta_total,
            "eta_extra": None if fit is None else fit.eta_extra,
            "eta_extra_applied": cfg.apply_eta_extra and fit is not None,
            "budget_total_efficiency": cfg.loss_budget.total_efficiency,
            "efficiency_before_tap": cfg.loss_budget.efficiency_before_tap,
            "efficiency_after_herald": cfg.loss_budget.efficiency_after_herald,
        },
        "cases": records,
    }
    if out is not None:
        write_report(report, out / "report.json")
    return report


def _versions():
    import scipy

    return {"photonsub": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__}


def report_bytes(report: dict) -> bytes:
    """Canonical serialization of the deterministic part of a report."""
    return json.dumps(report, sort_keys=True, separators=(",", ":")).encode()


def write_report(report: dict, path) -> None:
    """Write {created_at, report}; ``created_at`` is excluded from the
    deterministic payload so identical runs produce identical reports."""
    doc = {"created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
           "report": report}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))


def load_report(path) -> dict:
    doc = json.loads(Path(path).read_text())
    return doc["report"] if "report" in doc else doc


def compare_reports(a: dict, b: dict) -> dict:
    """Per-case deltas of the headline metrics between two reports."""
    cases_a = {c["herald_n"]: c for c in a["cases"]}
    cases_b = {c["herald_n"]: c for c in b["cases"]}
    if set(cases_a) != set(cases_b):
        raise ValidationError(
            f"herald-case sets differ: {sorted(cases_a)} vs {sorted(cases_b)}")

    def metrics(c):
        best = c.get("reconstructed", c["simulated"])
        out = {"w_origin": best["w_origin"], "w_min": best["w_min"],
               "rate_hz": c["rate_hz"]}
        nar = c.get("narrowing_vs_herald0")
        out["narrowing"] = None if nar is None else nar["width_ratio_narrowing"]
        return out

    rows = []
    for hn in sorted(cases_a):
        ma, mb = metrics(cases_a[hn]), metrics(cases_b[hn])
        delta = {}
        for k in ma:
            if ma[k] is None or mb[k] is None:
                delta[k] = None
            else:
                delta[k] = ma[k] - mb[k]
        rows.append({"herald_n": hn, "a": ma, "b": mb, "delta": delta})
    return {"cases": rows}


def format_compare(diff: dict) -> str:
    lines = [f"{'case':>4} {'metric':>12} {'a':>12} {'b':>12} {'delta':>12}"]
    for row in diff["cases"]:
        for k in ("w_origin", "w_min", "narrowing", "rate_hz"):
            va, vb, dv = row["a"][k], row["b"][k], row["delta"][k]
            if va is None or vb is None:
                continue
            lines.append(f"{row['herald_n']:>4} {k:>12} {va:>12.5g} "
                         f"{vb:>12.5g} {dv:>12.5g}")
    return "\n".join(lines)
