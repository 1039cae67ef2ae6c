"""Quadrature marginals and synthetic phase-tagged homodyne datasets.

Samples follow the measurement protocol of the experiment: a fixed set of
local-oscillator phases, a fixed number of frames per phase, and a block of
vacuum shot-noise frames used for calibration. Sampling is deterministic
given (seed, phase index), so phases may be drawn concurrently.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CalibrationError, ValidationError
from .fock import DensityMatrix, quadrature_op

DATASET_CONVENTION = "hbar1_halfvac"   # values calibrated to vacuum variance 1/2
CDF_TABLE_POINTS = 4096
CDF_SIGMA_SPAN = 6.0
MIN_SHOT_FRAMES = 100


@dataclass(frozen=True)
class MeasurementPlan:
    phases: tuple                 # radians, distinct
    frames_per_phase: int
    shot_frames: int
    seed: int

    def __post_init__(self):
        phases = tuple(float(t) for t in self.phases)
        object.__setattr__(self, "phases", phases)
        if not phases:
            raise ValidationError("plan needs at least one phase")
        if len(set(phases)) != len(phases):
            raise ValidationError("phases must be distinct")
        if self.frames_per_phase < 1:
            raise ValidationError("frames_per_phase must be >= 1")
        if self.shot_frames < 0:
            raise ValidationError("shot_frames must be >= 0")

    def to_dict(self):
        return {"phases_rad": list(self.phases),
                "frames_per_phase": self.frames_per_phase,
                "shot_frames": self.shot_frames,
                "seed": self.seed}

    @staticmethod
    def from_dict(d):
        return MeasurementPlan(phases=tuple(d["phases_rad"]),
                               frames_per_phase=int(d["frames_per_phase"]),
                               shot_frames=int(d["shot_frames"]),
                               seed=int(d["seed"]))


@dataclass(frozen=True)
class QuadratureDataset:
    """Phase-tagged quadrature frames plus shot-noise calibration frames.

    ``phases`` holds the phase of every frame (radians, parallel to
    ``values``); ``meta`` records the plan, convention string, and whether
    shot-noise normalization has been applied. The ``mode_function`` metadata
    slot is reserved for externally measured data.
    """

    phases: np.ndarray
    values: np.ndarray
    shot_values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("phases", "values", "shot_values"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if self.phases.shape != self.values.shape:
            raise ValidationError("phases and values must align")
        declared = self.meta.get("phase_set")
        if declared is not None:
            extra = set(np.round(self.phases, 12)) - set(np.round(declared, 12))
            if extra:
                raise ValidationError(f"frames carry undeclared phases: {sorted(extra)}")

    @property
    def phase_set(self):
        return tuple(self.meta.get("phase_set", sorted(set(self.phases.tolist()))))

    def frames_for_phase(self, theta):
        return self.values[np.isclose(self.phases, theta)]


def hermite_functions(x, n_max):
    """Table psi[n, k] = <x_k|n> of harmonic-oscillator wavefunctions.

    Normalized recurrence: psi_0 = pi^{-1/4} e^{-x^2/2},
    psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1}.
    """
    x = np.asarray(x, dtype=np.float64)
    psi = np.empty((n_max + 1, x.size))
    psi[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        psi[1] = np.sqrt(2.0) * x * psi[0]
    for n in range(1, n_max):
        psi[n + 1] = np.sqrt(2.0 / (n + 1)) * x * psi[n] \
            - np.sqrt(n / (n + 1.0)) * psi[n - 1]
    return psi


def marginal_pdf(rho: DensityMatrix, theta: float, x_axis) -> np.ndarray:
    """pr(x|theta) = sum_{mn} psi_m psi_n rho_mn e^{i(n-m)theta}."""
    x = np.asarray(x_axis, dtype=np.float64)
    psi = hermite_functions(x, rho.n_max)
    phases = np.exp(1j * theta * np.arange(rho.dim.dim))
    u = psi * phases[:, None]
    pdf = np.einsum("mx,mn,nx->x", u.conj(), rho.elements, u).real
    return np.clip(pdf, 0.0, None)


def _phase_variance(rho, theta):
    op = quadrature_op(rho.dim, theta)
    m1 = rho.expect(op).real
    m2 = rho.expect(op @ op).real
    return m2 - m1 * m1, m1


def _sample_phase(rho, theta, n, rng):
    """Inverse-CDF sampling on a dense tabulated CDF over +/- 6 sigma."""
    var, mean = _phase_variance(rho, theta)
    span = CDF_SIGMA_SPAN * math.sqrt(max(var, 1e-6))
    grid = np.linspace(mean - span, mean + span, CDF_TABLE_POINTS)
    pdf = marginal_pdf(rho, theta, grid)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, grid)


def sample_quadratures(rho: DensityMatrix, plan: MeasurementPlan) -> QuadratureDataset:
    """Draw a synthetic dataset; per-phase RNG streams derive from
    (seed, phase index) so results do not depend on evaluation order."""
    if abs(rho.trace() - 1.0) > 1e-9:
        raise ValidationError("state must be normalized before sampling")
    root = np.random.SeedSequence(plan.seed)
    streams = root.spawn(len(plan.phases) + 1)
    phases_out = []
    values_out = []
    for k, theta in enumerate(plan.phases):
        rng = np.random.default_rng(streams[k])
        vals = _sample_phase(rho, theta, plan.frames_per_phase, rng)
        phases_out.append(np.full(plan.frames_per_phase, theta))
        values_out.append(vals)
    shot_rng = np.random.default_rng(streams[-1])
    shot = shot_rng.normal(0.0, math.sqrt(0.5), plan.shot_frames)
    meta = {"plan": plan.to_dict(), "convention": DATASET_CONVENTION,
            "phase_set": list(plan.phases), "normalized": False,
            "mode_function": None}
    return QuadratureDataset(np.concatenate(phases_out), np.concatenate(values_out),
                             shot, meta)


def normalize_dataset(ds: QuadratureDataset) -> QuadratureDataset:
    """Rescale so the shot-frame variance maps to 1/2; idempotent."""
    if ds.shot_values.size < MIN_SHOT_FRAMES:
        raise CalibrationError(
            f"need >= {MIN_SHOT_FRAMES} shot frames for calibration, "
            f"got {ds.shot_values.size}")
    var = float(np.var(ds.shot_values))
    scale = math.sqrt(0.5 / var)
    meta = dict(ds.meta)
    meta["normalized"] = True
    meta["shot_scale"] = meta.get("shot_scale", 1.0) * scale
    return QuadratureDataset(ds.phases, ds.values * scale, ds.shot_values * scale,
                             meta)


# ---------------------------------------------------------------------------
# Dataset files: data.csv + shot.csv (repr-exact floats) + plan.json sidecar.
# The tomography module is agnostic to whether files came from this sampler
# or from a real experiment.
# ---------------------------------------------------------------------------

_CSV_HEADER = f"# convention={DATASET_CONVENTION}\n"


def save_dataset(ds: QuadratureDataset, outdir) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "data.csv", "w") as fh:
        fh.write(_CSV_HEADER)
        fh.write("phase_deg,value\n")
        for theta, v in zip(ds.phases.tolist(), ds.values.tolist()):
            fh.write(f"{math.degrees(theta)!r},{v!r}\n")
    with open(outdir / "shot.csv", "w") as fh:
        fh.write(_CSV_HEADER)
        fh.write("phase_deg,value\n")
        for v in ds.shot_values.tolist():
            fh.write(f"nan,{v!r}\n")
    (outdir / "plan.json").write_text(json.dumps(ds.meta, indent=1, sort_keys=True))


def load_dataset(indir) -> QuadratureDataset:
    indir = Path(indir)
    meta = json.loads((indir / "plan.json").read_text())

    def read_csv(path):
        lines = path.read_text().splitlines()
        if not lines or not lines[0].startswith("# convention="):
            raise ValidationError(f"{path} missing convention header")
        conv = lines[0].split("=", 1)[1]
        if conv != DATASET_CONVENTION:
            raise ValidationError(f"unsupported convention {conv!r}")
        rows = [ln.split(",") for ln in lines[2:] if ln]
        deg = np.array([float(r[0]) for r in rows])
        val = np.array([float(r[1]) for r in rows])
        return deg, val

    deg, values = read_csv(indir / "data.csv")
    _, shot = read_csv(indir / "shot.csv")
    phases = np.radians(deg)
    declared = meta.get("phase_set")
    if declared:
        # snap to the exact declared radian values; the degree column is a
        # display encoding and must not perturb the round trip
        declared = np.asarray(declared, dtype=np.float64)
        idx = np.abs(phases[:, None] - declared[None, :]).argmin(axis=1)
        near = np.abs(phases - declared[idx]) < 1e-9
        phases = np.where(near, declared[idx], phases)
    return QuadratureDataset(phases, values, shot, meta)


def dataset_roundtrips(ds: QuadratureDataset, tmpdir) -> bool:
    """Bit-exact save/load check used by the invariant suite."""
    save_dataset(ds, tmpdir)
    back = load_dataset(tmpdir)
    return (np.array_equal(back.values, ds.values)
            and np.array_equal(back.shot_values, ds.shot_values)
            and np.allclose(back.phases, ds.phases, rtol=0, atol=1e-15))
