"""Iterative maximum-likelihood reconstruction from phase-tagged quadrature
data, with bootstrap error bars for the photon-number distribution and the
Wigner origin value.

The estimator is the multiplicative fixed point rho <- N[R(rho) rho R(rho)],
R(rho) = sum_j f_j Pi_j / pr_j(rho), run over binned histograms per phase. It
reconstructs the state as measured: no detector-efficiency deconvolution is
applied by default (an efficiency-aware POVM mode exists for sensitivity
studies).
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._accel import mle_iterate
from .errors import ValidationError
from .fock import DensityMatrix, FockDim
from .homodyne import QuadratureDataset, hermite_functions
from .stateprep import loss_channel
from .wigner import parity_origin

PROJECTOR_PROB_FLOOR = 1e-300
_GL_NODES = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 9.0
LL_SLACK = 1e-10


@dataclass(frozen=True)
class MleConfig:
    dim: FockDim
    max_iters: int = 2000
    ll_tolerance: float = 1e-9
    binning: int | str = 256          # bins per phase, or "unbinned"
    bootstrap_resamples: int = 0
    detector_efficiency: float | None = None   # optional deconvolution mode

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.ll_tolerance <= 0:
            raise ValidationError("ll_tolerance must be > 0")
        if self.binning != "unbinned" and int(self.binning) < 8:
            raise ValidationError("binning must be >= 8 bins or 'unbinned'")


@dataclass(frozen=True)
class Reconstruction:
    rho: DensityMatrix
    log_likelihood_trace: np.ndarray
    iterations_used: int
    converged: bool
    photon_dist: np.ndarray
    photon_dist_err: np.ndarray | None = None
    wigner_err_origin: float | None = None
    floor_hits: int = 0
    monotonic: bool = True

    def to_dict(self):
        return {
            "density_matrix": {
                "n_max": self.rho.n_max,
                "real": self.rho.elements.real.tolist(),
                "imag": self.rho.elements.imag.tolist(),
            },
            "photon_dist": self.photon_dist.tolist(),
            "photon_dist_err": None if self.photon_dist_err is None
            else self.photon_dist_err.tolist(),
            "wigner_origin": parity_origin(self.rho),
            "wigner_err_origin": self.wigner_err_origin,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "monotonic": self.monotonic,
            "floor_hits": self.floor_hits,
            "log_likelihood_trace": self.log_likelihood_trace.tolist(),
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def projector(theta: float, x: float, dim: FockDim) -> np.ndarray:
    """Rank-1 homodyne kernel |x_theta><x_theta| in the Fock basis.

    Same wavefunction convention as the sampler: row n carries
    psi_n(x) e^{i n theta}.
    """
    psi = hermite_functions(np.array([x]), dim.n_max)[:, 0]
    u = psi * np.exp(1j * theta * np.arange(dim.dim))
    return np.outer(u, u.conj())


def binned_projectors(theta: float, edges: np.ndarray, dim: FockDim) -> np.ndarray:
    """POVM kernels integrated over histogram bins (3-point Gauss-Legendre)."""
    centers = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    xs = centers[:, None] + half[:, None] * _GL_NODES[None, :]
    psi = hermite_functions(xs.ravel(), dim.n_max)
    u = psi * np.exp(1j * theta * np.arange(dim.dim))[:, None]
    u = u.reshape(dim.dim, len(centers), _GL_NODES.size)
    w = half[:, None] * _GL_WEIGHTS[None, :]
    return np.einsum("mjq,njq,jq->jmn", u, u.conj(), w)


def _build_binned(ds, cfg):
    kernels = []
    counts = []
    nbins = int(cfg.binning)
    excluded = 0
    for theta in ds.phase_set:
        vals = ds.frames_for_phase(theta)
        std = float(np.std(vals))
        lo, hi = -6.0 * std + vals.mean(), 6.0 * std + vals.mean()
        edges = np.linspace(lo, hi, nbins + 1)
        hist, _ = np.histogram(vals, bins=edges)
        excluded += vals.size - int(hist.sum())
        keep = hist > 0
        kern = binned_projectors(theta, edges, cfg.dim)[keep]
        kernels.append(kern)
        counts.append(hist[keep].astype(np.float64))
    return np.concatenate(kernels), np.concatenate(counts), excluded


def _build_unbinned(ds, cfg):
    kernels = []
    for theta, x in zip(ds.phases, ds.values):
        kernels.append(projector(theta, x, cfg.dim))
    return np.stack(kernels), np.ones(len(ds.values)), 0


def _apply_efficiency(kernels, cfg):
    """Efficiency-aware POVM: propagate each kernel through the adjoint of
    the loss channel so reconstruction refers to the pre-loss state."""
    ch = loss_channel(cfg.detector_efficiency, cfg.dim)
    out = np.empty_like(kernels)
    for j, K in enumerate(kernels):
        acc = np.zeros_like(K)
        for A in ch.operators:
            acc += A.conj().T @ K @ A
        out[j] = acc
    return out


def mle_reconstruct(ds: QuadratureDataset, cfg: MleConfig) -> Reconstruction:
    """Run the R-rho-R fixed point on a calibrated dataset.

    Requires shot-noise normalization and at least two distinct phases.
    Non-convergence is reported via the ``converged`` flag, not an error;
    a log-likelihood decrease beyond slack clears ``monotonic``.
    """
    if not ds.meta.get("normalized", False):
        raise ValidationError("dataset must be shot-noise normalized before MLE")
    if len(ds.phase_set) < 2:
        raise ValidationError("need at least 2 distinct phases for tomography")
    if cfg.binning == "unbinned":
        kernels, counts, _ = _build_unbinned(ds, cfg)
    else:
        kernels, counts, _ = _build_binned(ds, cfg)
    if cfg.detector_efficiency is not None:
        kernels = _apply_efficiency(kernels, cfg)
    rho, trace, iters, converged, floor_hits = mle_iterate(
        kernels, counts, cfg.max_iters, cfg.ll_tolerance, PROJECTOR_PROB_FLOOR)
    diffs = np.diff(trace)
    monotonic = bool((diffs >= -LL_SLACK * np.abs(trace[:-1])).all())
    dm = DensityMatrix(cfg.dim, rho).normalized()
    return Reconstruction(
        rho=dm,
        log_likelihood_trace=trace,
        iterations_used=iters,
        converged=converged,
        photon_dist=dm.photon_dist(),
        floor_hits=floor_hits,
        monotonic=monotonic,
    )


def bootstrap_errors(ds: QuadratureDataset, cfg: MleConfig,
                     rec: Reconstruction) -> Reconstruction:
    """Fill photon_dist_err and wigner_err_origin by resampling frames.

    Frames are resampled with replacement within each phase; resample RNG
    streams derive from the dataset's plan seed, so error bars are
    reproducible. With fewer than 2 resamples the errors stay absent.
    """
    n = cfg.bootstrap_resamples
    if n < 2:
        return rec
    seed = ds.meta.get("plan", {}).get("seed", 0)
    root = np.random.SeedSequence(entropy=seed, spawn_key=(9117,))
    streams = root.spawn(n)
    dists = []
    origins = []
    for b in range(n):
        rng = np.random.default_rng(streams[b])
        parts_p, parts_v = [], []
        for theta in ds.phase_set:
            vals = ds.frames_for_phase(theta)
            idx = rng.integers(0, vals.size, vals.size)
            parts_p.append(np.full(vals.size, theta))
            parts_v.append(vals[idx])
        resampled = QuadratureDataset(np.concatenate(parts_p),
                                      np.concatenate(parts_v),
                                      ds.shot_values, dict(ds.meta))
        boot = mle_reconstruct(resampled, replace(cfg, bootstrap_resamples=0))
        dists.append(boot.photon_dist)
        origins.append(parity_origin(boot.rho))
    return replace(rec,
                   photon_dist_err=np.std(np.stack(dists), axis=0),
                   wigner_err_origin=float(np.std(origins)))
