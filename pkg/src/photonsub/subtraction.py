"""Tap beamsplitter, lossy photon-number-resolving detection, and heralded
state extraction with heralding probabilities and count-rate estimates.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateHeraldError, ValidationError
from .fock import (DensityMatrix, FockDim, TwoModeState, annihilation_op,
                   partial_trace_idler, tensor)

DEFAULT_PROBABILITY_FLOOR = 1e-12
DEFAULT_IDLER_MARGIN = 6          # idler cutoff = herald_n + margin
IDLER_LEAKAGE_TOL = 1e-8


@dataclass(frozen=True)
class TapConfig:
    """Tap beamsplitter and idler detection settings for one herald case."""

    reflectance: float            # fraction kept in the signal arm
    herald_n: int                 # photons required at the detector
    idler_efficiency: float

    def __post_init__(self):
        if not 0.0 <= self.reflectance <= 1.0:
            raise ValidationError("reflectance outside [0, 1]", field="reflectance")
        if not 0.0 <= self.idler_efficiency <= 1.0:
            raise ValidationError("idler efficiency outside [0, 1]",
                                  field="idler_efficiency")
        if self.herald_n < 0:
            raise ValidationError("herald photon number must be >= 0",
                                  field="herald_n")


@dataclass(frozen=True)
class HeraldResult:
    state: DensityMatrix          # normalized post-herald signal state
    probability: float
    rate_hz: float


@lru_cache(maxsize=64)
def _beamsplitter_cached(reflectance, n_s, n_i):
    ds, di = n_s + 1, n_i + 1
    a_s = np.kron(annihilation_op(FockDim(n_s)), np.eye(di))
    a_i = np.kron(np.eye(ds), annihilation_op(FockDim(n_i)))
    theta = math.acos(min(1.0, math.sqrt(reflectance)))
    K = theta * (a_s.conj().T @ a_i - a_s @ a_i.conj().T)
    U = expm(K)
    U.flags.writeable = False
    return U


def beamsplitter_op(reflectance: float, dim_s: FockDim, dim_i: FockDim) -> np.ndarray:
    """Two-mode unitary for a beamsplitter keeping `reflectance` in the signal.

    Real convention: a_s -> sqrt(R) a_s + sqrt(1-R) a_i and
    a_i -> -sqrt(1-R) a_s + sqrt(R) a_i. Built as expm of the anti-Hermitian
    generator, so the matrix is exactly unitary on the truncated space; it
    acts like the ideal beamsplitter on all states with total photon number
    up to min(cutoffs).
    """
    if not 0.0 <= reflectance <= 1.0:
        raise ValidationError("reflectance outside [0, 1]")
    return _beamsplitter_cached(float(reflectance), dim_s.n_max, dim_i.n_max)


def pnrd_povm(n: int, eta: float, dim: FockDim) -> np.ndarray:
    """POVM element of a binomial-efficiency photon-number detector.

    Pi_n = sum_{m>=n} C(m,n) eta^n (1-eta)^{m-n} |m><m|. Summing n over
    0..n_max gives the identity on the truncated space.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValidationError("detector efficiency outside [0, 1]")
    if n < 0:
        raise ValidationError("photon count must be >= 0")
    diag = np.zeros(dim.dim)
    for m in range(n, dim.dim):
        diag[m] = math.comb(m, n) * eta ** n * (1.0 - eta) ** (m - n)
    return np.diag(diag).astype(np.complex128)


def _heralded_unnormalized(rho_in, tap, dim_idler):
    """Unnormalized post-measurement signal state and the two-mode leakage."""
    dim_s = rho_in.dim
    idler_vac = DensityMatrix.vacuum(dim_idler)
    st = tensor(rho_in, idler_vac)
    U = beamsplitter_op(tap.reflectance, dim_s, dim_idler)
    mixed = U @ st.elements @ U.conj().T
    ds, di = dim_s.dim, dim_idler.dim
    # population pushed to the idler cutoff row measures two-mode truncation
    four = mixed.reshape(ds, di, ds, di)
    leakage = float(np.einsum("aiai->i", four).real[-1]) if di > 1 else 0.0
    pi_diag = np.diag(pnrd_povm(tap.herald_n, tap.idler_efficiency, dim_idler)).real
    red = np.einsum("aibi,i->ab", four, pi_diag)
    red = 0.5 * (red + red.conj().T)
    return red, leakage


def herald(rho_in: DensityMatrix, tap: TapConfig, rep_rate_hz: float = 0.0,
           duty: float = 1.0, dim_idler: FockDim | None = None,
           probability_floor: float = DEFAULT_PROBABILITY_FLOOR,
           idler_leakage_tol: float = IDLER_LEAKAGE_TOL) -> HeraldResult:
    """Tap the input state and project on a detected photon number.

    Pipeline: tensor with idler vacuum -> beamsplitter -> (I x Pi_n) ->
    partial-trace idler. The probability is the resulting trace; the rate is
    probability * rep_rate_hz * duty. ``duty`` defaults to 1 so quoted rates
    ignore any measurement duty cycle.
    """
    if abs(rho_in.trace() - 1.0) > 1e-9:
        raise ValidationError("herald input state must be normalized")
    if dim_idler is None:
        dim_idler = FockDim(tap.herald_n + DEFAULT_IDLER_MARGIN)
    if tap.herald_n > dim_idler.n_max:
        raise ValidationError("herald photon number exceeds idler cutoff")
    red, leakage = _heralded_unnormalized(rho_in, tap, dim_idler)
    if leakage > idler_leakage_tol:
        raise ValidationError(
            f"idler truncation leakage {leakage:.2e} exceeds {idler_leakage_tol:.0e}; "
            f"raise the idler cutoff")
    p = float(np.trace(red).real)
    if p < probability_floor:
        raise DegenerateHeraldError(
            f"herald probability {p:.3e} below floor {probability_floor:.0e} "
            f"for herald_n={tap.herald_n}")
    state = DensityMatrix(rho_in.dim, red / p)
    return HeraldResult(state=state, probability=p, rate_hz=p * rep_rate_hz * duty)


def heralding_distribution(rho_in: DensityMatrix, reflectance: float,
                           idler_efficiency: float,
                           dim_idler: FockDim) -> np.ndarray:
    """Probabilities of every detected photon number 0..idler cutoff.

    Sums to 1 by POVM completeness (a cheap completeness diagnostic for the
    full tap-plus-detector pipeline).
    """
    tap0 = TapConfig(reflectance, 0, idler_efficiency)
    red0, _ = _heralded_unnormalized(rho_in, tap0, dim_idler)
    ds, di = rho_in.dim.dim, dim_idler.dim
    dim_s = rho_in.dim
    st = tensor(rho_in, DensityMatrix.vacuum(dim_idler))
    U = beamsplitter_op(reflectance, dim_s, dim_idler)
    mixed = (U @ st.elements @ U.conj().T).reshape(ds, di, ds, di)
    idler_pop = np.einsum("aiai->i", mixed).real
    probs = np.zeros(di)
    for n in range(di):
        pi_diag = np.diag(pnrd_povm(n, idler_efficiency, dim_idler)).real
        probs[n] = float(idler_pop @ pi_diag)
    return probs


def count_rate_table(taps, source_param, opa_efficiency, dim: FockDim,
                     rep_rate_hz: float, duty: float = 1.0):
    """Heralding rates for a list of tap configs from a common source.

    The source is a pure squeezed vacuum (``source_param``) degraded by the
    source-internal transmission ``opa_efficiency`` before the tap. Rows are
    returned in input order regardless of evaluation order.
    """
    from .stateprep import loss_channel, squeezed_vacuum
    from .fock import apply_channel

    rho = squeezed_vacuum(source_param, dim)
    if opa_efficiency < 1.0:
        rho = apply_channel(rho, loss_channel(opa_efficiency, dim))
    rows = []
    for tap in taps:
        row = {"reflectance": tap.reflectance, "herald_n": tap.herald_n,
               "idler_efficiency": tap.idler_efficiency}
        try:
            res = herald(rho, tap, rep_rate_hz=rep_rate_hz, duty=duty)
            row.update(probability=res.probability, rate_hz=res.rate_hz,
                       degenerate=False)
        except DegenerateHeraldError:
            # e.g. R = 1 with herald_n >= 1: nothing reaches the detector
            row.update(probability=0.0, rate_hz=0.0, degenerate=True)
        rows.append(row)
    return rows
