"""Truncated Fock-space linear algebra for a single optical mode.

States, operators, channels, tensor products, and partial traces used by
every other module. Conventions: hbar = 1, quadrature
x_theta = (a e^{-i theta} + a^dag e^{i theta}) / sqrt(2), vacuum quadrature
variance 1/2. All objects are dense complex matrices; value types are
immutable after construction and safe to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Library tolerances; callers may override per operation.
HERMITICITY_TOL = 1e-12
PSD_TOL = 1e-10
COMPLETENESS_TOL = 1e-10

CONVENTION = "hbar=1, vacuum W(0,0)=1/pi"


@dataclass(frozen=True)
class FockDim:
    """Photon-number cutoff; the Hilbert-space dimension is n_max + 1."""

    n_max: int

    def __post_init__(self):
        if not isinstance(self.n_max, (int, np.integer)) or self.n_max < 1:
            raise ValidationError("n_max must be an integer >= 1", field="n_max")

    @property
    def dim(self):
        return self.n_max + 1


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=np.complex128)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DensityMatrix:
    """Mixed state of one mode in the truncated Fock basis.

    Invariants checked on construction: Hermitian within 1e-12, trace in
    [0, 1] (up to tolerance), smallest eigenvalue >= -1e-10. States may be
    sub-normalized mid-pipeline; use :meth:`normalized` at heralding or
    reconstruction normalization points.
    """

    dim: FockDim
    elements: np.ndarray = field(repr=False)

    def __post_init__(self):
        el = _freeze(self.elements)
        object.__setattr__(self, "elements", el)
        d = self.dim.dim
        if el.shape != (d, d):
            raise ValidationError(f"elements shape {el.shape} != ({d}, {d})")
        herm = np.abs(el - el.conj().T).max()
        if herm > HERMITICITY_TOL:
            raise ValidationError(f"not Hermitian: max asymmetry {herm:.3e}")
        tr = np.trace(el).real
        if tr < -PSD_TOL or tr > 1 + 1e-9:
            raise ValidationError(f"trace {tr} outside [0, 1]")
        if np.linalg.eigvalsh(el).min() < -PSD_TOL:
            raise ValidationError("not positive semidefinite")

    @property
    def n_max(self):
        return self.dim.n_max

    def trace(self):
        return float(np.trace(self.elements).real)

    def normalized(self):
        tr = self.trace()
        if tr <= 0:
            raise ValidationError("cannot normalize a zero-trace state")
        return DensityMatrix(self.dim, self.elements / tr)

    def expect(self, op):
        """<O> = Tr(rho O) for a matrix O of matching dimension."""
        return complex(np.trace(self.elements @ op))

    def photon_dist(self):
        return self.elements.diagonal().real.copy()

    def embed(self, dim):
        """Zero-pad into a larger cutoff (no-op if equal)."""
        if dim.n_max < self.n_max:
            raise ValidationError("embed target smaller than current cutoff")
        if dim.n_max == self.n_max:
            return self
        out = np.zeros((dim.dim, dim.dim), dtype=np.complex128)
        out[: self.dim.dim, : self.dim.dim] = self.elements
        return DensityMatrix(dim, out)

    @staticmethod
    def from_pure(vec, dim):
        vec = np.asarray(vec, dtype=np.complex128)
        return DensityMatrix(dim, np.outer(vec, vec.conj()))

    @staticmethod
    def vacuum(dim):
        el = np.zeros((dim.dim, dim.dim), dtype=np.complex128)
        el[0, 0] = 1.0
        return DensityMatrix(dim, el)

    @staticmethod
    def fock(n, dim):
        if not 0 <= n <= dim.n_max:
            raise ValidationError(f"fock level {n} outside cutoff {dim.n_max}")
        el = np.zeros((dim.dim, dim.dim), dtype=np.complex128)
        el[n, n] = 1.0
        return DensityMatrix(dim, el)


@dataclass(frozen=True)
class TwoModeState:
    """Signal (x) idler state over the tensor-product Fock basis.

    Flat index convention (fixed): ``flat = n_s * (dim_idler.n_max + 1) + n_i``,
    i.e. signal-major ordering as produced by ``np.kron(signal, idler)``.
    """

    dim_signal: FockDim
    dim_idler: FockDim
    elements: np.ndarray = field(repr=False)

    def __post_init__(self):
        el = _freeze(self.elements)
        object.__setattr__(self, "elements", el)
        d = self.dim_signal.dim * self.dim_idler.dim
        if el.shape != (d, d):
            raise ValidationError(f"elements shape {el.shape} != ({d}, {d})")
        herm = np.abs(el - el.conj().T).max()
        if herm > HERMITICITY_TOL:
            raise ValidationError(f"not Hermitian: max asymmetry {herm:.3e}")
        tr = np.trace(el).real
        if tr < -PSD_TOL or tr > 1 + 1e-9:
            raise ValidationError(f"trace {tr} outside [0, 1]")

    def trace(self):
        return float(np.trace(self.elements).real)


@dataclass(frozen=True)
class KrausChannel:
    """Channel rho -> sum_k A_k rho A_k^dag given by its Kraus operators."""

    operators: tuple

    def __post_init__(self):
        ops = tuple(_freeze(op) for op in self.operators)
        object.__setattr__(self, "operators", ops)
        if not ops:
            raise ValidationError("channel needs at least one Kraus operator")

    def completeness_defect(self):
        """max |sum_k A_k^dag A_k - I| (zero for trace-preserving channels)."""
        d = self.operators[0].shape[0]
        acc = np.zeros((d, d), dtype=np.complex128)
        for op in self.operators:
            acc += op.conj().T @ op
        return float(np.abs(acc - np.eye(d)).max())

    def is_complete(self, tol=COMPLETENESS_TOL):
        return self.completeness_defect() <= tol


def annihilation_op(dim: FockDim) -> np.ndarray:
    """Matrix of a with <n-1|a|n> = sqrt(n).

    At the cutoff, a|n_max> = sqrt(n_max) |n_max - 1> as in the untruncated
    operator; only a^dag loses its top transition to truncation.
    """
    d = dim.dim
    m = np.zeros((d, d), dtype=np.complex128)
    n = np.arange(1, d)
    m[n - 1, n] = np.sqrt(n)
    return m


def creation_op(dim: FockDim) -> np.ndarray:
    return annihilation_op(dim).conj().T


def number_op(dim: FockDim) -> np.ndarray:
    return np.diag(np.arange(dim.dim, dtype=np.complex128))


def quadrature_op(dim: FockDim, theta: float) -> np.ndarray:
    """x_theta = (a e^{-i theta} + a^dag e^{i theta}) / sqrt(2); Hermitian.

    Vacuum variance is 1/2 in this convention.
    """
    a = annihilation_op(dim)
    return (a * np.exp(-1j * theta) + a.conj().T * np.exp(1j * theta)) / np.sqrt(2.0)


def apply_channel(rho: DensityMatrix, ch: KrausChannel) -> DensityMatrix:
    d = rho.dim.dim
    if ch.operators[0].shape != (d, d):
        raise ValidationError(
            f"channel dimension {ch.operators[0].shape[0]} != state dimension {d}")
    out = np.zeros((d, d), dtype=np.complex128)
    for op in ch.operators:
        out += op @ rho.elements @ op.conj().T
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(rho.dim, out)


def tensor(rho_s: DensityMatrix, rho_i: DensityMatrix) -> TwoModeState:
    """Kronecker product under the signal-major flat-index convention."""
    return TwoModeState(rho_s.dim, rho_i.dim, np.kron(rho_s.elements, rho_i.elements))


def partial_trace_idler(st: TwoModeState) -> DensityMatrix:
    ds, di = st.dim_signal.dim, st.dim_idler.dim
    four = st.elements.reshape(ds, di, ds, di)
    red = np.einsum("aibi->ab", four)
    red = 0.5 * (red + red.conj().T)
    return DensityMatrix(st.dim_signal, red)


def state_fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Uhlmann fidelity F(a, b) = (Tr sqrt(sqrt(a) b sqrt(a)))^2."""
    if a.dim.n_max != b.dim.n_max:
        n = max(a.dim.n_max, b.dim.n_max)
        a, b = a.embed(FockDim(n)), b.embed(FockDim(n))
    w, v = np.linalg.eigh(a.elements)
    w = np.clip(w, 0.0, None)
    sqrt_a = (v * np.sqrt(w)) @ v.conj().T
    inner = sqrt_a @ b.elements @ sqrt_a
    ev = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sqrt(np.clip(ev, 0.0, None)).sum() ** 2)
