"""Band-limited real fields on the torus [0, 2pi)^2.

A :class:`SpectralField` stores the full 2-D discrete Fourier coefficients
of a real function, normalised so that ``phi(x, y) = sum c[k] exp(i k.x)``.
Axis 0 of every array is ``x`` and axis 1 is ``y``.  The Nyquist row and
column are kept at zero so that every linear operation with a real-valued
or odd symbol maps real fields to real fields.

Products use the 2/3 rule: a product is formed on the collocation grid and
every mode with ``|k_x| > (N_x - 1) // 3`` or ``|k_y| > (N_y - 1) // 3`` is
discarded.  A product of two fields with bands ``p`` and ``q`` is exact
whenever ``p + q`` does not exceed that cutoff.
"""
from dataclasses import dataclass
import json

import numpy as np

from .errors import GridMismatchError, ResonanceError, SolvabilityError

TWO_PI = 2.0 * np.pi
AREA = TWO_PI**2


@dataclass(frozen=True)
class NonlocalConvention:
    """How the nonlocal antiderivatives treat the modes they cannot invert.

    ``paper_constant`` reproduces ``int_0^x f dxi - int_0^{2pi} f dx``; for
    input with zero mean along the axis this is the antiderivative that
    vanishes at ``x = 0``.  ``mean_free`` returns the antiderivative with
    zero mean along the axis.  With ``project`` set, a non-zero axis mean
    in the input is discarded instead of raising.
    """

    zero_mode_rule: str = "paper_constant"
    resonance_tolerance: float = 1e-9
    project: bool = False

    def __post_init__(self):
        if self.zero_mode_rule not in ("paper_constant", "mean_free"):
            raise ValueError(f"unknown zero_mode_rule {self.zero_mode_rule!r}")
        if not self.resonance_tolerance > 0:
            raise ValueError("resonance_tolerance must be positive")


PAPER_CONSTANT = NonlocalConvention("paper_constant")
MEAN_FREE = NonlocalConvention("mean_free")


def wavenumbers(n):
    return np.fft.fftfreq(n, 1.0 / n)


def dealias_cutoff(n):
    return (n - 1) // 3


def safe_grid(total_band, n=0):
    """Smallest even grid on which products up to ``total_band`` are exact."""
    m = 3 * int(total_band) + 1
    m += m % 2
    return max(m, n)


def grid_coords(nx, ny=None):
    ny = nx if ny is None else ny
    x = TWO_PI * np.arange(nx) / nx
    y = TWO_PI * np.arange(ny) / ny
    return np.meshgrid(x, y, indexing="ij")


def _axis_index(axis):
    if axis in ("x", 0):
        return 0
    if axis in ("y", 1):
        return 1
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


class SpectralField:
    """Immutable real field on T^2 held as Hermitian Fourier coefficients."""

    __slots__ = ("_coef", "_grid")

    def __init__(self, coef, hermitize=False):
        c = np.array(coef, dtype=complex)
        if c.ndim != 2 or c.shape[0] % 2 or c.shape[1] % 2:
            raise ValueError(f"coefficients must be a 2-D array with even sides, got {c.shape}")
        if hermitize:
            c = 0.5 * (c + np.conj(np.roll(c[::-1, ::-1], 1, axis=(0, 1))))
        c[c.shape[0] // 2, :] = 0.0
        c[:, c.shape[1] // 2] = 0.0
        c.flags.writeable = False
        self._coef = c
        self._grid = None

    # construction -------------------------------------------------------

    @classmethod
    def from_grid(cls, values):
        v = np.asarray(values, dtype=float)
        return cls(np.fft.fft2(v, norm="forward"))

    @classmethod
    def from_function(cls, func, nx, ny=None):
        X, Y = grid_coords(nx, ny)
        return cls.from_grid(func(X, Y))

    @classmethod
    def zeros(cls, nx, ny=None):
        ny = nx if ny is None else ny
        return cls(np.zeros((nx, ny), dtype=complex))

    @classmethod
    def constant(cls, value, nx, ny=None):
        ny = nx if ny is None else ny
        c = np.zeros((nx, ny), dtype=complex)
        c[0, 0] = value
        return cls(c)

    # accessors ----------------------------------------------------------

    @property
    def coef(self):
        return self._coef

    @property
    def shape(self):
        return self._coef.shape

    @property
    def nx(self):
        return self._coef.shape[0]

    @property
    def ny(self):
        return self._coef.shape[1]

    def to_grid(self):
        if self._grid is None:
            g = np.fft.ifft2(self._coef, norm="forward").real
            g.flags.writeable = False
            self._grid = g
        return self._grid

    def imag_residual(self):
        """Max-norm of the imaginary part of the inverse transform."""
        return float(np.max(np.abs(np.fft.ifft2(self._coef, norm="forward").imag)))

    def mean(self):
        return float(self._coef[0, 0].real)

    def band(self, tol=1e-13):
        """Largest |k_x| and |k_y| carrying a coefficient above ``tol`` (relative)."""
        mag = np.abs(self._coef)
        top = mag.max()
        if top == 0:
            return 0, 0
        kx, ky = np.nonzero(mag > tol * max(top, 1.0))
        kx = np.abs(wavenumbers(self.nx)[kx])
        ky = np.abs(wavenumbers(self.ny)[ky])
        return int(kx.max(initial=0)), int(ky.max(initial=0))

    def resample(self, nx, ny=None):
        """Zero-pad or truncate in Fourier space onto an ``nx`` x ``ny`` grid."""
        ny = nx if ny is None else ny
        kx_old, ky_old = wavenumbers(self.nx), wavenumbers(self.ny)
        ix = [i for i, k in enumerate(kx_old) if abs(k) < nx / 2]
        iy = [j for j, k in enumerate(ky_old) if abs(k) < ny / 2]
        jx = [int(kx_old[i]) % nx for i in ix]
        jy = [int(ky_old[j]) % ny for j in iy]
        out = np.zeros((nx, ny), dtype=complex)
        out[np.ix_(jx, jy)] = self._coef[np.ix_(ix, iy)]
        return SpectralField(out)

    def transpose(self):
        """Exchange the roles of x and y."""
        return SpectralField(self._coef.T)

    # arithmetic ---------------------------------------------------------

    def _check(self, other):
        if self.shape != other.shape:
            raise GridMismatchError(f"grid {self.shape} vs {other.shape}")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self._coef + other._coef)
        c = self._coef.copy()
        c[0, 0] += other
        return SpectralField(c)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self._coef - other._coef)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return SpectralField(-self._coef)

    def __mul__(self, other):
        if isinstance(other, SpectralField):
            return multiply(self, other)
        return SpectralField(self._coef * float(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self._coef / float(scalar))

    def __repr__(self):
        return f"SpectralField({self.nx}x{self.ny}, band={self.band()})"


def _symbol_k(field, axis):
    """Wavenumber array along ``axis`` broadcast to the field's shape."""
    if axis == 0:
        return wavenumbers(field.nx)[:, None] * np.ones((1, field.ny))
    return np.ones((field.nx, 1)) * wavenumbers(field.ny)[None, :]


def derive(phi, axis, order=1):
    """Spectral derivative: multiply mode k by (i k_axis)**order."""
    ax = _axis_index(axis)
    if order == 0:
        return phi
    if order < 0:
        raise ValueError("use antiderive for negative orders")
    k = _symbol_k(phi, ax)
    return SpectralField(phi.coef * (1j * k) ** order)


def _axis_mean_modes(phi, ax):
    return phi.coef[0, :] if ax == 0 else phi.coef[:, 0]


def antiderive(phi, axis, convention=PAPER_CONSTANT):
    """Nonlocal inverse of d/d(axis) under the given convention.

    Raises :class:`SolvabilityError` when the input has a non-zero mean
    along ``axis`` and the convention does not allow projecting it out.
    """
    ax = _axis_index(axis)
    c = phi.coef.copy()
    zero = _axis_mean_modes(phi, ax)
    mag = np.abs(zero)
    tol = convention.resonance_tolerance * max(1.0, float(np.abs(c).max(initial=0.0)))
    if mag.max(initial=0.0) > tol:
        if not convention.project:
            j = int(np.argmax(mag))
            other = wavenumbers(phi.ny if ax == 0 else phi.nx)[j]
            mode = (0, int(other)) if ax == 0 else (int(other), 0)
            raise SolvabilityError(
                f"d/d{'xy'[ax]}^-1 of a field with non-zero {'xy'[ax]}-mean; "
                f"largest offending mode {mode} with |c| = {mag.max():.3e}",
                mode=mode, magnitude=float(mag.max()))
    if ax == 0:
        c[0, :] = 0.0
    else:
        c[:, 0] = 0.0
    k = _symbol_k(phi, ax)
    nz = k != 0
    out = np.zeros_like(c)
    out[nz] = c[nz] / (1j * k[nz])
    if convention.zero_mode_rule == "paper_constant":
        # value zero at the origin of the axis: subtract the sum over k_axis != 0
        if ax == 0:
            out[0, :] = -out.sum(axis=0)
        else:
            out[:, 0] = -out.sum(axis=1)
    return SpectralField(out)


def lambda_symbol(nx, ny, c):
    kx = wavenumbers(nx)[:, None]
    ky = wavenumbers(ny)[None, :]
    return 1j * (-kx + c * ky)


def lambda_apply(phi, c, power=1):
    """Apply Lambda = -d/dx + c d/dy ``power`` times."""
    return SpectralField(phi.coef * lambda_symbol(phi.nx, phi.ny, c) ** power)


def resonant_modes(phi, c, tol=1e-9):
    """Modes where the Lambda symbol vanishes (up to ``tol``) but ``phi`` does not."""
    sym = np.abs(lambda_symbol(phi.nx, phi.ny, c))
    mag = np.abs(phi.coef)
    scale = max(1.0, float(mag.max(initial=0.0)))
    hit = (sym <= tol) & (mag > tol * scale)
    kx, ky = wavenumbers(phi.nx), wavenumbers(phi.ny)
    return [(int(kx[i]), int(ky[j])) for i, j in zip(*np.nonzero(hit))]


def lambda_invert(phi, c, convention=PAPER_CONSTANT, power=1):
    """Apply Lambda^{-power}; resonant modes must be empty."""
    tol = convention.resonance_tolerance
    bad = resonant_modes(phi, c, tol)
    if bad and not convention.project:
        raise ResonanceError(sorted(bad), c)
    sym = lambda_symbol(phi.nx, phi.ny, c)
    ok = np.abs(sym) > tol
    out = np.zeros_like(phi.coef)
    out[ok] = phi.coef[ok] / sym[ok] ** power
    return SpectralField(out)


def dealias_mask(nx, ny):
    kx = np.abs(wavenumbers(nx))[:, None]
    ky = np.abs(wavenumbers(ny))[None, :]
    return (kx <= dealias_cutoff(nx)) & (ky <= dealias_cutoff(ny))


def from_physical_product(values):
    """Transform physical-space values of a quadratic expression and dealias."""
    v = np.asarray(values)
    c = np.fft.fft2(v, norm="forward")
    c[~dealias_mask(*v.shape)] = 0.0
    return SpectralField(c)


def multiply(phi, psi):
    if phi.shape != psi.shape:
        raise GridMismatchError(f"grid {phi.shape} vs {psi.shape}")
    return from_physical_product(phi.to_grid() * psi.to_grid())


def inner(phi, psi):
    """Integral of phi*psi over the torus, computed from coefficients."""
    if phi.shape != psi.shape:
        raise GridMismatchError(f"grid {phi.shape} vs {psi.shape}")
    return float(AREA * np.vdot(psi.coef, phi.coef).real)


def norm(phi):
    return float(np.sqrt(max(inner(phi, phi), 0.0)))


def integrate(phi):
    return AREA * phi.mean()


def rng(seed, *stream):
    """Counter-based generator keyed by a 64-bit seed and an optional stream path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def random_field(n, seed, band=2, amplitude=1.0, ny=None, stream=(), x_mean_free=False):
    """Deterministic random real field with modes ``|k_x|, |k_y| <= band``.

    The result has zero mean and L2 norm ``amplitude``.  With
    ``x_mean_free`` every ``k_x = 0`` mode is removed as well.
    """
    ny = n if ny is None else ny
    if band >= min(n, ny) // 2:
        raise ValueError(f"band {band} does not fit grid {n}x{ny}")
    g = rng(seed, *stream)
    size = 2 * band + 1
    z = g.standard_normal((size, size)) + 1j * g.standard_normal((size, size))
    c = np.zeros((n, ny), dtype=complex)
    idx_x = [k % n for k in range(-band, band + 1)]
    idx_y = [k % ny for k in range(-band, band + 1)]
    c[np.ix_(idx_x, idx_y)] = z
    c[0, 0] = 0.0
    if x_mean_free:
        c[0, :] = 0.0
    field = SpectralField(c, hermitize=True)
    nrm = norm(field)
    if nrm == 0:
        return field
    return field * (amplitude / nrm)


# snapshot files -------------------------------------------------------


def write_snapshot(path, field, t, name=None):
    """Write a one-line JSON header followed by row-major grid values.

    Row ``i`` holds ``phi(x_i, y_j)`` for ``j = 0..N_y-1``.  Values use the
    shortest repr that round-trips a double.
    """
    header = {"N_x": field.nx, "N_y": field.ny, "t": float(t)}
    if name is not None:
        header["field"] = name
    grid = field.to_grid()
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in grid)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_snapshot(path):
    """Return ``(grid_values, header)`` from a snapshot file."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        rows = [[float(tok) for tok in line.split(",")] for line in fh if line.strip()]
    values = np.array(rows, dtype=float)
    if values.shape != (header["N_x"], header["N_y"]):
        raise ValueError(f"snapshot shape {values.shape} disagrees with header {header}")
    return values, header
