"""Grids, scalar fields and the FSF1 field file format.

The whole space is replaced by the periodic box [-L, L)^N sampled on M points per
axis. Grid coordinates are x_j = (j - M/2) h, so the origin is a grid point and the
coordinates are exactly antisymmetric around it.

Fourier convention (unitary, angular frequency):

    Fu(xi) = (2 pi)^(-N/2) * integral exp(-i xi.x) u(x) dx

sampled on the lattice xi_k = (pi / L) k. Coefficients are stored in FFT order; the
frequencies of `BoxGrid.frequencies` follow the same order. With this convention the
discrete Parseval identity reads

    h^N * sum |u|^2 = (pi / L)^N * sum |Fu(xi_k)|^2.
"""
import dataclasses
import logging
import os
import struct
import warnings

import numpy as np
import scipy.fft
import scipy.ndimage

FSF1_MAGIC = b"FSF1"
FSF1_VERSION = 1
# magic, version, N, reserved, L, M, s
FSF1_HEADER = struct.Struct("<4sBBHdId")
MIN_POINTS = 8
SUPPORTED_DIMENSIONS = (1, 2, 3)
DILATION_CLIP = (0.5, 2.0)
BOUNDARY_TOLERANCE = 1e-6
THREADS_ENV = "FRACGROUND_THREADS"

_logger = logging.getLogger(__name__)


def thread_cap():
    """Worker count for transforms and quadratures, from FRACGROUND_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError as error:
        raise ValueError(f"{THREADS_ENV}={raw!r} is not an integer") from error
    if workers < 1:
        raise ValueError(f"{THREADS_ENV}={workers} must be at least 1")
    return workers


class FieldFormatError(ValueError):
    """The file is not a readable FSF1 field."""


class BadMagicError(FieldFormatError):
    """The file does not start with the FSF1 magic bytes."""


class VersionMismatchError(FieldFormatError):
    """The file declares an FSF1 version this library does not read."""


class TruncatedFieldError(FieldFormatError):
    """The payload holds fewer values than the header declares."""


class DilationWarning(UserWarning):
    """A field was dilated while carrying mass on the box boundary."""


@dataclasses.dataclass(frozen=True)
class ProblemParams:
    """Parameters of (-Delta)^s u + u = |u|^(p-1) u in dimension N."""

    N: int
    s: float
    p: float

    def __post_init__(self):
        if self.N not in SUPPORTED_DIMENSIONS:
            raise ValueError(f"dimension N={self.N} is not one of {SUPPORTED_DIMENSIONS}")
        if not 0 < self.s < 1:
            raise ValueError(f"fractional order s={self.s} is outside (0, 1)")
        if not self.p > 1:
            raise ValueError(f"exponent p={self.p} must be greater than 1")

    @property
    def p_crit(self):
        """(N + 2s) / (N - 2s) when N > 2s, else infinity."""
        if self.N > 2 * self.s:
            return (self.N + 2 * self.s) / (self.N - 2 * self.s)
        return np.inf

    @property
    def two_star_s(self):
        """Critical Sobolev exponent 2N / (N - 2s) when N > 2s, else infinity."""
        if self.N > 2 * self.s:
            return 2 * self.N / (self.N - 2 * self.s)
        return np.inf

    @property
    def subcritical(self):
        return self.p < self.p_crit


@dataclasses.dataclass(frozen=True)
class BoxGrid:
    """Uniform periodic grid on [-L, L)^N with M points per axis."""

    N: int
    M: int
    L: float

    def __post_init__(self):
        if self.N not in SUPPORTED_DIMENSIONS:
            raise ValueError(f"dimension N={self.N} is not one of {SUPPORTED_DIMENSIONS}")
        if int(self.M) != self.M or self.M < MIN_POINTS:
            raise ValueError(f"M={self.M} is below the minimum of {MIN_POINTS} points per axis")
        if self.M & (self.M - 1):
            raise ValueError(f"M={self.M} is not a power of two")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"half-width L={self.L} must be positive and finite")

    @property
    def h(self):
        return 2 * self.L / self.M

    @property
    def cell_volume(self):
        return self.h**self.N

    @property
    def shape(self):
        return (self.M,) * self.N

    @property
    def size(self):
        return self.M**self.N

    @property
    def frequency_spacing(self):
        """Spacing pi / L of the frequency lattice."""
        return np.pi / self.L

    def axis(self):
        """Coordinates of one axis, from -L to L - h."""
        return (np.arange(self.M) - self.M // 2) * self.h

    def coordinates(self):
        """Coordinate arrays, one per axis, each of shape `shape`."""
        return np.meshgrid(*([self.axis()] * self.N), indexing="ij")

    def radius_squared(self):
        return sum(x**2 for x in self.coordinates())

    def lattice_indices(self):
        """Integer lattice k of one axis in FFT order."""
        return np.rint(scipy.fft.fftfreq(self.M) * self.M).astype(int)

    def frequencies(self):
        """Frequency arrays xi, one per axis, in FFT order."""
        xi = self.lattice_indices() * self.frequency_spacing
        return np.meshgrid(*([xi] * self.N), indexing="ij")

    def frequency_norm(self):
        """|xi| on the frequency lattice, in FFT order."""
        return np.sqrt(sum(xi**2 for xi in self.frequencies()))


@dataclasses.dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a field on a `BoxGrid`, row-major with the last axis fastest."""

    grid: BoxGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values):
        """Return a field on the same grid holding `values`."""
        return ScalarField(grid=self.grid, values=values)


@dataclasses.dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients Fu(xi_k) on the lattice of `grid`, in FFT order."""

    grid: BoxGrid
    coeffs: np.ndarray


def make_grid(N, M, L):
    """Build the periodic box grid.

    Parameters
    ----------
    N : int
        Dimension, 1 to 3.
    M : int
        Points per axis, a power of two no smaller than 8.
    L : float
        Half-width of the box [-L, L)^N.

    Returns
    -------
    BoxGrid
    """
    return BoxGrid(N=int(N), M=int(M), L=float(L))


def zeros(grid):
    return ScalarField(grid=grid, values=np.zeros(grid.shape))


def from_function(grid, func):
    """Sample `func(*coordinates)` on the grid."""
    return ScalarField(grid=grid, values=func(*grid.coordinates()))


def gaussian(grid, width=1.0, center=None, amplitude=1.0):
    """Sample amplitude * exp(-|x - center|^2 / (2 width^2))."""
    center = np.zeros(grid.N) if center is None else np.asarray(center, dtype=float)
    r2 = sum((x - c) ** 2 for x, c in zip(grid.coordinates(), center))
    return ScalarField(grid=grid, values=amplitude * np.exp(-r2 / (2 * width**2)))


def random_smooth_field(grid, rng, n_bumps=None, signed=True):
    """Draw a smooth decayed field as a sum of separated Gaussian bumps.

    Parameters
    ----------
    grid : BoxGrid
    rng : np.random.Generator
    n_bumps : int, optional
        Number of bumps; drawn from 2 to 4 when omitted.
    signed : bool
        Give every bump a random sign.

    Returns
    -------
    ScalarField
    """
    n_bumps = int(rng.integers(2, 5)) if n_bumps is None else n_bumps
    w_min = 3 * grid.h
    w_max = w_min + 0.05 * grid.L
    reach = 0.45 * grid.L
    separation = 3 * w_max

    centers = []
    attempts = 0
    while len(centers) < n_bumps and attempts < 1000:
        candidate = rng.uniform(-reach, reach, size=grid.N)
        if all(np.linalg.norm(candidate - c) >= separation for c in centers):
            centers.append(candidate)
        attempts += 1

    values = np.zeros(grid.shape)
    for center in centers:
        amplitude = rng.uniform(0.5, 1.5)
        if signed and rng.random() < 0.5:
            amplitude = -amplitude
        width = rng.uniform(w_min, w_max)
        values += gaussian(grid, width=width, center=center, amplitude=amplitude).values
    return ScalarField(grid=grid, values=values)


def integrate(f):
    """Rectangle rule on the periodic box: cell_volume * sum(values)."""
    return float(f.grid.cell_volume * np.sum(f.values))


def _phase(grid):
    # exp(i xi_k L) = (-1)^k for the box offset x_0 = -L
    k = grid.lattice_indices()
    return np.prod(np.meshgrid(*([(-1.0) ** k] * grid.N), indexing="ij"), axis=0)


def _transform_scale(grid):
    return grid.cell_volume / (2 * np.pi) ** (grid.N / 2)


def forward_transform(f):
    """Discrete surrogate of the unitary Fourier transform.

    Parameters
    ----------
    f : ScalarField

    Returns
    -------
    SpectralField
        Coefficients approximating Fu(xi_k), in FFT order.
    """
    coeffs = scipy.fft.fftn(f.values, workers=thread_cap())
    return SpectralField(grid=f.grid, coeffs=coeffs * _phase(f.grid) * _transform_scale(f.grid))


def inverse_transform(F):
    """Inverse of `forward_transform`; the imaginary round-off is dropped.

    Parameters
    ----------
    F : SpectralField

    Returns
    -------
    ScalarField
    """
    raw = F.coeffs * _phase(F.grid) / _transform_scale(F.grid)
    values = scipy.fft.ifftn(raw, workers=thread_cap())
    return ScalarField(grid=F.grid, values=values.real)


def boundary_ratio(f):
    """Max |f| on the outermost grid shell relative to max |f| (0 for a zero field)."""
    magnitude = np.abs(f.values)
    peak = magnitude.max()
    if peak == 0:
        return 0.0
    shell = np.zeros(f.grid.shape, dtype=bool)
    for axis in range(f.grid.N):
        index = [slice(None)] * f.grid.N
        index[axis] = [0, f.grid.M - 1]
        shell[tuple(index)] = True
    return float(magnitude[shell].max() / peak)


def resample_dilate(f, sigma, warn=True):
    """Compute x -> f(x / sigma) by multilinear interpolation on the grid.

    Points that land outside the box read the nearest boundary value, so the field
    has to be decayed there; a `DilationWarning` is issued otherwise unless `warn` is
    off, in which case the caller reports the boundary ratio itself.

    Parameters
    ----------
    f : ScalarField
    sigma : float
        Dilation factor in [0.5, 2]; larger changes go through `staged_dilate`.
    warn : bool

    Returns
    -------
    ScalarField
    """
    if not DILATION_CLIP[0] <= sigma <= DILATION_CLIP[1]:
        raise ValueError(f"sigma={sigma} is outside the per-call clip {DILATION_CLIP}")
    ratio = boundary_ratio(f) if warn else 0.0
    if ratio > BOUNDARY_TOLERANCE:
        _logger.debug("Dilating a field with boundary ratio %.3e", ratio)
        warnings.warn(
            f"dilating a field with boundary ratio {ratio:.3e} > {BOUNDARY_TOLERANCE}",
            DilationWarning,
            stacklevel=2,
        )
    if sigma == 1:
        return f.with_values(f.values)

    grid = f.grid
    index = np.arange(grid.M) - grid.M / 2
    source = (index / sigma) + grid.M / 2
    coords = np.array(np.meshgrid(*([source] * grid.N), indexing="ij"))
    values = scipy.ndimage.map_coordinates(f.values, coords, order=1, mode="nearest")
    return f.with_values(values)


def staged_dilate(f, sigma, clip=DILATION_CLIP):
    """Compose clipped `resample_dilate` calls into a dilation by `sigma`."""
    if sigma <= 0:
        raise ValueError(f"sigma={sigma} must be positive")
    step_limit = min(np.log(clip[1]), -np.log(clip[0]))
    n_steps = max(1, int(np.ceil(abs(np.log(sigma)) / step_limit - 1e-12)))
    step = sigma ** (1 / n_steps)
    _logger.debug("Dilating by %s in %s steps of %s", sigma, n_steps, step)
    for _ in range(n_steps):
        f = resample_dilate(f, step)
    return f


def relabel_dilate(f, sigma):
    """Compute x -> f(x / sigma) exactly by scaling the box to sigma * L.

    The samples are kept and the grid spacing becomes sigma * h, so the seminorm
    scales by sigma^(N - 2s) and every integral by sigma^N up to rounding.
    """
    if not sigma > 0:
        raise ValueError(f"sigma={sigma} must be positive")
    grid = make_grid(f.grid.N, f.grid.M, sigma * f.grid.L)
    return ScalarField(grid=grid, values=f.values)


def write_field(f, path, s=None):
    """Write `f` as an FSF1 file.

    Parameters
    ----------
    f : ScalarField
    path : str or os.PathLike
    s : float, optional
        Fractional order stored as metadata; NaN when unset.
    """
    header = FSF1_HEADER.pack(
        FSF1_MAGIC,
        FSF1_VERSION,
        f.grid.N,
        0,
        f.grid.L,
        f.grid.M,
        np.nan if s is None else float(s),
    )
    payload = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    with open(path, "wb") as stream:
        stream.write(header + payload)


def read_field(path, with_metadata=False):
    """Read an FSF1 file.

    Parameters
    ----------
    path : str or os.PathLike
    with_metadata : bool
        Also return the header metadata.

    Returns
    -------
    ScalarField | tuple
        The field, or `(field, {"version": int, "s": float | None})`.

    Raises
    ------
    BadMagicError, VersionMismatchError, TruncatedFieldError, FieldFormatError
    """
    with open(path, "rb") as stream:
        data = stream.read()

    if len(data) < len(FSF1_MAGIC) or data[: len(FSF1_MAGIC)] != FSF1_MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:len(FSF1_MAGIC)]!r} (should be {FSF1_MAGIC!r})")
    if len(data) < FSF1_HEADER.size:
        raise TruncatedFieldError(f"{path}: header holds {len(data)} of {FSF1_HEADER.size} bytes")

    _, version, N, reserved, L, M, s = FSF1_HEADER.unpack_from(data)
    if version != FSF1_VERSION:
        raise VersionMismatchError(f"{path}: unsupported FSF1 version {version}")
    if reserved != 0:
        raise FieldFormatError(f"{path}: reserved header bytes are not zero")
    try:
        grid = make_grid(N, M, L)
    except ValueError as error:
        raise FieldFormatError(f"{path}: invalid grid in header: {error}") from error

    payload = data[FSF1_HEADER.size :]
    expected = grid.size * 8
    if len(payload) < expected:
        raise TruncatedFieldError(
            f"{path}: payload holds {len(payload) // 8} of {grid.size} values"
        )
    if len(payload) > expected:
        raise FieldFormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")

    values = np.frombuffer(payload, dtype="<f8").astype(float).reshape(grid.shape)
    field = ScalarField(grid=grid, values=values)
    if with_metadata:
        return field, {"version": version, "s": None if np.isnan(s) else s}
    return field
