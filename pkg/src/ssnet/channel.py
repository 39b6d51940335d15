"""Fluid-antenna-system channel generation and metrics.

A planar antenna surface exposes N_x * N_y selectable ports. Port (i, j)
sits at (i*d_x, j*d_y) with d_x = W_x/(N_x-1), d_y = W_y/(N_y-1), and is
flattened to index p = i*N_y + j everywhere in this package.

Two spatial correlation models are supported, both functions of the
inter-port distance d and the carrier wavelength:

  clarke: sinc(2 d / lambda)        (isotropic scattering)
  bessel: J0(2 pi d / lambda)       (directive scattering)

Channels are correlated complex Gaussians drawn through the symmetric
eigendecomposition of the correlation matrix, stored as real matrices of
shape (N_S, 2M) with per-antenna (Re, Im) column pairs interleaved:
column 2m holds Re of BS antenna m, column 2m+1 its Im part.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataIOError, GeometryError, MetricError
from .numerics.rng import RngStream

__all__ = [
    "PortGrid",
    "ChannelFactors",
    "ChannelSample",
    "Dataset",
    "DatasetHeader",
    "CORRELATION_MODELS",
    "port_positions",
    "bessel_j0",
    "correlation_matrix",
    "factorize",
    "sample_channel",
    "add_awgn",
    "nmse",
    "to_complex",
    "from_complex",
    "generate_dataset",
    "write_dataset",
    "read_dataset",
]

CORRELATION_MODELS = ("clarke", "bessel")


@dataclass(frozen=True)
class PortGrid:
    """FAS geometry: port counts, aperture extents (m), wavelength (m)."""

    n_x: int
    n_y: int
    w_x: float
    w_y: float
    wavelength: float

    def __post_init__(self):
        if self.n_x < 2 or self.n_y < 2:
            raise GeometryError(f"need at least 2 ports per axis, got {self.n_x}x{self.n_y}")
        if min(self.w_x, self.w_y, self.wavelength) <= 0:
            raise GeometryError("aperture extents and wavelength must be positive")

    @property
    def d_x(self) -> float:
        return self.w_x / (self.n_x - 1)

    @property
    def d_y(self) -> float:
        return self.w_y / (self.n_y - 1)

    @property
    def n_ports(self) -> int:
        return self.n_x * self.n_y

    def port_coords(self, p: int) -> tuple[int, int]:
        return p // self.n_y, p % self.n_y

    @property
    def tag(self) -> str:
        return (
            f"{self.n_x}x{self.n_y}@"
            f"{self.w_x * 100:g}x{self.w_y * 100:g}cm"
        )


def port_positions(grid: PortGrid) -> np.ndarray:
    """(N_S, 2) metric positions in flattened port order p = i*n_y + j."""
    i = np.arange(grid.n_x)
    j = np.arange(grid.n_y)
    xx, yy = np.meshgrid(i * grid.d_x, j * grid.d_y, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


# J0 power series in z = x^2/4: sum_m (-1)^m z^m / (m!)^2. 40 terms keep the
# truncation error far below roundoff for |x| <= 12.
_J0_SERIES = np.array([(-1.0) ** m / (math.factorial(m) ** 2) for m in range(41)])

# Hankel expansion magnitudes a_m = prod_{j<=m} (2j-1)^2 / (m! 8^m); the
# P/Q correction polynomials alternate signs over these.
_HANKEL_A = [1.0]
for _m in range(1, 12):
    _HANKEL_A.append(_HANKEL_A[-1] * (2 * _m - 1) ** 2 / (_m * 8.0))


def bessel_j0(x) -> np.ndarray | float:
    """Zero-order Bessel function of the first kind, |error| < 1e-8 for |x| <= 500.

    Power series below |x| = 12 (the series is exact there at double
    precision), Hankel asymptotic expansion with five P/Q correction
    terms beyond; the crossover sits where both branches agree to ~1e-9.
    """
    x_arr = np.asarray(x, dtype=np.float64)
    ax = np.abs(x_arr)
    small = ax <= 12.0

    out = np.empty_like(ax)
    if np.any(small):
        z = ax[small] ** 2 / 4.0
        acc = np.full_like(z, _J0_SERIES[-1])
        for c in _J0_SERIES[-2::-1]:
            acc = acc * z + c
        out[small] = acc
    if np.any(~small):
        xa = ax[~small]
        inv2 = 1.0 / (xa * xa)
        p = np.zeros_like(xa)
        q = np.zeros_like(xa)
        for k in range(5, -1, -1):
            p = p * inv2 + (-1.0) ** k * _HANKEL_A[2 * k]
            if 2 * k + 1 < len(_HANKEL_A):
                q = q * inv2 + (-1.0) ** (k + 1) * _HANKEL_A[2 * k + 1]
        q = q / xa
        phase = xa - math.pi / 4.0
        out[~small] = np.sqrt(2.0 / (math.pi * xa)) * (
            p * np.cos(phase) - q * np.sin(phase)
        )
    return out if out.ndim else float(out)


def correlation_matrix(grid: PortGrid, model: str) -> np.ndarray:
    """Symmetric unit-diagonal spatial correlation for all port pairs."""
    if model not in CORRELATION_MODELS:
        raise ValueError(f"unknown correlation model {model!r}")
    pos = port_positions(grid)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    if model == "clarke":
        sigma = np.sinc(2.0 * dist / grid.wavelength)
    else:
        sigma = np.asarray(bessel_j0(2.0 * math.pi * dist / grid.wavelength))
    # enforce exact symmetry against floating-point asymmetry in dist
    sigma = 0.5 * (sigma + sigma.T)
    np.fill_diagonal(sigma, 1.0)
    return sigma


@dataclass
class ChannelFactors:
    """Eigendecomposition of a correlation matrix, ready for sampling."""

    sigma: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    sqrt_eigvals: np.ndarray
    delta2: float


def factorize(sigma: np.ndarray, delta2: float = 1.0) -> ChannelFactors:
    """Symmetric eigendecomposition with tiny-negative eigenvalue clamping."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"correlation matrix must be square, got {sigma.shape}")
    if np.max(np.abs(sigma - sigma.T)) > 1e-9:
        raise ValueError("correlation matrix is not symmetric")
    if delta2 < 0:
        raise ValueError("path loss delta2 must be non-negative")
    eigvals, eigvecs = np.linalg.eigh(sigma)
    clamped = np.where(eigvals < 1e-12 * np.max(eigvals), 0.0, eigvals)
    return ChannelFactors(
        sigma=sigma,
        eigvecs=eigvecs,
        eigvals=eigvals,
        sqrt_eigvals=np.sqrt(clamped),
        delta2=float(delta2),
    )


@dataclass
class ChannelSample:
    """One CSI realization over all ports, real (N_S, 2M) layout."""

    data: np.ndarray
    grid: PortGrid
    model: str
    noise_var: float = 0.0  # complex noise variance added by add_awgn

    @property
    def m_antennas(self) -> int:
        return self.data.shape[1] // 2


def to_complex(data: np.ndarray) -> np.ndarray:
    """(.., N_S, 2M) real interleaved -> (.., N_S, M) complex."""
    return data[..., 0::2] + 1j * data[..., 1::2]


def from_complex(g: np.ndarray) -> np.ndarray:
    """(.., N_S, M) complex -> (.., N_S, 2M) real interleaved."""
    out = np.empty(g.shape[:-1] + (2 * g.shape[-1],), dtype=np.float64)
    out[..., 0::2] = g.real
    out[..., 1::2] = g.imag
    return out


def sample_channel(
    factors: ChannelFactors, m_antennas: int, rng: RngStream, grid: PortGrid = None, model: str = ""
) -> ChannelSample:
    """Draw one correlated Rayleigh realization across m_antennas columns.

    Each BS antenna sees an independent realization: g = sqrt(delta2) *
    U diag(sqrt(eigvals)) G with G i.i.d. complex Gaussian, each real
    and imaginary part N(0, 1/2) (unit-variance complex entries).
    """
    if m_antennas < 1:
        raise ValueError("need at least one BS antenna")
    n = factors.sigma.shape[0]
    re = rng.normal((n, m_antennas))
    im = rng.normal((n, m_antennas))
    g_white = (re + 1j * im) * math.sqrt(0.5)
    g = math.sqrt(factors.delta2) * (factors.eigvecs @ (factors.sqrt_eigvals[:, None] * g_white))
    return ChannelSample(data=from_complex(g), grid=grid, model=model)


def add_awgn(sample: ChannelSample, snr_db: float | None, rng: RngStream) -> ChannelSample:
    """Noisy copy at the given SNR; None means no noise (input returned).

    The noise variance is referenced to this sample's own mean per-entry
    complex power: sigma2 = P_sig / 10^(SNR/10), split N(0, sigma2/2)
    over each real component.
    """
    if snr_db is None:
        return sample
    p_sig = 2.0 * float(np.mean(sample.data**2))
    sigma2 = p_sig / (10.0 ** (snr_db / 10.0))
    noise = rng.normal(sample.data.shape) * math.sqrt(sigma2 / 2.0)
    return ChannelSample(
        data=sample.data + noise,
        grid=sample.grid,
        model=sample.model,
        noise_var=sigma2,
    )


def nmse(pred: np.ndarray, truth: np.ndarray, eval_ports) -> tuple[float, float]:
    """(linear, dB) squared error over eval_ports normalized by target energy.

    Returns dB = -inf when the prediction is exact. Test-set averaging
    must happen in the linear domain before any dB conversion.
    """
    eval_ports = np.asarray(eval_ports, dtype=np.intp)
    if eval_ports.size == 0:
        raise MetricError("eval_ports is empty")
    err = pred[eval_ports] - truth[eval_ports]
    energy = float(np.sum(truth[eval_ports] ** 2))
    if energy <= 0.0:
        raise MetricError("target energy over eval_ports is zero")
    linear = float(np.sum(err**2)) / energy
    db = 10.0 * math.log10(linear) if linear > 0.0 else float("-inf")
    return linear, db


# ---------------------------------------------------------------------------
# Dataset container
# ---------------------------------------------------------------------------

_DATASET_MAGIC = b"FASC"
_DATASET_VERSION = 1
_HEADER_KEYS = (
    "nx",
    "ny",
    "wx_m",
    "wy_m",
    "lambda_m",
    "model",
    "m_antennas",
    "delta2",
    "count",
    "dtype",
    "seed",
)


@dataclass
class DatasetHeader:
    grid: PortGrid
    model: str
    m_antennas: int
    delta2: float
    count: int
    dtype: str  # "f32" | "f64"
    seed: int


@dataclass
class Dataset:
    header: DatasetHeader
    samples: np.ndarray = field(repr=False)  # (count, N_S, 2M), stored dtype

    def sample(self, i: int) -> ChannelSample:
        return ChannelSample(
            data=np.asarray(self.samples[i], dtype=np.float64),
            grid=self.header.grid,
            model=self.header.model,
        )


def _header_text(h: DatasetHeader) -> str:
    values = {
        "nx": h.grid.n_x,
        "ny": h.grid.n_y,
        "wx_m": repr(h.grid.w_x),
        "wy_m": repr(h.grid.w_y),
        "lambda_m": repr(h.grid.wavelength),
        "model": h.model,
        "m_antennas": h.m_antennas,
        "delta2": repr(h.delta2),
        "count": h.count,
        "dtype": h.dtype,
        "seed": h.seed,
    }
    return "".join(f"{k}={values[k]}\n" for k in _HEADER_KEYS)


def _parse_header(text: str, path: str) -> DatasetHeader:
    fields = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataIOError(f"{path}: malformed header line {line!r}")
        fields[key] = value
    missing = set(_HEADER_KEYS) - set(fields)
    unknown = set(fields) - set(_HEADER_KEYS)
    if missing or unknown:
        raise DataIOError(f"{path}: bad header keys (missing={missing}, unknown={unknown})")
    if fields["model"] not in CORRELATION_MODELS:
        raise DataIOError(f"{path}: unknown model {fields['model']!r}")
    if fields["dtype"] not in ("f32", "f64"):
        raise DataIOError(f"{path}: unknown dtype {fields['dtype']!r}")
    grid = PortGrid(
        n_x=int(fields["nx"]),
        n_y=int(fields["ny"]),
        w_x=float(fields["wx_m"]),
        w_y=float(fields["wy_m"]),
        wavelength=float(fields["lambda_m"]),
    )
    return DatasetHeader(
        grid=grid,
        model=fields["model"],
        m_antennas=int(fields["m_antennas"]),
        delta2=float(fields["delta2"]),
        count=int(fields["count"]),
        dtype=fields["dtype"],
        seed=int(fields["seed"]),
    )


def write_dataset(path: str, dataset: Dataset) -> None:
    h = dataset.header
    np_dtype = "<f4" if h.dtype == "f32" else "<f8"
    header_bytes = _header_text(h).encode("utf-8")
    try:
        with open(path, "wb") as f:
            f.write(_DATASET_MAGIC)
            f.write(_DATASET_VERSION.to_bytes(2, "little"))
            f.write(len(header_bytes).to_bytes(4, "little"))
            f.write(header_bytes)
            f.write(np.ascontiguousarray(dataset.samples, dtype=np_dtype).tobytes())
    except OSError as e:
        raise DataIOError(f"cannot write dataset {path}: {e}") from e


def read_dataset(path: str) -> Dataset:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise DataIOError(f"cannot read dataset {path}: {e}") from e
    buf = io.BytesIO(raw)
    if buf.read(4) != _DATASET_MAGIC:
        raise DataIOError(f"{path}: not a dataset file (bad magic)")
    version = int.from_bytes(buf.read(2), "little")
    if version != _DATASET_VERSION:
        raise DataIOError(f"{path}: unsupported dataset version {version}")
    header_len = int.from_bytes(buf.read(4), "little")
    header = _parse_header(buf.read(header_len).decode("utf-8"), path)
    np_dtype = "<f4" if header.dtype == "f32" else "<f8"
    n_values = header.count * header.grid.n_ports * 2 * header.m_antennas
    payload = buf.read()
    expected = n_values * np.dtype(np_dtype).itemsize
    if len(payload) != expected:
        raise DataIOError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype=np_dtype).reshape(
        header.count, header.grid.n_ports, 2 * header.m_antennas
    )
    return Dataset(header=header, samples=samples)


def generate_dataset(
    grid: PortGrid,
    model: str,
    m_antennas: int,
    delta2: float,
    count: int,
    seed: int,
    path: str | None = None,
) -> Dataset:
    """Noise-free channel dataset, deterministic in `seed`.

    Sample i draws from the derived stream (seed, "dataset/i"), so
    generation order (or parallelism) cannot change the contents.
    """
    if count < 1:
        raise ValueError("dataset count must be >= 1")
    factors = factorize(correlation_matrix(grid, model), delta2)
    root = RngStream(seed, "dataset")
    out = np.empty((count, grid.n_ports, 2 * m_antennas), dtype=np.float32)
    for i in range(count):
        s = sample_channel(factors, m_antennas, root.derive(i), grid=grid, model=model)
        out[i] = s.data.astype(np.float32)
    dataset = Dataset(
        header=DatasetHeader(
            grid=grid,
            model=model,
            m_antennas=m_antennas,
            delta2=delta2,
            count=count,
            dtype="f32",
            seed=seed,
        ),
        samples=out,
    )
    if path is not None:
        write_dataset(path, dataset)
    return dataset
