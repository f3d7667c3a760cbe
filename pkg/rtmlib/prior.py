"""Whittle-Matérn Gaussian prior on the cell grid and its Karhunen-Loève basis."""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Final, Optional, Union

import numpy as np
import scipy.linalg
import scipy.special

from rtmlib.errors import MalformedDataError, NumericalError, ParameterError
from rtmlib.forward1d import Grid1D, LogPermField

logger = logging.getLogger(__name__)

# Eigenvalues below this fraction of the largest one are set to zero.
EIGENVALUE_CUTOFF: Final = 1e-12


@dataclass(frozen=True)
class MaternParams:
    amplitude: float = 0.5
    smoothness: float = 1.5
    length_scale: float = 0.05
    # Constant prior mean of the field.
    mean: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0.0:
            raise ParameterError(f"amplitude must be > 0, got {self.amplitude}")
        if not self.smoothness > 0.0:
            raise ParameterError(f"smoothness must be > 0, got {self.smoothness}")
        if not self.length_scale > 0.0:
            raise ParameterError(f"length_scale must be > 0, got {self.length_scale}")


def matern_covariance(distance: np.ndarray, params: MaternParams) -> np.ndarray:
    """
    sigma^2 2^(1-nu) / Gamma(nu) (d/l)^nu K_nu(d/l), extended by continuity with
    sigma^2 at d = 0.
    """
    nu = params.smoothness
    ratio = np.abs(np.asarray(distance, dtype=float)) / params.length_scale
    with np.errstate(invalid="ignore", over="ignore"):
        values = (
            params.amplitude
            * 2.0 ** (1.0 - nu)
            / scipy.special.gamma(nu)
            * ratio**nu
            * scipy.special.kv(nu, ratio)
        )
    values = np.where(ratio == 0.0, params.amplitude, values)
    # K_nu underflows far from the diagonal.
    return np.nan_to_num(values, nan=0.0, posinf=0.0)


def build_covariance(grid: Grid1D, params: MaternParams) -> np.ndarray:
    centers = np.asarray(grid.cell_centers)
    covariance = matern_covariance(centers[:, None] - centers[None, :], params)
    return 0.5 * (covariance + covariance.T)


@dataclass(frozen=True, eq=False)
class KLBasis:
    """
    Eigenpairs of the covariance operator, in nonincreasing eigenvalue order.
    Column k of 'eigenvectors' is v_k, orthonormal for the inner product
    <a, b> = sum_s a_s b_s * cell_width.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    cell_width: float = 1.0

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def kl_decompose(covariance: np.ndarray, cell_width: float = 1.0) -> KLBasis:
    covariance = np.asarray(covariance, dtype=float)
    if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
        raise ParameterError(f"expected a square matrix, got {covariance.shape}")
    scale = max(float(np.max(np.abs(covariance))), 1e-300)
    if not np.allclose(covariance, covariance.T, rtol=0.0, atol=1e-10 * scale):
        raise ParameterError("covariance matrix must be symmetric")
    try:
        values, vectors = scipy.linalg.eigh(covariance)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"eigendecomposition failed: {e}") from e
    values = values[::-1] * cell_width
    vectors = vectors[:, ::-1] / np.sqrt(cell_width)
    largest = values[0] if values.size else 0.0
    values = np.where(values < EIGENVALUE_CUTOFF * max(largest, 0.0), 0.0, values)
    return KLBasis(
        eigenvalues=np.ascontiguousarray(values),
        eigenvectors=np.ascontiguousarray(vectors),
        cell_width=cell_width,
    )


def coeffs_to_field(
    basis: KLBasis, mean: LogPermField, coeffs: np.ndarray
) -> LogPermField:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise ParameterError(f"expected {basis.size} coefficients, got {coeffs.shape}")
    if mean.values.shape[0] != basis.size:
        raise ParameterError("mean and basis sizes differ")
    values = mean.values + basis.eigenvectors @ (np.sqrt(basis.eigenvalues) * coeffs)
    return LogPermField(mean.grid, values)


def field_to_coeffs(
    basis: KLBasis, mean: LogPermField, field: LogPermField
) -> np.ndarray:
    projections = (
        basis.eigenvectors.T @ (field.values - mean.values)
    ) * basis.cell_width
    return _scale_projections(basis, projections)


def sample_prior(
    basis: KLBasis, mean: LogPermField, rng: np.random.Generator
) -> tuple[np.ndarray, LogPermField]:
    coeffs = rng.standard_normal(basis.size)
    return coeffs, coeffs_to_field(basis, mean, coeffs)


def _scale_projections(basis: KLBasis, projections: np.ndarray) -> np.ndarray:
    positive = basis.eigenvalues > 0.0
    scale = np.zeros_like(basis.eigenvalues)
    scale[positive] = 1.0 / np.sqrt(basis.eigenvalues[positive])
    return projections * scale


@dataclass(frozen=True, eq=False)
class GaussianPrior:
    """The prior of one grid, with ensemble-sized versions of the KL maps."""

    grid: Grid1D
    params: MaternParams
    basis: KLBasis

    @property
    def mean(self) -> LogPermField:
        return LogPermField.constant(self.grid, self.params.mean)

    @property
    def pointwise_variance(self) -> np.ndarray:
        return (self.basis.eigenvectors**2) @ self.basis.eigenvalues

    def coeffs_to_fields(self, coeffs: np.ndarray) -> np.ndarray:
        """(J, S) coefficients to (J, S) cell values."""
        scaled = np.asarray(coeffs) * np.sqrt(self.basis.eigenvalues)
        return self.params.mean + scaled @ self.basis.eigenvectors.T

    def fields_to_coeffs(self, fields: np.ndarray) -> np.ndarray:
        centered = np.asarray(fields) - self.params.mean
        projections = centered @ self.basis.eigenvectors * self.basis.cell_width
        return _scale_projections(self.basis, projections)

    def sample_coeffs(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.standard_normal((size, self.basis.size))


def build_prior(
    grid: Grid1D,
    params: MaternParams,
    cache_dir: Optional[Union[str, Path]] = None,
) -> GaussianPrior:
    """The basis is read from, or else stored into, 'cache_dir' if given."""
    if cache_dir is None:
        return GaussianPrior(grid, params, _decompose(grid, params))
    path = Path(cache_dir) / basis_cache_name(grid, params)
    if path.exists():
        try:
            basis = load_basis(path, grid.num_cells)
            logger.debug("loaded KL basis from %s", path)
            return GaussianPrior(grid, params, basis)
        except MalformedDataError as e:
            logger.warning("ignoring KL basis cache %s: %s", path, e)
    basis = _decompose(grid, params)
    save_basis(path, basis)
    logger.info("stored KL basis in %s", path)
    return GaussianPrior(grid, params, basis)


def basis_cache_name(grid: Grid1D, params: MaternParams) -> str:
    key = repr(
        (
            grid.num_cells,
            grid.domain_length,
            params.amplitude,
            params.smoothness,
            params.length_scale,
        )
    )
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    return f"kl_basis_S{grid.num_cells}_{digest}.npz"


def save_basis(path: Union[str, Path], basis: KLBasis) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(
            f,
            eigenvalues=basis.eigenvalues,
            eigenvectors=basis.eigenvectors,
            cell_width=np.array(basis.cell_width),
        )


def load_basis(path: Union[str, Path], num_cells: int) -> KLBasis:
    try:
        with np.load(path) as data:
            eigenvalues = np.array(data["eigenvalues"])
            eigenvectors = np.array(data["eigenvectors"])
            cell_width = float(data["cell_width"])
    except (OSError, KeyError, ValueError) as e:
        raise MalformedDataError(f"{path}: {e}") from e
    if eigenvalues.shape != (num_cells,) or eigenvectors.shape != (
        num_cells,
        num_cells,
    ):
        raise MalformedDataError(f"{path}: basis does not have {num_cells} modes")
    return KLBasis(eigenvalues, eigenvectors, cell_width)


def _decompose(grid: Grid1D, params: MaternParams) -> KLBasis:
    return kl_decompose(build_covariance(grid, params), grid.cell_width)
