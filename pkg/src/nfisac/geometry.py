"""System geometry: array layouts, distances, near-field region bounds.

Conventions used throughout the package:
  * coordinates are 3-vectors (x, y, z) in meters,
  * the RIS is a UPA in the xoz-plane centered at ``ris_center``, element
    (n_x, n_z) sits at ``ris_center + (n_x*d, 0, n_z*d)`` with
    n_x in {-(Nx-1)/2, ..., (Nx-1)/2} and likewise for n_z,
  * elements are enumerated with n_x as the outer index and n_z as the
    inner index, matching the Kronecker order of the array response,
  * the BS is a ULA laid along the z-axis centered at ``bs_center``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigurationError, GeometryError

C_LIGHT = 3.0e8


@dataclass(frozen=True)
class SystemConfig:
    """Static array / carrier parameters.

    Path-loss exponents default to the urban-micro style values used by the
    rest of the package: RIS-CU 2.5, BS-RIS 2.2, BS-CU 3.5, RIS-TGT 2.5.
    """

    M: int = 9
    Nx: int = 21
    Nz: int = 21
    fc: float = 28e9
    alpha_ris_cu: float = 2.5
    alpha_bs_ris: float = 2.2
    alpha_bs_cu: float = 3.5
    alpha_ris_tgt: float = 2.5

    def __post_init__(self):
        if self.M < 1:
            raise ConfigurationError(f"M must be >= 1, got {self.M}")
        for name, n in (("Nx", self.Nx), ("Nz", self.Nz)):
            if n < 1 or n % 2 == 0:
                raise ConfigurationError(
                    f"{name} must be odd and positive so the RIS has a "
                    f"central element, got {n}"
                )
        if self.fc <= 0:
            raise ConfigurationError(f"fc must be positive, got {self.fc}")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.fc

    @property
    def spacing(self) -> float:
        """Element / antenna spacing, half a wavelength."""
        return self.wavelength / 2.0

    @property
    def rho0(self) -> float:
        """Path-loss coefficient at the 1 m reference distance."""
        return self.wavelength / (4.0 * math.pi)

    @property
    def n_elements(self) -> int:
        return self.Nx * self.Nz


@dataclass(frozen=True)
class Placement:
    """Positions of every node in the scene, all shapes in meters.

    cu_positions is (K, 3); tgt_positions is (L, 3).  L = 0 is allowed.
    """

    bs_center: np.ndarray
    ris_center: np.ndarray
    cu_positions: np.ndarray
    tgt_positions: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 3))
    )

    def __post_init__(self):
        object.__setattr__(self, "bs_center", np.asarray(self.bs_center, dtype=float))
        object.__setattr__(self, "ris_center", np.asarray(self.ris_center, dtype=float))
        cu = np.atleast_2d(np.asarray(self.cu_positions, dtype=float))
        tgt = np.asarray(self.tgt_positions, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "cu_positions", cu)
        object.__setattr__(self, "tgt_positions", tgt)
        if self.bs_center.shape != (3,) or self.ris_center.shape != (3,):
            raise ConfigurationError("bs_center and ris_center must be 3-vectors")
        if cu.shape[1] != 3:
            raise ConfigurationError("cu_positions must have shape (K, 3)")

    @property
    def K(self) -> int:
        return self.cu_positions.shape[0]

    @property
    def L(self) -> int:
        return self.tgt_positions.shape[0]


def bs_antenna_coordinates(cfg: SystemConfig, center: np.ndarray) -> np.ndarray:
    """ULA antenna positions, (M, 3).  Antennas run along z, centered."""
    center = np.asarray(center, dtype=float)
    offsets = (np.arange(cfg.M) - (cfg.M - 1) / 2.0) * cfg.spacing
    coords = np.tile(center, (cfg.M, 1))
    coords[:, 2] += offsets
    return coords


def ris_element_coordinates(cfg: SystemConfig, center: np.ndarray) -> np.ndarray:
    """UPA element positions, (Nx*Nz, 3), n_x outer / n_z inner order."""
    center = np.asarray(center, dtype=float)
    half_x = (cfg.Nx - 1) // 2
    half_z = (cfg.Nz - 1) // 2
    nx = np.arange(-half_x, half_x + 1)
    nz = np.arange(-half_z, half_z + 1)
    gx, gz = np.meshgrid(nx, nz, indexing="ij")
    coords = np.tile(center, (cfg.n_elements, 1))
    coords[:, 0] += gx.ravel() * cfg.spacing
    coords[:, 2] += gz.ravel() * cfg.spacing
    return coords


def ris_element_indices(cfg: SystemConfig) -> np.ndarray:
    """Signed (n_x, n_z) index pairs, (Nx*Nz, 2), same order as coordinates."""
    half_x = (cfg.Nx - 1) // 2
    half_z = (cfg.Nz - 1) // 2
    nx = np.arange(-half_x, half_x + 1)
    nz = np.arange(-half_z, half_z + 1)
    gx, gz = np.meshgrid(nx, nz, indexing="ij")
    return np.stack([gx.ravel(), gz.ravel()], axis=1)


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance table between two point sets, (len(a), len(b)).

    Raises GeometryError when any pair coincides, since every use of this
    table feeds a 1/r or r**(-alpha) expression.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    diff = a[:, None, :] - b[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    if np.any(dist < 1e-12):
        raise GeometryError("coincident points in distance computation")
    return dist


@dataclass(frozen=True)
class NearFieldBounds:
    """Fresnel-region bookkeeping for the RIS aperture.

    ``r_h`` entries are harmonic means of the BS-RIS and RIS-node center
    distances; a node counts as in-region when
    1.2 * aperture < r_h < rayleigh.
    """

    aperture: float
    fresnel_lower: float
    rayleigh: float
    r_h_cu: np.ndarray
    r_h_tgt: np.ndarray
    cu_in_region: np.ndarray
    tgt_in_region: np.ndarray


def near_field_bounds(cfg: SystemConfig, placement: Placement) -> NearFieldBounds:
    """Aperture, Rayleigh distance and per-node harmonic-mean distances."""
    d = cfg.spacing
    aperture = math.sqrt((cfg.Nx * d) ** 2 + (cfg.Nz * d) ** 2)
    rayleigh = 2.0 * aperture**2 / cfg.wavelength
    lower = 1.2 * aperture

    r_bs = float(np.linalg.norm(placement.bs_center - placement.ris_center))
    if r_bs < 1e-12:
        raise GeometryError("BS and RIS centers coincide")

    def harmonic(points: np.ndarray) -> np.ndarray:
        if points.size == 0:
            return np.zeros(0)
        r = np.linalg.norm(points - placement.ris_center[None, :], axis=1)
        if np.any(r < 1e-12):
            raise GeometryError("node placed on the RIS center")
        return 2.0 * r_bs * r / (r_bs + r)

    r_h_cu = harmonic(placement.cu_positions)
    r_h_tgt = harmonic(placement.tgt_positions)
    return NearFieldBounds(
        aperture=aperture,
        fresnel_lower=lower,
        rayleigh=rayleigh,
        r_h_cu=r_h_cu,
        r_h_tgt=r_h_tgt,
        cu_in_region=(r_h_cu > lower) & (r_h_cu < rayleigh),
        tgt_in_region=(r_h_tgt > lower) & (r_h_tgt < rayleigh),
    )
