"""Near-field channel synthesis for the BS / XL-RIS / CU / target scene.

The RIS response uses the Fresnel (second-order) expansion of the spherical
wavefront, separable across the x and z axes of the aperture:

    [a_x]_{n_x} = exp(-j 2pi/lam (-n_x d cos(psi) sin(phi)
                                  + n_x^2 d^2 (1 - cos^2(psi) sin^2(phi)) / (2 r)))
    [a_z]_{n_z} = exp(-j 2pi/lam (-n_z d cos(phi) + n_z^2 d^2 sin^2(phi) / (2 r)))

and the full response is kron(a_x, a_z), unit phase at the central element.
BS-side links use exact per-antenna spherical distances instead, the BS
aperture being small.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import GeometryError
from .geometry import (
    Placement,
    SystemConfig,
    bs_antenna_coordinates,
    pairwise_distances,
    ris_element_coordinates,
)


def direction_angles(vec: np.ndarray) -> tuple[float, float, float]:
    """Azimuth, elevation and range of a displacement vector.

    Azimuth psi is measured in the xoy-plane from the x-axis, elevation phi
    from the z-axis, so the unit direction is
    (cos(psi) sin(phi), sin(psi) sin(phi), cos(phi)).
    """
    vec = np.asarray(vec, dtype=float)
    r = float(np.linalg.norm(vec))
    if r < 1e-12:
        raise GeometryError("zero-length direction vector")
    phi = math.acos(np.clip(vec[2] / r, -1.0, 1.0))
    psi = math.atan2(vec[1], vec[0])
    return psi, phi, r


def ris_array_response(cfg: SystemConfig, psi: float, phi: float, r: float) -> np.ndarray:
    """Fresnel-region RIS response, (Nx*Nz,) complex, n_x outer order."""
    if r <= 0:
        raise GeometryError(f"range must be positive, got {r}")
    d = cfg.spacing
    lam = cfg.wavelength
    u_x = math.cos(psi) * math.sin(phi)
    u_z = math.cos(phi)

    half_x = (cfg.Nx - 1) // 2
    half_z = (cfg.Nz - 1) // 2
    nx = np.arange(-half_x, half_x + 1, dtype=float)
    nz = np.arange(-half_z, half_z + 1, dtype=float)

    phase_x = -nx * d * u_x + (nx * d) ** 2 * (1.0 - u_x**2) / (2.0 * r)
    phase_z = -nz * d * u_z + (nz * d) ** 2 * (1.0 - u_z**2) / (2.0 * r)
    ax = np.exp(-1j * 2.0 * math.pi / lam * phase_x)
    az = np.exp(-1j * 2.0 * math.pi / lam * phase_z)
    return np.kron(ax, az)


@dataclass(frozen=True)
class ChannelSet:
    """All links of one scenario.

    G:          (N, M)  BS to RIS
    h_ris_cu:   (K, N)  RIS to each CU
    h_bs_cu:    (K, M)  direct BS to each CU
    h_ris_tgt:  (L, N)  RIS to each target
    noise_var:  (K,)    per-CU noise power in watts
    """

    G: np.ndarray
    h_ris_cu: np.ndarray
    h_bs_cu: np.ndarray
    h_ris_tgt: np.ndarray
    noise_var: np.ndarray

    @property
    def N(self) -> int:
        return self.G.shape[0]

    @property
    def M(self) -> int:
        return self.G.shape[1]

    @property
    def K(self) -> int:
        return self.h_ris_cu.shape[0]

    @property
    def L(self) -> int:
        return self.h_ris_tgt.shape[0]


def build_channels(cfg: SystemConfig, placement: Placement, noise_var) -> ChannelSet:
    """Synthesize every link of the scene deterministically.

    Path-loss amplitudes are rho0 * r**(-alpha).  The BS-RIS amplitude is
    referenced to the distance between BS antenna 1 and the RIS center; the
    remaining links use center-to-center distances.
    """
    lam = cfg.wavelength
    k_wave = 2.0 * math.pi / lam
    bs_xyz = bs_antenna_coordinates(cfg, placement.bs_center)
    ris_xyz = ris_element_coordinates(cfg, placement.ris_center)

    r_bs_ris = pairwise_distances(ris_xyz, bs_xyz)  # (N, M)
    r_ref = float(np.linalg.norm(bs_xyz[0] - placement.ris_center))
    beta_g = cfg.rho0 * r_ref ** (-cfg.alpha_bs_ris)
    G = beta_g * np.exp(-1j * k_wave * r_bs_ris)

    K = placement.K
    L = placement.L
    h_ris_cu = np.zeros((K, cfg.n_elements), dtype=complex)
    h_bs_cu = np.zeros((K, cfg.M), dtype=complex)
    for k in range(K):
        vec = placement.cu_positions[k] - placement.ris_center
        psi, phi, r = direction_angles(vec)
        beta = cfg.rho0 * r ** (-cfg.alpha_ris_cu)
        h_ris_cu[k] = beta * ris_array_response(cfg, psi, phi, r)

        r_direct = pairwise_distances(bs_xyz, placement.cu_positions[k][None, :])[:, 0]
        r_c2c = float(np.linalg.norm(placement.bs_center - placement.cu_positions[k]))
        beta_d = cfg.rho0 * r_c2c ** (-cfg.alpha_bs_cu)
        h_bs_cu[k] = beta_d * np.exp(-1j * k_wave * r_direct)

    h_ris_tgt = np.zeros((L, cfg.n_elements), dtype=complex)
    for l in range(L):
        vec = placement.tgt_positions[l] - placement.ris_center
        psi, phi, r = direction_angles(vec)
        beta = cfg.rho0 * r ** (-cfg.alpha_ris_tgt)
        h_ris_tgt[l] = beta * ris_array_response(cfg, psi, phi, r)

    nv = np.asarray(noise_var, dtype=float)
    if nv.ndim == 0:
        nv = np.full(K, float(nv))
    if nv.shape != (K,):
        raise GeometryError(f"noise_var must be scalar or shape ({K},)")
    return ChannelSet(G=G, h_ris_cu=h_ris_cu, h_bs_cu=h_bs_cu,
                      h_ris_tgt=h_ris_tgt, noise_var=nv)
