import math

import numpy as np
import pytest

from nfisac.errors import GeometryError
from nfisac.geometry import Placement, SystemConfig, bs_antenna_coordinates, ris_element_coordinates, ris_element_indices
from nfisac.channels import ChannelSet, build_channels, direction_angles, ris_array_response


def small_cfg(**kw):
    base = dict(M=3, Nx=5, Nz=5)
    base.update(kw)
    return SystemConfig(**base)


def scene(cfg, K=2, L=1):
    rng = np.random.default_rng(11)
    cu = np.array([2.0, 2.0, 0.0]) + rng.uniform(-0.4, 0.4, (K, 3)) * [1, 1, 0]
    tgt = np.array([4.0, 2.0, 0.0]) + rng.uniform(-0.4, 0.4, (L, 3)) * [1, 1, 0]
    return Placement(
        bs_center=np.array([-4.0, 2.0, 0.0]),
        ris_center=np.zeros(3),
        cu_positions=cu,
        tgt_positions=tgt,
    )


def fresnel_response_reference(cfg, psi, phi, r):
    """Element-by-element reference, no Kronecker shortcut."""
    d = cfg.spacing
    lam = cfg.wavelength
    ux = math.cos(psi) * math.sin(phi)
    uz = math.cos(phi)
    out = np.zeros(cfg.n_elements, dtype=complex)
    for i, (nx, nz) in enumerate(ris_element_indices(cfg)):
        px = -nx * d * ux + (nx * d) ** 2 * (1 - ux**2) / (2 * r)
        pz = -nz * d * uz + (nz * d) ** 2 * (1 - uz**2) / (2 * r)
        out[i] = np.exp(-1j * 2 * math.pi / lam * (px + pz))
    return out


def test_direction_angles_axes():
    psi, phi, r = direction_angles([0.0, 0.0, 2.0])
    assert phi == pytest.approx(0.0, abs=1e-12)
    assert r == pytest.approx(2.0)
    psi, phi, r = direction_angles([1.0, 1.0, 0.0])
    assert phi == pytest.approx(math.pi / 2, rel=1e-12)
    assert psi == pytest.approx(math.pi / 4, rel=1e-12)
    with pytest.raises(GeometryError):
        direction_angles([0.0, 0.0, 0.0])


def test_response_central_element_is_one():
    cfg = small_cfg()
    resp = ris_array_response(cfg, 0.3, 1.2, 2.5)
    idx = ris_element_indices(cfg)
    mid = np.where((idx == 0).all(axis=1))[0][0]
    assert resp[mid] == pytest.approx(1.0 + 0.0j, abs=1e-14)
    np.testing.assert_allclose(np.abs(resp), 1.0, atol=1e-14)


def test_response_matches_elementwise_reference():
    cfg = small_cfg(Nx=7, Nz=3)
    psi, phi, r = 0.7, 1.1, 1.8
    got = ris_array_response(cfg, psi, phi, r)
    want = fresnel_response_reference(cfg, psi, phi, r)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_response_far_field_limit_is_planar():
    cfg = small_cfg(Nx=9, Nz=9)
    psi, phi = 0.4, 1.3
    r = 1e7
    resp = ris_array_response(cfg, psi, phi, r)
    d = cfg.spacing
    ux = math.cos(psi) * math.sin(phi)
    uz = math.cos(phi)
    idx = ris_element_indices(cfg)
    planar = np.exp(
        1j * 2 * math.pi / cfg.wavelength * d * (idx[:, 0] * ux + idx[:, 1] * uz)
    )
    np.testing.assert_allclose(np.angle(resp / planar), 0.0, atol=1e-6)


def test_response_approximates_true_sphere():
    # the quadratic expansion should track exact spherical distances to a
    # fraction of a radian at a few meters, and very closely when far away
    cfg = SystemConfig(M=1, Nx=21, Nz=21)
    point = np.array([1.5, 2.0, 0.4])
    psi, phi, r = direction_angles(point)
    resp = ris_array_response(cfg, psi, phi, r)
    xyz = ris_element_coordinates(cfg, np.zeros(3))
    exact = np.exp(
        -1j * 2 * math.pi / cfg.wavelength * (np.linalg.norm(xyz - point, axis=1) - r)
    )
    err = np.abs(np.angle(resp / exact))
    assert err.max() < 0.5

    far = point / r * 500.0
    psi, phi, rf = direction_angles(far)
    resp = ris_array_response(cfg, psi, phi, rf)
    exact = np.exp(
        -1j * 2 * math.pi / cfg.wavelength * (np.linalg.norm(xyz - far, axis=1) - rf)
    )
    assert np.abs(np.angle(resp / exact)).max() < 2e-3


def test_response_rejects_nonpositive_range():
    with pytest.raises(GeometryError):
        ris_array_response(small_cfg(), 0.0, 1.0, 0.0)


def test_scalar_link_closed_form():
    # single antenna at exactly 1 m from a single-element RIS
    cfg = SystemConfig(M=1, Nx=1, Nz=1, alpha_bs_ris=2.0)
    placement = Placement(
        bs_center=np.array([0.0, -1.0, 0.0]),
        ris_center=np.zeros(3),
        cu_positions=np.array([[2.0, 2.0, 0.0]]),
        tgt_positions=np.zeros((0, 3)),
    )
    ch = build_channels(cfg, placement, 1e-9)
    want = cfg.rho0 * np.exp(-1j * 2 * math.pi / cfg.wavelength)
    assert ch.G.shape == (1, 1)
    assert ch.G[0, 0] == pytest.approx(want, rel=1e-12)


def test_bs_ris_amplitude_and_phase():
    cfg = small_cfg()
    placement = scene(cfg)
    ch = build_channels(cfg, placement, 1e-9)
    bs_xyz = bs_antenna_coordinates(cfg, placement.bs_center)
    r_ref = np.linalg.norm(bs_xyz[0] - placement.ris_center)
    beta = cfg.rho0 * r_ref ** (-cfg.alpha_bs_ris)
    np.testing.assert_allclose(np.abs(ch.G), beta, rtol=1e-12)
    # spot-check one entry against the raw spherical phase
    ris_xyz = ris_element_coordinates(cfg, placement.ris_center)
    r = np.linalg.norm(ris_xyz[7] - bs_xyz[2])
    want = beta * np.exp(-1j * 2 * math.pi / cfg.wavelength * r)
    assert ch.G[7, 2] == pytest.approx(want, rel=1e-12)


def test_direct_link_norm_and_phase():
    cfg = small_cfg()
    placement = scene(cfg)
    ch = build_channels(cfg, placement, 1e-9)
    for k in range(placement.K):
        r_c2c = np.linalg.norm(placement.bs_center - placement.cu_positions[k])
        beta = cfg.rho0 * r_c2c ** (-cfg.alpha_bs_cu)
        assert np.linalg.norm(ch.h_bs_cu[k]) ** 2 == pytest.approx(
            cfg.M * beta**2, rel=1e-12
        )


def test_cascaded_link_amplitudes():
    cfg = small_cfg()
    placement = scene(cfg, K=3, L=2)
    ch = build_channels(cfg, placement, 1e-9)
    for k in range(3):
        r = np.linalg.norm(placement.cu_positions[k] - placement.ris_center)
        beta = cfg.rho0 * r ** (-cfg.alpha_ris_cu)
        np.testing.assert_allclose(np.abs(ch.h_ris_cu[k]), beta, rtol=1e-12)
    for l in range(2):
        r = np.linalg.norm(placement.tgt_positions[l] - placement.ris_center)
        beta = cfg.rho0 * r ** (-cfg.alpha_ris_tgt)
        np.testing.assert_allclose(np.abs(ch.h_ris_tgt[l]), beta, rtol=1e-12)


def test_build_channels_deterministic_and_shapes():
    cfg = small_cfg()
    placement = scene(cfg, K=2, L=1)
    a = build_channels(cfg, placement, 1e-9)
    b = build_channels(cfg, placement, 1e-9)
    np.testing.assert_array_equal(a.G, b.G)
    np.testing.assert_array_equal(a.h_ris_cu, b.h_ris_cu)
    assert (a.N, a.M, a.K, a.L) == (25, 3, 2, 1)
    np.testing.assert_array_equal(a.noise_var, np.full(2, 1e-9))


def test_cu_order_permutes_rows():
    cfg = small_cfg()
    placement = scene(cfg, K=3, L=1)
    swapped = Placement(
        bs_center=placement.bs_center,
        ris_center=placement.ris_center,
        cu_positions=placement.cu_positions[::-1].copy(),
        tgt_positions=placement.tgt_positions,
    )
    a = build_channels(cfg, placement, 1e-9)
    b = build_channels(cfg, swapped, 1e-9)
    np.testing.assert_array_equal(a.h_ris_cu[::-1], b.h_ris_cu)
    np.testing.assert_array_equal(a.h_bs_cu[::-1], b.h_bs_cu)
    np.testing.assert_array_equal(a.G, b.G)


def test_noise_var_validation():
    cfg = small_cfg()
    placement = scene(cfg, K=2, L=1)
    ch = build_channels(cfg, placement, [1e-9, 2e-9])
    np.testing.assert_array_equal(ch.noise_var, [1e-9, 2e-9])
    with pytest.raises(GeometryError):
        build_channels(cfg, placement, [1e-9, 1e-9, 1e-9])
