import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from stemtune.errors import InvalidArgument
from stemtune.optics import (
    COEFFICIENTS,
    AberrationState,
    OpticalConfig,
    chi,
    probe_intensity,
    probe_psf,
    wavelength,
)

# Frozen from a stand-alone evaluation of h / sqrt(2 m0 e V (1 + e V / 2 m0 c^2))
# with the exact SI constants h, e, c and CODATA 2018 m_e.
WAVELENGTH_PM = {60: 4.866060502967859, 100: 3.701436613781811, 300: 1.9687489006848795}
CHI_C10_1NM_30MRAD_60KV = 0.5810518357727639


@pytest.mark.parametrize("kv, expected", sorted(WAVELENGTH_PM.items()))
def test_wavelength_matches_oracle(kv, expected):
    assert wavelength(kv) == pytest.approx(expected, rel=1e-9)
    assert round(wavelength(kv), 3) == round(expected, 3)


@pytest.mark.parametrize("kv", [0, -60, float("nan")])
def test_wavelength_rejects_nonpositive(kv):
    with pytest.raises(InvalidArgument):
        wavelength(kv)


def test_config_rejects_aperture_beyond_nyquist():
    # 30 mrad at 60 kV is ~6.2 1/nm; 0.1 nm pixels give a 5 1/nm Nyquist limit.
    with pytest.raises(InvalidArgument):
        OpticalConfig(pixel_size=0.1)
    with pytest.raises(InvalidArgument):
        OpticalConfig(grid_size=96)
    cfg = OpticalConfig()
    assert cfg.aperture_cutoff < cfg.nyquist


def test_chi_zero_state_is_zero(small_optics):
    alpha = np.linspace(0, small_optics.alpha_max, 11)
    phi = np.linspace(0, 2 * np.pi, 11)
    assert np.all(chi(alpha, phi, AberrationState(), small_optics) == 0.0)


def test_chi_defocus_value():
    cfg = OpticalConfig()
    value = chi(0.030, 0.3, AberrationState(c10=1.0), cfg)
    assert value == pytest.approx(CHI_C10_1NM_30MRAD_60KV, rel=1e-9)
    assert round(float(value), 4) == 0.5811


@given(
    a=st.floats(-10, 10), b=st.floats(-10, 10),
    alpha=st.floats(0, 0.03), phi=st.floats(0, 2 * np.pi),
)
def test_chi_twofold_period(a, b, alpha, phi):
    cfg = OpticalConfig()
    state = AberrationState(c12a=a, c12b=b)
    assert chi(alpha, phi, state, cfg) == pytest.approx(
        chi(alpha, phi + np.pi, state, cfg), abs=1e-9
    )


@settings(max_examples=50)
@given(
    u=st.lists(st.floats(-300, 300), min_size=7, max_size=7),
    v=st.lists(st.floats(-300, 300), min_size=7, max_size=7),
    s=st.floats(-3, 3),
)
def test_chi_is_linear_in_coefficients(u, v, s):
    cfg = OpticalConfig()
    alpha = np.linspace(0, cfg.alpha_max, 7)
    phi = np.linspace(0, 2 * np.pi, 7)
    su = AberrationState.from_vector(u, COEFFICIENTS)
    sv = AberrationState.from_vector(v, COEFFICIENTS)
    combo = AberrationState.from_vector(np.array(u) + s * np.array(v), COEFFICIENTS)
    lhs = chi(alpha, phi, combo, cfg)
    rhs = chi(alpha, phi, su, cfg) + s * chi(alpha, phi, sv, cfg)
    scale = np.max(np.abs(chi(alpha, phi, su, cfg))) + abs(s) * np.max(np.abs(chi(alpha, phi, sv, cfg)))
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-9 * (1 + scale))


def _rot90_origin(image):
    """Rotate an origin-at-(0,0) periodic image by +90 degrees: I'(r) = I(R_-90 r)."""
    n = image.shape[0]
    iy, ix = np.indices(image.shape)
    return image[(-ix) % n, iy]


def test_zero_state_psf_centred_and_symmetric(small_optics):
    psf = probe_psf(AberrationState(), small_optics).data
    n = small_optics.grid_size
    assert np.unravel_index(np.argmax(psf), psf.shape) == (n // 2, n // 2)
    raw = probe_intensity(AberrationState(), small_optics)
    asym = np.abs(_rot90_origin(raw) - raw).max() / raw.max()
    mirror = np.abs(raw[:, (-np.arange(n)) % n] - raw).max() / raw.max()
    assert asym < 1e-12 and mirror < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-300, 300), min_size=4, max_size=4))
def test_psf_unit_sum_and_nonnegative(first, second):
    cfg = OpticalConfig(grid_size=64)
    state = AberrationState.from_vector(first + second, COEFFICIENTS)
    psf = probe_psf(state, cfg).data
    assert abs(psf.sum() - 1.0) < 1e-10
    assert psf.min() >= 0.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-300, 300), min_size=4, max_size=4))
def test_probe_energy_independent_of_aberrations(first, second):
    cfg = OpticalConfig(grid_size=64)
    state = AberrationState.from_vector(first + second, COEFFICIENTS)
    reference = probe_intensity(AberrationState(), cfg).sum()
    assert probe_intensity(state, cfg).sum() == pytest.approx(reference, rel=1e-9)


def _half_max_diameter(psf):
    """Full width at half maximum along the x and y axes through the centre,
    with linear interpolation between pixels, averaged."""
    n = psf.shape[0]
    c = n // 2
    widths = []
    for profile in (psf[c, c:], psf[c, c::-1], psf[c:, c], psf[c::-1, c]):
        half = profile[0] / 2
        i = int(np.argmax(profile < half))
        widths.append(i - 1 + (profile[i - 1] - half) / (profile[i - 1] - profile[i]))
    return float(np.mean(widths)) * 2


def test_defocus_broadens_probe():
    cfg = OpticalConfig()
    d0 = _half_max_diameter(probe_psf(AberrationState(), cfg).data)
    d5 = _half_max_diameter(probe_psf(AberrationState(c10=5.0), cfg).data)
    assert d5 > d0


@pytest.mark.parametrize("c10", [0.7, 2.5, 8.0])
def test_defocus_sign_symmetry(c10, small_optics):
    plus = probe_psf(AberrationState(c10=c10), small_optics).data
    minus = probe_psf(AberrationState(c10=-c10), small_optics).data
    assert np.allclose(plus, minus, rtol=0, atol=1e-12 * plus.max())


@pytest.mark.parametrize("a, b", [(3.0, 0.0), (1.5, -2.0), (0.0, 4.0)])
def test_astigmatism_rotation_by_quarter_turn(a, b, small_optics):
    # A 180 degree turn of (c12a, c12b) rotates the probe by 90 degrees: exact on the grid.
    base = probe_intensity(AberrationState(c12a=a, c12b=b), small_optics)
    turned = probe_intensity(AberrationState(c12a=-a, c12b=-b), small_optics)
    assert np.allclose(turned, _rot90_origin(base), rtol=0, atol=1e-10 * base.max())


def test_astigmatism_rotation_by_arbitrary_angle():
    cfg = OpticalConfig(grid_size=256, pixel_size=0.01)
    theta = np.deg2rad(30.0)
    a, b = 2.0, 0.0
    rot = np.array([[np.cos(2 * theta), -np.sin(2 * theta)], [np.sin(2 * theta), np.cos(2 * theta)]])
    a2, b2 = rot @ [a, b]
    base = probe_psf(AberrationState(c12a=a, c12b=b), cfg).data
    turned = probe_psf(AberrationState(c12a=a2, c12b=b2), cfg).data

    def rotated(image, angle):
        # I'(r) = I(R(-angle) r) about the PSF centre (N/2, N/2), in (row, col) = (y, x)
        c, s = np.cos(angle), np.sin(angle)
        matrix = np.array([[c, -s], [s, c]])
        centre = np.full(2, cfg.grid_size // 2, dtype=float)
        return ndimage.affine_transform(image, matrix, offset=centre - matrix @ centre, order=3)

    norm = np.linalg.norm(turned)
    err = np.linalg.norm(turned - rotated(base, theta)) / norm
    wrong = np.linalg.norm(turned - rotated(base, -theta)) / norm
    assert err < 0.02
    assert wrong > 5 * err


def test_aberration_state_validation():
    with pytest.raises(InvalidArgument):
        AberrationState(c10=float("inf"))
    with pytest.raises(InvalidArgument):
        AberrationState(active=("c99",))
    with pytest.raises(InvalidArgument):
        AberrationState.from_vector([1.0, 2.0], ("c10",))
    state = AberrationState.from_vector([1.0, 2.0, 3.0], ("c10", "c12a", "c12b"))
    assert np.array_equal(state.vector(), [1.0, 2.0, 3.0])
    assert state.coefficients()["c21a"] == 0.0
    assert AberrationState().is_zero() and not state.is_zero()
