import numpy as np
import pytest
from scipy.linalg import expm

from twin_metrology.spin_algebra import (
    angular_momentum_matrices,
    imbalance_values,
    kernel_columns,
    rotation_kernel,
)


def test_zero_block_is_trivial():
    mats = angular_momentum_matrices(0)
    for j in (mats.jx, mats.jy, mats.jz):
        assert j.shape == (1, 1)
        assert np.all(j == 0)


def test_n2_matrix_entries():
    mats = angular_momentum_matrices(2)
    off = 1.0 / np.sqrt(2.0)
    assert mats.jx == pytest.approx(np.array([[0, off, 0], [off, 0, off], [0, off, 0]]))
    assert np.allclose(np.diag(mats.jz), [-1.0, 0.0, 1.0])
    assert np.allclose(imbalance_values(2), [-1.0, 0.0, 1.0])


def test_jx_second_moment_of_balanced_state():
    # brute-force matrix square at N=100: <50,50| Jx^2 |50,50> = N(N+2)/8
    mats = angular_momentum_matrices(100)
    jx2 = mats.jx @ mats.jx
    assert jx2[50, 50] == pytest.approx(1275.0, rel=1e-12)


@pytest.mark.parametrize("total", [1, 2, 3, 7, 40, 200])
def test_commutator_algebra(total):
    m = angular_momentum_matrices(total)
    scale = max(np.abs(m.jz).max(), 1.0)
    for a, b, c in ((m.jx, m.jy, m.jz), (m.jy, m.jz, m.jx), (m.jz, m.jx, m.jy)):
        res = a @ b - b @ a - 1j * c
        assert np.abs(res).max() <= 1e-12 * scale


@pytest.mark.parametrize("total", [0, 1, 5, 33])
def test_kernel_identity_at_zero_angle(total):
    kern = rotation_kernel(total, 0.0)
    assert np.abs(kern.matrix - np.eye(total + 1)).max() < 1e-12
    assert np.abs(kern.derivative.sum(axis=0)).max() < 1e-10
    assert np.abs(kern.derivative.sum(axis=1)).max() < 1e-10


def test_two_particle_interference_dip():
    # both bosons exit through the same port at theta = pi/2
    kern = rotation_kernel(2, np.pi / 2)
    col = kern.matrix[:, 1]
    assert abs(col[0] - 0.5) < 1e-12
    assert col[1] < 1e-12
    assert abs(col[2] - 0.5) < 1e-12


@pytest.mark.parametrize("total,theta", [(5, 0.3), (17, 1.7), (50, 0.9)])
def test_kernel_matches_direct_exponentiation(total, theta):
    mats = angular_momentum_matrices(total)
    u = expm(-1j * theta * mats.jx)
    kern = rotation_kernel(total, theta)
    assert np.abs(kern.matrix - np.abs(u) ** 2).max() < 1e-10


def test_generator_y_gives_same_kernel():
    theta = 0.77
    mats = angular_momentum_matrices(12)
    u = expm(-1j * theta * mats.jy)
    kern_y = rotation_kernel(12, theta, gen="jy")
    kern_x = rotation_kernel(12, theta, gen="x")
    assert np.abs(kern_y.matrix - np.abs(u) ** 2).max() < 1e-10
    assert np.array_equal(kern_y.matrix, kern_x.matrix)
    assert kern_y.generator == "y"


@pytest.mark.parametrize("total", [0, 1, 2, 3, 4, 5, 8, 13, 33, 64, 101, 150, 200])
def test_kernel_doubly_stochastic(total):
    for theta in np.linspace(0.0, 2.0 * np.pi, 20, endpoint=False):
        kern = rotation_kernel(total, float(theta))
        assert kern.matrix.min() >= -1e-12
        assert kern.matrix.max() <= 1.0 + 1e-12
        assert np.abs(kern.matrix.sum(axis=0) - 1.0).max() < 1e-10
        assert np.abs(kern.matrix.sum(axis=1) - 1.0).max() < 1e-10
        assert np.abs(kern.derivative.sum(axis=0)).max() < 1e-8
        assert np.abs(kern.derivative.sum(axis=1)).max() < 1e-8


@pytest.mark.parametrize("total", [15, 40])
def test_kernel_symmetries(total):
    kern = rotation_kernel(total, 0.7)
    k = kern.matrix
    assert np.abs(k - k.T).max() < 1e-10
    # K[n, n'] = K[-n', -n]: transpose combined with double index reversal
    assert np.abs(k - k[::-1, ::-1].T).max() < 1e-10


def test_derivative_against_central_difference():
    h = 1e-5
    kern = rotation_kernel(20, 0.3)
    fd = (rotation_kernel(20, 0.3 + h).matrix - rotation_kernel(20, 0.3 - h).matrix) / (2 * h)
    assert np.abs(kern.derivative - fd).max() < 1e-6


def test_derivative_difference_error_is_quadratic():
    exact = rotation_kernel(20, 0.3).derivative

    def fd_error(h):
        fd = (rotation_kernel(20, 0.3 + h).matrix - rotation_kernel(20, 0.3 - h).matrix) / (2 * h)
        return np.abs(fd - exact).max()

    ratio = fd_error(2e-3) / fd_error(1e-3)
    assert 3.0 < ratio < 5.0


def test_kernel_columns_match_full_kernel():
    cols = np.array([2, 5, 9])
    q, dq = kernel_columns(11, 1.234, cols)
    kern = rotation_kernel(11, 1.234)
    assert np.abs(q - kern.matrix[:, cols]).max() < 1e-13
    assert np.abs(dq - kern.derivative[:, cols]).max() < 1e-13


def test_kernel_cache_returns_identical_values():
    a = rotation_kernel(9, 0.5)
    b = rotation_kernel(9, 0.5)
    assert np.array_equal(a.matrix, b.matrix)
    assert np.array_equal(a.derivative, b.derivative)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        angular_momentum_matrices(-1)
    with pytest.raises(ValueError):
        rotation_kernel(4, np.inf)
    with pytest.raises(ValueError):
        rotation_kernel(4, 0.1, gen="jz")
