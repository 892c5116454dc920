import numpy as np
import pytest

from chainqfi.chain import (
    ChainSpec,
    build_full_hamiltonian_oracle,
    build_sector_hamiltonian,
    derivative_generators,
    probe_embedding,
    project_to_sector,
    total_sz,
)
from chainqfi.errors import ConfigurationError, ResourceError


def test_two_spin_zero_fields():
    H = build_sector_hamiltonian(ChainSpec(2, 1.0), 0.0, 0.0).matrix
    np.testing.assert_allclose(np.diag(H).real, [-0.5, 0.5, 0.5])
    assert H[1, 2] == -1 and H[2, 1] == -1
    assert H[0, 1] == H[0, 2] == 0


def test_two_spin_with_fields():
    H = build_sector_hamiltonian(ChainSpec(2, 1.0), 0.3, 0.2).matrix
    np.testing.assert_allclose(np.diag(H).real, [0.0, 0.4, 0.6], atol=1e-15)
    assert H[1, 2] == -1


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_sector_block_matches_tensor_product_oracle(N, rng):
    spec = ChainSpec(N, 1.0)
    for _ in range(20):
        c, lam = rng.normal(size=2) * 2
        block = project_to_sector(build_full_hamiltonian_oracle(spec, c, lam), N)
        assert np.abs(block - build_sector_hamiltonian(spec, c, lam).matrix).max() < 1e-12


def test_oracle_with_nonunit_coupling(rng):
    spec = ChainSpec(4, 0.7)
    block = project_to_sector(build_full_hamiltonian_oracle(spec, 0.4, -0.3), 4)
    assert np.abs(block - build_sector_hamiltonian(spec, 0.4, -0.3).matrix).max() < 1e-12


def test_projected_block_is_closed_under_dynamics():
    # the sector is invariant: H maps sector states into the sector
    N = 4
    from chainqfi.chain import sector_isometry

    V = sector_isometry(N)
    H = build_full_hamiltonian_oracle(ChainSpec(N), 0.3, 0.8)
    leak = H @ V - V @ (V.conj().T @ H @ V)
    assert np.abs(leak).max() < 1e-12


@pytest.mark.parametrize("N", [2, 3, 4])
def test_oracle_conserves_total_sz(N):
    H = build_full_hamiltonian_oracle(ChainSpec(N), 0.37, -1.2)
    Sz = total_sz(N)
    assert np.abs(H @ Sz - Sz @ H).max() < 1e-12


def test_two_spin_oracle_spectrum():
    H = build_full_hamiltonian_oracle(ChainSpec(2), 0.0, 0.0)
    # triplet at -J/2 (three states), singlet at +3J/2
    np.testing.assert_allclose(np.linalg.eigvalsh(H), [-0.5, -0.5, -0.5, 1.5], atol=1e-12)
    block = project_to_sector(H, 2)
    np.testing.assert_allclose(block, build_sector_hamiltonian(ChainSpec(2), 0, 0).matrix, atol=1e-12)


def test_hermitian_for_random_inputs(rng):
    for _ in range(20):
        N = int(rng.integers(2, 9))
        H = build_sector_hamiltonian(ChainSpec(N, rng.uniform(0.2, 2)), *rng.normal(size=2)).matrix
        np.testing.assert_array_equal(H, H.conj().T)


def test_tridiagonal_structure():
    N = 6
    H = build_sector_hamiltonian(ChainSpec(N, 1.3), 0.2, 0.1).matrix
    off = H - np.diag(np.diag(H))
    nz = {(i, j) for i, j in zip(*np.nonzero(off))}
    expected = {(j, j + 1) for j in range(1, N)} | {(j + 1, j) for j in range(1, N)}
    assert nz == expected
    assert np.all(off[1:, :][np.abs(off[1:, :]) > 0] == -1.3)


def test_derivative_generators_two_spin():
    dlam, ctrl = derivative_generators(ChainSpec(2))
    np.testing.assert_array_equal(np.diag(dlam).real, [1, 1, -1])
    np.testing.assert_array_equal(np.diag(ctrl).real, [1, -1, 1])
    assert np.allclose(dlam @ ctrl, ctrl @ dlam)


@pytest.mark.parametrize("N", [2, 3, 5, 7])
def test_generators_match_finite_differences(N, rng):
    spec = ChainSpec(N)
    dlam, ctrl = derivative_generators(spec)
    c, lam = rng.normal(size=2)
    h = 1e-6
    fd_lam = (build_sector_hamiltonian(spec, c, lam + h).matrix - build_sector_hamiltonian(spec, c, lam - h).matrix) / (2 * h)
    fd_c = (build_sector_hamiltonian(spec, c + h, lam).matrix - build_sector_hamiltonian(spec, c - h, lam).matrix) / (2 * h)
    assert np.abs(fd_lam - dlam).max() < 1e-8
    assert np.abs(fd_c - ctrl).max() < 1e-8


def test_control_generator_is_minus_probe_sigma_z():
    _, ctrl = derivative_generators(ChainSpec(4))
    np.testing.assert_array_equal(ctrl, -probe_embedding(4).sz)


@pytest.mark.parametrize("N", [2, 3, 4, 6])
def test_mirror_symmetry_at_equal_fields(N):
    H = build_sector_hamiltonian(ChainSpec(N), 0.45, 0.45).matrix[1:, 1:]
    R = np.eye(N)[::-1]
    np.testing.assert_allclose(R @ H @ R, H, atol=1e-14)


def test_probe_embedding_is_hermitian_and_pauli_like():
    emb = probe_embedding(3)
    for s in emb.as_stack():
        np.testing.assert_array_equal(s, s.conj().T)
    assert emb.sy[1, 0] == 1j
    # on span{|0>,|1>}: |1> (probe up) is the +1 eigenstate of sigma_z
    np.testing.assert_array_equal(emb.sx[:2, :2], [[0, 1], [1, 0]])
    np.testing.assert_array_equal(emb.sy[:2, :2], [[0, -1j], [1j, 0]])
    np.testing.assert_array_equal(emb.sz[:2, :2], np.diag([-1, 1]))
    np.testing.assert_array_equal(np.diag(emb.sz).real, [-1, 1, -1, -1])


def test_invalid_specs():
    with pytest.raises(ConfigurationError):
        ChainSpec(1)
    with pytest.raises(ConfigurationError):
        ChainSpec(3, 0.0)
    with pytest.raises(ConfigurationError):
        ChainSpec(3, -1.0)


def test_oracle_memory_guard():
    with pytest.raises(ResourceError):
        build_full_hamiltonian_oracle(ChainSpec(13), 0.0, 0.0)
