import numpy as np
import pytest

from fermatlab import phase as ph
from fermatlab import systems as S
from fermatlab.errors import ConfigError, DimensionMismatch

CLASSICAL_SPECS = [
    S.SystemSpec("oscillator_nd", {"n_dof": 3, "omega": [1.0, 1.3, 0.7]}),
    S.SystemSpec("pendulum", {"n_dof": 2}),
    S.SystemSpec("double_well", {"a": 0.7}),
    S.SystemSpec("henon_heiles_like", {"lam": 1.0}),
    S.SystemSpec("classical_spin_pair", {"n_spins": 2}),
    S.SystemSpec("classical_spin_pair", {"n_spins": 1}),
    S.SystemSpec("free_particle", {"n_dof": 2, "mass": 1.5}),
]
QUANTUM_SPECS = [
    S.SystemSpec("qubit_field", {"field": [0.3, -0.2, 1.0]}),
    S.SystemSpec("heisenberg_chain", {"n_sites": 4, "field_z": 0.3, "periodic": True}),
    S.SystemSpec("random_hermitian", {"dim": 16}, seed=3),
]


@pytest.mark.parametrize("spec", CLASSICAL_SPECS, ids=lambda s: s.kind)
def test_classical_derivatives_match_finite_differences(spec):
    sys = S.build(spec)
    err = ph.check_derivatives(sys, S.probe_points(sys, 100, seed=1))
    assert err["gradient"] < 1e-7
    assert err["hessian"] < 1e-6
    assert err["asymmetry"] < 1e-12


@pytest.mark.parametrize("spec", QUANTUM_SPECS, ids=lambda s: s.kind)
def test_quantum_hamiltonians_are_hermitian_and_diagonalizable(spec):
    H = S.build(spec).hamiltonian
    assert np.max(np.abs(H - H.conj().T)) == 0.0
    w, V = np.linalg.eigh(H)
    assert np.max(np.abs(V @ np.diag(w) @ V.conj().T - H)) < 1e-10


def test_driven_qubit_is_hermitian_at_all_times():
    Ht = S.build(S.SystemSpec("driven_qubit")).hamiltonian
    for t in np.linspace(0, 10, 21):
        H = Ht(t)
        assert np.max(np.abs(H - H.conj().T)) == 0.0


def test_spin_pair_conserves_total_z_component():
    sys = S.spin_pair(2, coupling=1.0, field=0.5)
    traj = ph.hamilton_flow([0.3, -0.2, 0.1, 1.0], sys, 10.0, 10000)
    total = traj.points[:, 0] + traj.points[:, 1]
    assert np.max(np.abs(total - total[0])) < 1e-8


def test_heisenberg_chain_commutes_with_total_sz():
    H = S.heisenberg_chain(4, 1.0, 0.2)
    Sz = S.total_sz(4)
    assert np.max(np.abs(H @ Sz - Sz @ H)) < 1e-13


def test_random_hermitian_is_reproducible_and_seed_dependent():
    assert np.array_equal(S.random_hermitian(8, 42), S.random_hermitian(8, 42))
    assert not np.array_equal(S.random_hermitian(8, 42), S.random_hermitian(8, 43))


def test_frozen_oscillator_and_pendulum_energies():
    assert float(S.oscillator(1).hamiltonian(np.array([1.0, 0.0]))) == 0.5
    assert float(S.pendulum(1).hamiltonian(np.array([0.0, 1.0]))) == pytest.approx(-0.5)
    assert float(S.double_well(a=2.0).hamiltonian(np.array([0.0, 0.0]))) == 2.0


def test_spec_round_trip_and_strictness():
    spec = S.SystemSpec("pendulum", {"n_dof": 2, "strength": 0.5})
    assert S.SystemSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigError):
        S.SystemSpec("pendulum", {"lenght": 1.0}).resolved()
    with pytest.raises(ConfigError):
        S.SystemSpec.from_dict({"kind": "pendulum", "extra": 1})
    with pytest.raises(ConfigError):
        S.build(S.SystemSpec("random_hermitian"))


def test_dimension_caps():
    with pytest.raises(DimensionMismatch):
        S.build(S.SystemSpec("heisenberg_chain", {"n_sites": 7}))
    with pytest.raises(DimensionMismatch):
        S.build(S.SystemSpec("oscillator_nd", {"n_dof": 7}))
    with pytest.raises(DimensionMismatch):
        S.random_hermitian(65, 0)
