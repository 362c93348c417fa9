import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from groupmv.circuit import CX, BitRef, CondX, DynamicCircuit, Gate, H, Measure, Reset, S, X, Z
from groupmv.partition import plan_links
from groupmv.sim import Basis, NoiseModel, Tableau, apply_gate, measure_z, run_shot, run_shots
from groupmv.sim.dense import (OracleError, dense_oracle, enumerate_branches, ghz_overlap, outcome_distribution,
                               pauli_expectation)
from groupmv.synth import synth_group_mv, synth_unitary
from groupmv.topology import make_grid

from .random_circuits import random_circuit, tvd


def rng(seed=0):
    return np.random.default_rng(seed)


def test_fresh_tableau():
    t = Tableau(3, shots=4)
    assert t.check_symplectic()
    assert t.stabilizer_strings() == ["+ZII", "+IZI", "+IIZ"]
    assert (measure_z(t, 1) == 0).all()


def test_h_then_measure_is_uniform():
    t = Tableau(1, shots=20_000)
    apply_gate(t, H(0))
    out = measure_z(t, 0, rng())
    assert abs(out.mean() - 0.5) < 0.02


def test_x_then_measure():
    t = Tableau(1, shots=3)
    apply_gate(t, X(0))
    assert (measure_z(t, 0) == 1).all()


def test_cx_on_zero():
    t = Tableau(2, shots=3)
    apply_gate(t, CX(0, 1))
    assert (measure_z(t, 0) == 0).all() and (measure_z(t, 1) == 0).all()


def test_bell_correlated():
    t = Tableau(2, shots=10_000)
    apply_gate(t, H(0))
    apply_gate(t, CX(0, 1))
    a = measure_z(t, 0, rng(1))
    b = measure_z(t, 1, rng(2))
    assert (a == b).all()
    assert abs(a.mean() - 0.5) < 0.02


def test_ghz3_measure_all():
    t = Tableau(3, shots=5000)
    for op in (H(0), CX(0, 1), CX(1, 2)):
        apply_gate(t, op)
    bits = np.stack([measure_z(t, q, rng(q)) for q in range(3)], axis=1)
    assert set(map(tuple, bits)) <= {(0, 0, 0), (1, 1, 1)}


def test_deterministic_measurement_consumes_no_randomness_and_keeps_state():
    t = Tableau(2, shots=2)
    apply_gate(t, H(0))
    apply_gate(t, CX(0, 1))
    measure_z(t, 0, rng(3))
    before = (t.x.copy(), t.z.copy(), t.r.copy(), t.dr.copy())
    r = rng(5)
    state = r.bit_generator.state
    measure_z(t, 1, r)
    assert r.bit_generator.state == state
    assert all(np.array_equal(a, b) for a, b in zip(before, (t.x, t.z, t.r, t.dr)))


def test_s_gate_phase():
    # S H |0> = |+i>, measuring Y via S-dagger H is deterministic 0
    t = Tableau(1, shots=3)
    for op in (H(0), S(0), Z(0), S(0), H(0)):
        apply_gate(t, op)
    assert (measure_z(t, 0) == 0).all()


def test_readout_error_is_classical():
    c = DynamicCircuit(1, 2, (Measure(0, 0), Measure(0, 1)))
    b = run_shots(c, NoiseModel(p_ro=1.0), Basis.Z, 50, seed=1)
    assert (b.mid[:, 0] == 1).all() and (b.mid[:, 1] == 1).all()
    assert (b.final[:, 0] == 1).all()
    # remeasuring without readout error reproduces the true value
    b = run_shots(c, NoiseModel(), Basis.Z, 50, seed=1)
    assert (b.mid == 0).all()


def test_readout_error_does_not_touch_state():
    c = DynamicCircuit(1, 1, (Measure(0, 0), CondX(0, BitRef(0))))
    # recorded bit is 1 (flipped), feedforward X fires on the true |0>, final readout flips again
    b = run_shots(c, NoiseModel(p_ro=1.0), Basis.Z, 20, seed=2)
    assert (b.mid[:, 0] == 1).all() and (b.final[:, 0] == 0).all()


def test_reset_uses_true_outcome():
    c = DynamicCircuit(1, 0, (X(0), Reset(0)))
    b = run_shots(c, NoiseModel(p_ro=1.0), Basis.Z, 20, seed=0)
    assert (b.final[:, 0] == 1).all()  # state is |0>, readout flips it
    b = run_shots(c, NoiseModel(p_ro=1.0, reset_readout_error=True), Basis.Z, 20, seed=0)
    assert (b.final[:, 0] == 0).all()  # faulty reset leaves |1>, readout flips it


def test_ideal_ghz_samples():
    g = make_grid(5, 6)
    c = synth_unitary(g, list(range(30)))
    z = run_shots(c, NoiseModel(), Basis.Z, 2000, seed=4)
    assert set(z.final.sum(axis=1).tolist()) <= {0, 30}
    x = run_shots(c, NoiseModel(), Basis.X, 2000, seed=4)
    assert (x.final.sum(axis=1) % 2 == 0).all()


def test_ghz2_statistics():
    c = synth_unitary(make_grid(1, 2), [0, 1])
    z = run_shots(c, NoiseModel(), Basis.Z, 100_000, seed=8)
    pop = z.final.sum(axis=1)
    assert set(pop.tolist()) <= {0, 2}
    assert abs((pop == 0).mean() - 0.5) < 0.01


def test_same_seed_same_records():
    c = synth_unitary(make_grid(2, 3), list(range(6)))
    nm = NoiseModel(0.01, 0.02, 0.05)
    a = run_shots(c, nm, Basis.X, 500, seed=11)
    b = run_shots(c, nm, Basis.X, 500, seed=11)
    assert np.array_equal(a.final, b.final) and np.array_equal(a.mid, b.mid)
    assert a.dumps() == b.dumps()


def test_disabled_noise_equals_zero_noise():
    c = synth_unitary(make_grid(2, 3), list(range(6)))
    a = run_shots(c, NoiseModel(0.3, 0.3, 0.3, enabled=False), Basis.X, 300, seed=3)
    b = run_shots(c, NoiseModel(), Basis.X, 300, seed=3)
    assert np.array_equal(a.final, b.final)


def test_run_shot_record():
    c = synth_unitary(make_grid(1, 3), [0, 1, 2])
    rec = run_shot(c, NoiseModel(), rng=3)
    assert rec.final_bits.shape == (3,) and rec.mid_bits.shape == (0,)
    assert len(set(rec.final_bits.tolist())) == 1


def test_raw_dump_format():
    c = DynamicCircuit(2, 1, (H(0), CX(0, 1), Measure(1, 0)))
    text = run_shots(c, NoiseModel(), Basis.Z, 3, seed=0).dumps()
    for line in text.splitlines():
        basis, mid, fin = line.split()
        assert basis == "Z" and len(mid) == 1 and len(fin) == 2 and fin[1] == mid


def test_pauli_noise_rate():
    # X errors after each of many identity-equivalent gate pairs
    c = DynamicCircuit(1, 0, (Z(0),))
    b = run_shots(c, NoiseModel(p_1q=0.3), Basis.Z, 40_000, seed=5)
    # 2 of 3 Paulis (X, Y) flip the Z outcome
    assert abs(b.final.mean() - 0.2) < 0.01


def test_two_qubit_noise_rate():
    c = DynamicCircuit(2, 0, (CX(0, 1),))
    b = run_shots(c, NoiseModel(p_2q=0.3), Basis.Z, 40_000, seed=6)
    # 12 of the 15 non-identity Paulis flip at least one Z readout
    assert abs((b.final.sum(axis=1) > 0).mean() - 0.3 * 12 / 15) < 0.01


def test_group_mv_corrupted_witness_state():
    g = make_grid(1, 4)
    plan = plan_links([{0, 1}, {2, 3}], g, 0, 1, seed=0)
    c = synth_group_mv(g, [0, 1, 2, 3], plan)
    for br in enumerate_branches(c, flips={0}):
        v = br.vector
        assert ghz_overlap(v) < 1e-12
        p0 = abs(v[0]) ** 2
        p1 = abs(v[-1]) ** 2
        xx = pauli_expectation(v, "XXXX")
        assert (p0 + p1 + xx) / 2 == pytest.approx(0.5)


def test_dense_bell():
    v = dense_oracle(DynamicCircuit(2, 0, (H(0), CX(0, 1))))
    assert np.allclose(v, [2 ** -0.5, 0, 0, 2 ** -0.5])


def test_dense_rejects_large_and_impossible():
    with pytest.raises(OracleError):
        dense_oracle(DynamicCircuit(13, 0, ()))
    with pytest.raises(OracleError):
        dense_oracle(DynamicCircuit(1, 1, (Measure(0, 0),)), forced_bits={0: 1})


def test_dense_forced_branch():
    c = DynamicCircuit(2, 1, (H(0), CX(0, 1), Measure(0, 0)))
    v = dense_oracle(c, forced_bits={0: 1})
    assert abs(v[3]) == pytest.approx(1)


def test_branch_probabilities_sum_to_one():
    c = DynamicCircuit(3, 2, (H(0), H(1), Measure(0, 0), Reset(1), CondX(2, BitRef(0)), Measure(2, 1)))
    brs = enumerate_branches(c, p_ro=0.1)
    assert sum(b.prob for b in brs) == pytest.approx(1)


@settings(max_examples=30)
@given(seed=st.integers(0, 100_000))
def test_symplectic_invariant_random_circuits(seed):
    c = random_circuit(np.random.default_rng(seed), n=6, max_meas=5)
    run_shots(c, NoiseModel(0.05, 0.05, 0.05), Basis.X, 50, seed=seed, debug=True)


@settings(max_examples=10)
@given(seed=st.integers(0, 100_000))
def test_tableau_matches_dense_small(seed):
    r = np.random.default_rng(seed)
    p_ro = 0.1 if seed % 2 else 0.0
    c = random_circuit(r, n=4, max_meas=4)
    exact = outcome_distribution(c, p_ro)
    b = run_shots(c, NoiseModel(p_ro=p_ro), Basis.Z, 20_000, seed=seed)
    assert tvd(exact, b.mid) < 0.03
