"""Coupling algebra: validity conditions, presets, scattering and projectors."""

import numpy as np
import pytest

from sgs import coupling as cpl

RNG = np.random.default_rng(42)


def kirchhoff_printed(n):
    """The explicit Kirchhoff matrices: continuity rows plus a summed-derivative row."""
    A = np.zeros((n, n), dtype=complex)
    B = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):
        A[i, i], A[i, i + 1] = 1.0, -1.0
    B[n - 1] = 1.0
    return A, B


class TestValidate:
    def test_kirchhoff_satisfies_both_conditions(self):
        report = cpl.validate(cpl.kirchhoff(3))
        assert report.rank_ok and report.hermiticity_ok
        # A B^H is exactly the zero matrix for these representatives
        assert report.hermiticity_residual == 0.0

    def test_dirichlet_valid(self):
        report = cpl.validate(cpl.dirichlet(3))
        assert report.ok

    def test_zero_pair_fails_rank(self):
        Z = np.zeros((3, 3))
        report = cpl.validate(cpl.CouplingPair(Z, Z))
        assert not report.rank_ok
        assert report.rank_defect == 3

    def test_failed_conditions_do_not_raise(self):
        # a Hermiticity violation is reported, not thrown
        A = np.eye(2, dtype=complex)
        B = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
        report = cpl.validate(cpl.CouplingPair(A, B))
        assert not report.hermiticity_ok

    def test_dimension_mismatch_is_structural_error(self):
        with pytest.raises(cpl.CouplingError):
            cpl.CouplingPair(np.eye(3), np.zeros((2, 2)))
        with pytest.raises(cpl.CouplingError):
            cpl.CouplingPair(np.eye(1), np.eye(1))


class TestPresets:
    def test_kirchhoff_matches_printed_matrices(self):
        pair = cpl.kirchhoff(3)
        A, B = kirchhoff_printed(3)
        np.testing.assert_array_equal(pair.A, A)
        np.testing.assert_array_equal(pair.B, B)

    def test_delta_zero_is_kirchhoff(self):
        assert cpl.equivalent(cpl.delta(3, 0.0), cpl.kirchhoff(3))

    def test_dirichlet_matrices(self):
        pair = cpl.dirichlet(4)
        np.testing.assert_array_equal(pair.A, np.eye(4))
        np.testing.assert_array_equal(pair.B, np.zeros((4, 4)))

    @pytest.mark.parametrize("kind", ["kirchhoff", "dirichlet", "neumann"])
    def test_named_presets_valid(self, kind):
        assert cpl.validate(cpl.preset(kind, 3)).ok

    @pytest.mark.parametrize("alpha", [-2.0, -1.0, 0.5, 3.0])
    def test_delta_valid(self, alpha):
        assert cpl.validate(cpl.delta(3, alpha)).ok

    @pytest.mark.parametrize("beta", [-1.0, 0.7, 2.0])
    def test_delta_prime_valid(self, beta):
        assert cpl.validate(cpl.delta_prime(3, beta)).ok

    def test_too_few_edges_rejected(self):
        with pytest.raises(cpl.CouplingError):
            cpl.preset("kirchhoff", 1)

    def test_unknown_preset_rejected(self):
        with pytest.raises(cpl.CouplingError):
            cpl.preset("robin", 3)


class TestScatteringMatrix:
    def test_dirichlet_reflects_with_minus_identity(self):
        G = cpl.scattering_matrix(cpl.dirichlet(3), 2.5).G
        np.testing.assert_allclose(G, -np.eye(3), atol=1e-12)

    def test_neumann_reflects_with_plus_identity(self):
        G = cpl.scattering_matrix(cpl.neumann(3), 1.0).G
        np.testing.assert_allclose(G, np.eye(3), atol=1e-12)

    @pytest.mark.parametrize("k", [1.0, 7.0])
    def test_kirchhoff_k_independent(self, k):
        n = 3
        G = cpl.scattering_matrix(cpl.kirchhoff(n), k).G
        np.testing.assert_allclose(G, 2.0 / n * np.ones((n, n)) - np.eye(n), atol=1e-12)

    def test_pole_raises_with_residual(self):
        # delta(alpha=-1, n=3) has its pole at k = i/3
        with pytest.raises(cpl.PoleError) as err:
            cpl.scattering_matrix(cpl.delta(3, -1.0), 1j / 3.0)
        assert err.value.residual < 1e-12

    def test_unitary_and_entry_bounded_for_random_couplings(self):
        for _ in range(50):
            n = int(RNG.integers(2, 7))
            pair = cpl.random_coupling(n, RNG)
            for k in RNG.uniform(0.05, 30.0, size=5) * RNG.choice([-1.0, 1.0], size=5):
                G = cpl.scattering_matrix(pair, float(k)).G
                assert np.abs(G @ G.conj().T - np.eye(n)).max() < 1e-10
                assert np.abs(G).max() <= 1.0 + 1e-10

    def test_inverse_at_negated_wavenumber(self):
        for _ in range(20):
            pair = cpl.random_coupling(int(RNG.integers(2, 6)), RNG)
            k = float(RNG.uniform(0.2, 5.0))
            G1 = cpl.scattering_matrix(pair, k).G
            G2 = cpl.scattering_matrix(pair, -k).G
            assert np.abs(G1 @ G2 - np.eye(pair.n)).max() < 1e-10


class TestEquivalent:
    def test_scalar_multiple(self):
        pair = cpl.delta(3, -1.0)
        doubled = cpl.CouplingPair(2 * pair.A, 2 * pair.B)
        assert cpl.equivalent(pair, doubled)

    def test_kirchhoff_vs_dirichlet_differ(self):
        assert not cpl.equivalent(cpl.kirchhoff(3), cpl.dirichlet(3))

    def test_random_invertible_row_transform(self):
        for _ in range(10):
            pair = cpl.random_coupling(4, RNG)
            C = RNG.normal(size=(4, 4)) + 1j * RNG.normal(size=(4, 4)) + 3 * np.eye(4)
            other = cpl.CouplingPair(C @ pair.A, C @ pair.B)
            assert cpl.equivalent(pair, other)

    def test_equivalence_relation_on_sample(self):
        pairs = [cpl.random_coupling(3, RNG) for _ in range(4)]
        variants = [cpl.CouplingPair(2.0 * p.A, 2.0 * p.B) for p in pairs]
        for p, v in zip(pairs, variants):
            assert cpl.equivalent(p, p)  # reflexive
            assert cpl.equivalent(p, v) == cpl.equivalent(v, p)  # symmetric
        # transitivity through a third representative
        p = pairs[0]
        q = cpl.CouplingPair(1j * p.A, 1j * p.B)
        r = cpl.CouplingPair(-2.0 * p.A, -2.0 * p.B)
        assert cpl.equivalent(p, q) and cpl.equivalent(q, r) and cpl.equivalent(p, r)

    def test_invalid_pair_rejected(self):
        Z = np.zeros((3, 3))
        with pytest.raises(cpl.CouplingError):
            cpl.equivalent(cpl.CouplingPair(Z, Z), cpl.kirchhoff(3))


class TestProjectorDecomposition:
    def test_dirichlet(self):
        dec = cpl.projector_decomposition(cpl.dirichlet(3))
        np.testing.assert_allclose(dec.P_D, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(dec.P_N, np.zeros((3, 3)), atol=1e-12)
        np.testing.assert_allclose(dec.P_R, np.zeros((3, 3)), atol=1e-12)

    def test_neumann(self):
        dec = cpl.projector_decomposition(cpl.neumann(3))
        np.testing.assert_allclose(dec.P_N, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(dec.P_D, np.zeros((3, 3)), atol=1e-12)

    def test_delta_robin_part_and_form_value(self):
        alpha, n = -1.0, 3
        dec = cpl.projector_decomposition(cpl.delta(n, alpha))
        ones = np.ones(n) / np.sqrt(n)
        np.testing.assert_allclose(dec.P_R, np.outer(ones, ones), atol=1e-10)
        # vertex form value for a continuous trace: alpha |f(0)|^2
        f = 0.7 * np.ones(n)
        tr = dec.P_R @ f
        val = np.vdot(tr, dec.Lambda @ tr).real
        assert abs(val - alpha * 0.7**2) < 1e-10

    def _check_invariants(self, pair):
        dec = cpl.projector_decomposition(pair)
        n = pair.n
        for P in (dec.P_D, dec.P_N, dec.P_R):
            assert np.abs(P - P.conj().T).max() < 1e-12
            assert np.abs(P @ P - P).max() < 1e-12
        assert np.abs(dec.P_D @ dec.P_N).max() < 1e-12
        assert np.abs(dec.P_D @ dec.P_R).max() < 1e-12
        assert np.abs(dec.P_N @ dec.P_R).max() < 1e-12
        assert np.abs(dec.P_D + dec.P_N + dec.P_R - np.eye(n)).max() < 1e-12
        assert np.abs(dec.Lambda - dec.Lambda.conj().T).max() < 1e-10
        assert cpl.decomposition_residual(pair, dec) < 1e-8

    @pytest.mark.parametrize(
        "pair",
        [
            cpl.kirchhoff(3),
            cpl.dirichlet(4),
            cpl.neumann(2),
            cpl.delta(3, -1.0),
            cpl.delta(4, 2.0),
            cpl.delta_prime(3, 1.0),
        ],
        ids=["kirchhoff", "dirichlet", "neumann", "delta-", "delta+", "delta_prime"],
    )
    def test_preset_invariants(self, pair):
        self._check_invariants(pair)

    def test_random_coupling_invariants(self):
        for _ in range(25):
            self._check_invariants(cpl.random_coupling(int(RNG.integers(2, 6)), RNG))


class TestScatteringModes:
    def test_reproduces_scattering_matrix(self):
        for _ in range(20):
            pair = cpl.random_coupling(int(RNG.integers(2, 6)), RNG)
            modes = cpl.scattering_modes(pair)
            for k in (0.3, 1.0, -2.2, 17.0, 0.4 + 0.9j):
                direct = cpl.scattering_matrix(pair, k).G
                assert np.abs(modes.scattering_at(k) - direct).max() < 1e-10

    def test_kirchhoff_is_pole_free(self):
        modes = cpl.scattering_modes(cpl.kirchhoff(3))
        assert np.all(modes.kappas == 0.0)

    def test_delta_pole_matches_bound_state_rate(self):
        modes = cpl.scattering_modes(cpl.delta(3, -1.0))
        positive = modes.kappas[modes.kappas > 0]
        np.testing.assert_allclose(positive, [1.0 / 3.0], atol=1e-12)


class TestSerialization:
    def test_matrix_round_trip(self):
        pair = cpl.random_coupling(3, RNG)
        back = cpl.CouplingPair.from_json_dict(pair.to_json_dict())
        np.testing.assert_allclose(back.A, pair.A, atol=0)
        np.testing.assert_allclose(back.B, pair.B, atol=0)

    def test_preset_form(self):
        pair = cpl.CouplingPair.from_json_dict({"preset": "delta", "n": 3, "alpha": -1.0})
        assert cpl.equivalent(pair, cpl.delta(3, -1.0))

    def test_declared_size_checked(self):
        obj = cpl.kirchhoff(3).to_json_dict()
        obj["n"] = 4
        with pytest.raises(cpl.CouplingError):
            cpl.CouplingPair.from_json_dict(obj)
