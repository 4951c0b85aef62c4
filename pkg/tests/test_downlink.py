import numpy as np
import pytest

from sparselsf import downlink as dl
from sparselsf.geometry import NetworkConfig, correlation_matrices, drop_network
from sparselsf.pilots import assign_pilots, estimation_stats
from sparselsf.power_control import fractional_power_control
from sparselsf.sparse import embed, extract_association, solve_ew
from sparselsf.uplink import CombinedMoments, combined_moments, heuristic_dcc, lsf_statistics


def build(K, L, N=2, seed=0, n=2000):
    cfg = NetworkConfig(L=L, N=N, K=K, area_side=200.0)
    rng = np.random.default_rng(seed)
    geom = drop_network(cfg, rng)
    stats = correlation_matrices(geom, cfg)
    assign = assign_pilots(geom.beta, 10)
    est = estimation_stats(stats, assign, 0.1)
    p = fractional_power_control(geom.beta, None, 0.5, 0.1)
    mom = combined_moments(stats, est, assign, p, "L-MMSE", n, rng)
    return geom, assign, p, mom


def unit_dirs(mom, p):
    st = lsf_statistics(mom, p)
    a = np.linalg.solve(st.Delta, st.xi[..., None])[..., 0]
    return dl.normalize_directions(a)


def test_precoder_is_combiner():
    v = np.arange(6.0).reshape(1, 2, 3)
    assert dl.precoder_from_combiner(v) is v


def test_zero_precoding_gives_zero_sinr(small_network):
    mom = small_network["moments"]
    sinr, flagged = dl.downlink_sinr(np.zeros((mom.K, mom.L), dtype=complex), mom)
    assert not np.any(sinr) and np.all(flagged)


def test_single_ue_matches_virtual_uplink():
    geom, assign, p, mom = build(1, 4, seed=3)
    a = unit_dirs(mom, p)
    rho, ok = dl.duality_power_allocation(a, mom, p)
    assert ok and rho[0] == pytest.approx(p[0], rel=1e-12)
    sinr_dl, _ = dl.downlink_sinr(np.sqrt(p)[:, None] * a, mom)
    assert sinr_dl[0] == pytest.approx(dl.virtual_uplink_sinr(a, mom, p)[0], rel=1e-12)


def test_sinr_increases_with_common_scaling(small_network):
    mom = small_network["moments"]
    rng = np.random.default_rng(0)
    b = rng.standard_normal((mom.K, mom.L)) + 1j * rng.standard_normal((mom.K, mom.L))
    prev = dl.downlink_sinr(b * 1e-3, mom)[0]
    for alpha in (1e-2, 1e-1, 1.0, 10.0):
        cur = dl.downlink_sinr(b * alpha, mom)[0]
        assert np.all(cur >= prev - 1e-12)
        prev = cur


def test_duality_random_instances():
    for seed in range(4):
        geom, assign, p, mom = build(3, 5, seed=seed)
        a = unit_dirs(mom, p)
        rho, ok = dl.duality_power_allocation(a, mom, p)
        assert ok
        target = dl.virtual_uplink_sinr(a, mom, p)
        achieved, _ = dl.downlink_sinr(np.sqrt(rho)[:, None] * a, mom)
        np.testing.assert_allclose(achieved, target, rtol=1e-8)
        assert rho.sum() <= p.sum() + 1e-9
        np.testing.assert_allclose(rho, dl.duality_fixed_point(a, mom, p), rtol=1e-8)


def test_duality_symmetric_pair():
    L = 2
    C = np.zeros((2, 2, L, L), dtype=complex)
    C[0, 0] = C[1, 1] = np.diag([4.0, 1.0])
    C[0, 1] = C[1, 0] = np.diag([0.5, 0.5])
    mean = np.array([[1.5, 0.7], [1.5, 0.7]], dtype=complex)
    mom = CombinedMoments(C=C, mean=mean, scale=np.ones((2, L)), n_blocks=2000)
    a = dl.normalize_directions(np.array([[1.0, 0.5], [1.0, 0.5]], dtype=complex))
    rho, ok = dl.duality_power_allocation(a, mom, np.array([0.1, 0.1]))
    assert ok and rho[0] == pytest.approx(rho[1], rel=1e-12)


def test_duality_requires_unit_norm(small_network):
    mom = small_network["moments"]
    with pytest.raises(ValueError):
        dl.duality_power_allocation(np.ones((mom.K, mom.L)), mom, small_network["p"])


def test_duality_infeasible_falls_back(monkeypatch):
    C = np.zeros((2, 2, 1, 1), dtype=complex)
    C[0, 0] = C[1, 1] = 1.0
    C[0, 1] = C[1, 0] = 50.0
    mom = CombinedMoments(C=C, mean=np.ones((2, 1), dtype=complex), scale=np.ones((2, 1)), n_blocks=2000)
    p = np.array([0.1, 0.1])
    # targets no power vector can meet, as inconsistent statistics would produce
    monkeypatch.setattr(dl, "virtual_uplink_sinr", lambda *a, **k: np.array([10.0, 10.0]))
    rho, ok = dl.duality_power_allocation(np.ones((2, 1), dtype=complex), mom, p)
    assert not ok
    np.testing.assert_array_equal(rho, p)


def test_centralized_single_link():
    rho = dl.centralized_power_allocation(np.array([[3.0]]), np.array([[1.0 + 0j]]), rho_max=2.0)
    assert rho[0] == pytest.approx(2.0)


def test_centralized_degenerate_exponents():
    beta = np.array([[1.0, 5.0], [2.0, 0.1], [7.0, 3.0]])
    omega = np.full((3, 2), 1 / np.sqrt(2))
    rho = dl.centralized_power_allocation(beta, omega, kappa=0.0, power_mu=0.0)
    np.testing.assert_allclose(rho, rho[0])


def test_centralized_rejects_empty_set():
    with pytest.raises(ValueError):
        dl.centralized_power_allocation(np.ones((2, 2)), np.ones((2, 2)), [set(), {0}])


def audit(sol: dl.LsfpSolution, rho_max=1.0):
    per_ap = np.array([sum(sol.rho_kl[k, l] for k in D) for l, D in enumerate(sol.served)])
    assert np.all(per_ap <= rho_max + 1e-9)
    np.testing.assert_allclose(np.linalg.norm(sol.omega, axis=1), 1.0, atol=1e-12)


def test_distributed_fpa_rules():
    beta = np.random.default_rng(0).random((5, 3)) + 0.1
    D = [{0, 1, 2, 3}, {4}, set()]
    rho = dl.distributed_fpa(beta, D, nu=0.0, rho_max=2.0)
    np.testing.assert_allclose(rho[[0, 1, 2, 3], 0], 0.5)
    assert rho[4, 1] == 2.0 and not np.any(rho[:, 2])
    rho = dl.distributed_fpa(beta, D, nu=0.5)
    assert abs(rho[:, 0].sum() - 1.0) < 1e-12 and abs(rho[:, 1].sum() - 1.0) < 1e-12
    assert not np.any(rho[4, [0, 2]])


def test_catalog_constraints_and_relations():
    geom, assign, p, mom = build(6, 8, seed=5)
    beta = geom.beta
    M, D = heuristic_dcc(beta, assign)
    f = dl.fpa(beta, D)
    h = dl.hfpa(beta, D, M)
    np.testing.assert_allclose(f.omega, h.omega)
    assert not np.allclose(f.rho, h.rho)
    v = dl.vlsfp(mom, p, beta)
    st = lsf_statistics(mom, p)
    ref = np.linalg.solve(st.Delta, st.xi[..., None])[..., 0]
    for k in range(6):
        cos = abs(np.vdot(v.b[k], ref[k])) / np.linalg.norm(v.b[k]) / np.linalg.norm(ref[k])
        assert cos == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(np.linalg.norm(v.b, axis=1) ** 2, v.rho, rtol=1e-12)
    emb = embed(st.Delta, st.xi, p)
    sparse0 = solve_ew(emb, 0.0)
    s0 = dl.slsfp(sparse0.a, beta)
    np.testing.assert_allclose(s0.omega, v.omega, atol=1e-8)
    sol = solve_ew(emb, 0.1)
    Ms, _, _ = extract_association(sol)
    sv = dl.svlsfp(mom, p, Ms, beta)
    assert sv.association == Ms
    for s in (h, v, s0, sv, dl.plsfp(mom, M, beta)):
        audit(s)
    audit(f)


def test_single_ue_schemes_collinear():
    geom, assign, p, mom = build(1, 1, seed=2)
    beta = geom.beta
    M, D = heuristic_dcc(beta, assign)
    st = lsf_statistics(mom, p)
    sol = solve_ew(embed(st.Delta, st.xi, p), 0.01)
    Ms, _, _ = extract_association(sol)
    schemes = [dl.fpa(beta, D), dl.hfpa(beta, D, M), dl.vlsfp(mom, p, beta), dl.plsfp(mom, M, beta),
               dl.slsfp(sol.a, beta), dl.svlsfp(mom, p, Ms, beta)]
    ref = schemes[0].b[0]
    for s in schemes:
        cos = abs(np.vdot(s.b[0], ref)) / np.linalg.norm(s.b[0]) / np.linalg.norm(ref)
        assert cos == pytest.approx(1.0, abs=1e-12)


def test_virtual_mse_minimizer_is_virtual_olsfd(small_network):
    from sparselsf.uplink import uplink_mse
    mom, p = small_network["moments"], small_network["p"]
    st = lsf_statistics(mom, p)
    a_opt = np.sqrt(p)[:, None] * np.linalg.solve(st.Delta, st.xi[..., None])[..., 0]
    rng = np.random.default_rng(1)
    for k in range(mom.K):
        base = uplink_mse(a_opt[k], st.Delta[k], st.xi[k], p[k])
        for _ in range(20):
            d = 1e-3 * (rng.standard_normal(mom.L) + 1j * rng.standard_normal(mom.L))
            assert uplink_mse(a_opt[k] + d, st.Delta[k], st.xi[k], p[k]) >= base - 1e-15


def test_downlink_se_prelog():
    assert dl.downlink_se(1.0, 190, 200) == pytest.approx(0.95)
    assert dl.downlink_se(3.0, 0, 200) == 0.0
