"""End-to-end acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The learning criteria (4, 5, 6) share one set of desk-scale runs, produced
once per session by the ``desk`` fixture and timed per arm.
"""

import math
import time

import numpy as np
import pytest

import conftest
import oracles
from fimstar.channel import (
    FimShape,
    bs_user_channel,
    build_fim_geometry,
    ris_user_channel,
    sample_path_clusters,
    sample_task,
    steering_vector,
)
from fimstar.config import ScenarioConfig, desk_profile
from fimstar.env import FimStarEnv, decode_action
from fimstar.experiments import complexity_report, final_window, read_log, run_experiment
from fimstar.metrics import PowerModel, constraint_report, cross_sinr_matrix, effective_channels, sinr
from fimstar.nn import Mlp
from fimstar.ris import build_sector_matrices, check_joint_unitary
from helpers import random_channels, random_decision

SEEDS = [1, 2, 3, 4, 5]
WINDOW = 50


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    return passed


def rel(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(np.max(np.abs(b)), 1e-300))


# ---------------------------------------------------------------- 1

def small_instance(rng):
    u_t = int(rng.integers(1, 3))
    u_r = int(rng.integers(1, 4 - u_t))
    k_shape = [(1, 1), (2, 1), (1, 2), (2, 2), (4, 1), (3, 1)][rng.integers(6)]
    return ScenarioConfig().replace(system={
        "u_t": u_t, "u_r": u_r, "m_x": int(rng.integers(1, 4)), "m_z": 1,
        "n_subcarriers": int(rng.integers(1, 3)), "ris_mx": k_shape[0], "ris_mz": k_shape[1]})


def test_criterion_1_physics_oracles():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = {"steering": 0.0, "assembly": 0.0, "effective": 0.0, "sinr": 0.0, "cross": 0.0}
    instances = 120
    for _ in range(instances):
        cfg = small_instance(rng)
        ch = sample_task(rng, cfg)
        geo, wl = ch.geometry, ch.carrier.carrier_wavelength_m
        y = rng.uniform(0.0, ch.shape.y_max, geo.num_elements)
        az, el = rng.uniform(0, np.pi, 2)
        v = steering_vector(geo, y, az, el, ch.carrier)
        worst["steering"] = max(worst["steering"], float(np.max(np.abs(np.abs(v) - 1.0))),
                                rel(v, oracles.steering(geo.x_coords, y, geo.z_coords, az, el, wl)))

        moved = ch.at_shape(FimShape(y, ch.shape.y_min, ch.shape.y_max))
        dc, bc = moved.direct_clusters, moved.br_clusters
        u_count, n_count, _, k = moved.dims
        for u in range(u_count):
            for n in range(n_count):
                ref = oracles.multipath(geo.x_coords, y, geo.z_coords, dc.gains[u, n], dc.azimuths[u, n],
                                        dc.elevations[u, n], wl)
                worst["assembly"] = max(worst["assembly"], rel(moved.g[u, n], ref))
        for n in range(n_count):
            for kk in range(k):
                ref = oracles.multipath(geo.x_coords, y, geo.z_coords, bc.gains[n, kk], bc.azimuths[n, kk],
                                        bc.elevations[n, kk], wl)
                worst["assembly"] = max(worst["assembly"], rel(moved.h_br[n, :, kk], ref))
        ris = build_fim_geometry(cfg.system.ris_mx, cfg.system.ris_mz, cfg.system.ris_spacing,
                                 cfg.system.ris_spacing)
        cl = sample_path_clusters(rng, 3, 1e-3)
        ref = oracles.multipath(ris.x_coords, np.zeros(k), ris.z_coords, cl.gains, cl.azimuths, cl.elevations, wl)
        worst["assembly"] = max(worst["assembly"], rel(ris_user_channel(ris, cl, ch.carrier), ref))

        rc = random_channels(rng, cfg)
        d = random_decision(rng, rc)
        sec = build_sector_matrices(d.ris)
        eff = effective_channels(rc, sec)
        cross = cross_sinr_matrix(eff, d, rc.noise_power)
        for u in range(u_count):
            for n in range(n_count):
                row = oracles.effective(u, n, rc.g, rc.h_ru, rc.h_br, sec.diag_t, sec.diag_r, rc.u_t)
                worst["effective"] = max(worst["effective"], rel(eff[u, n], row))
                for i in range(u_count):
                    ref = oracles.cross_sinr(u, i, n, row, d.w, d.alpha, rc.noise_power[u, n])
                    worst["cross"] = max(worst["cross"], abs(cross[u, i, n] - ref) / max(abs(ref), 1.0))
        ref = oracles.sinr_matrix(rc.g, rc.h_ru, rc.h_br, sec.diag_t, sec.diag_r, rc.u_t, d.w, d.alpha,
                                  rc.noise_power)
        worst["sinr"] = max(worst["sinr"], float(np.max(np.abs(sinr(d, rc, sec) - ref) / np.maximum(ref, 1.0))))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-12 and elapsed < 10.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record(1, ok, f"{instances} instances, {detail}, {elapsed:.1f} s")


# ---------------------------------------------------------------- 2

def test_criterion_2_constraints():
    cfg = ScenarioConfig()
    rng = np.random.default_rng(202)
    env = FimStarEnv(cfg)
    env.reset(rng)
    pm = PowerModel.from_config(cfg)
    start = time.perf_counter()
    violations = 0
    worst_unitary = 0.0
    u, n = cfg.system.num_users, cfg.system.n_subcarriers
    for _ in range(10_000):
        d = decode_action(rng.uniform(-1, 1, env.action_dim), cfg, env.action_layout)
        sec = build_sector_matrices(d.ris)
        rep = constraint_report(d, env.channels, sec, pm, cross=np.zeros((u, u, n)))
        for name in ("users_per_subcarrier", "power_per_subcarrier", "fim_bounds", "binary_assignment"):
            violations += not rep.satisfied(name)
        worst_unitary = max(worst_unitary, check_joint_unitary(sec), abs(rep.ris_power))
    elapsed = time.perf_counter() - start
    ok = violations == 0 and worst_unitary <= 1e-12 and elapsed < 30.0
    assert record(2, ok, f"10000 actions, {violations} violations, unitary residual {worst_unitary:.1e}, "
                         f"{elapsed:.1f} s")


# ---------------------------------------------------------------- 3

def test_criterion_3_gradients():
    import test_agent
    import test_nn

    rng = np.random.default_rng(303)
    checks = [
        ("mlp", test_nn.TestMlp().test_backward_matches_central_difference),
        ("jvp", test_nn.TestMlp().test_input_and_param_jvp),
        ("squashed_gaussian", test_nn.TestSquashedGaussian().test_backward_matches_central_difference),
        ("critic_td", test_agent.TestCriticGradients().test_matches_central_difference),
        ("actor_j", test_agent.TestActorGradients().test_objective_matches_central_difference),
        ("meta_critic_loss", test_agent.TestActorGradients().test_meta_critic_loss_gradient),
        ("meta_chain", test_agent.TestMetaUpdate().test_meta_gradient_matches_central_difference),
        ("meta_chain_1d", test_agent.TestMetaUpdate().test_scalar_chain_rule_by_hand),
    ]
    start = time.perf_counter()
    failed = []
    for name, check in checks:
        try:
            if name == "meta_chain_1d":
                check()
            else:
                check(rng)
        except AssertionError:
            failed.append(name)
    elapsed = time.perf_counter() - start
    ok = not failed and elapsed < 60.0
    assert record(3, ok, f"{len(checks) - len(failed)}/{len(checks)} gradient checks within 1e-4, "
                         f"{elapsed:.1f} s" + (f", failed {failed}" if failed else ""))


# ---------------------------------------------------------------- desk-scale runs

DESK_ARMS = [
    ("variant_compare", "meta_sac_star"),
    ("variant_compare", "random_star"),
    ("variant_compare", "meta_sac_d_ris"),
    ("variant_compare", "meta_sac_none"),
    ("variant_compare", "sac_star"),
    ("lr_sweep", "lr_0.99"),
]


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    cfg = desk_profile()
    paths, seconds = {}, {}
    for experiment, series in DESK_ARMS:
        start = time.perf_counter()
        got = run_experiment(experiment, cfg, SEEDS, out, workers=1, series=[series])
        seconds[series] = time.perf_counter() - start
        paths[series] = got[series]
    return {"cfg": cfg, "out": out, "paths": paths, "seconds": seconds}


def finals(desk, series, metric="ee"):
    return np.array([final_window(p, metric, WINDOW) for p in desk["paths"][series]])


def test_criterion_4_learning_trend(desk):
    agent, rand = finals(desk, "meta_sac_star"), finals(desk, "random_star")
    ratios = agent / rand
    median = float(np.median(ratios))
    elapsed = desk["seconds"]["meta_sac_star"] + desk["seconds"]["random_star"]
    ok = median >= 1.5 and elapsed < 15 * 60
    per_seed = " ".join(f"{r:.2f}" for r in ratios)
    assert record(4, ok, f"median EE ratio {median:.3f} vs random (per seed {per_seed}), "
                         f"{elapsed / 60:.1f} min")


def test_criterion_5_variant_ordering(desk):
    star, d_ris, none = finals(desk, "meta_sac_star"), finals(desk, "meta_sac_d_ris"), finals(desk, "meta_sac_none")
    sac = finals(desk, "sac_star")

    def at_least(a, b):
        ma, mb = np.median(a), np.median(b)
        return ma > mb or (ma == mb and np.mean(a) >= np.mean(b))

    ordering = at_least(star, d_ris) and at_least(d_ris, none)
    meta_wins = int(np.sum(star >= sac))
    elapsed = sum(desk["seconds"][s] for s in ("meta_sac_star", "meta_sac_d_ris", "meta_sac_none",
                                               "sac_star", "random_star"))
    ok = ordering and meta_wins >= 3 and elapsed < 45 * 60
    assert record(5, ok, f"medians star {np.median(star):.3f}, d_ris {np.median(d_ris):.3f}, "
                         f"none {np.median(none):.3f}; meta-SAC >= SAC in {meta_wins}/5 seeds, "
                         f"{elapsed / 60:.1f} min")


def test_criterion_6_learning_rate(desk):
    good_ee, bad_ee = finals(desk, "meta_sac_star"), finals(desk, "lr_0.99")
    good_power = float(np.median(finals(desk, "meta_sac_star", "power")))
    curves = np.stack([read_log(p)["power"] for p in desk["paths"]["lr_0.99"]])
    median_curve = np.median(curves, axis=0)
    smooth = np.convolve(median_curve, np.ones(WINDOW) / WINDOW, mode="valid")
    ee_ok = float(np.median(bad_ee)) < float(np.median(good_ee))
    power_ok = float(np.min(smooth)) >= good_power
    ok = ee_ok and power_ok and all(math.isfinite(x) for x in smooth)
    assert record(6, ok, f"median final EE lr 0.99 {np.median(bad_ee):.3f} vs lr 0.001 "
                         f"{np.median(good_ee):.3f}; lowest smoothed P_T at lr 0.99 {np.min(smooth):.3f} W "
                         f"vs final P_T at lr 0.001 {good_power:.3f} W")


# ---------------------------------------------------------------- 7

def test_criterion_7_determinism(desk, tmp_path):
    again = run_experiment("variant_compare", desk["cfg"], [1], tmp_path, workers=1, series=["meta_sac_star"])
    first = desk["paths"]["meta_sac_star"][0]
    same = again["meta_sac_star"][0].read_bytes() == first.read_bytes()
    config_same = ((tmp_path / "variant_compare" / "config.yaml").read_bytes()
                   == (desk["out"] / "variant_compare" / "config.yaml").read_bytes())
    assert record(7, same and config_same, f"seed 1 desk rerun byte-identical: {same}, config: {config_same}")


# ---------------------------------------------------------------- 8

def count_params(widths):
    weights = biases = 0
    for a, b in zip(widths[:-1], widths[1:]):
        for _ in range(a):
            weights += b
        biases += b
    return weights, biases


def test_criterion_8_complexity():
    variants = [
        ScenarioConfig(),
        desk_profile().replace(agent={"actor_hidden": [64], "critic_hidden": [32, 16, 8], "meta_hidden": [5]}),
        ScenarioConfig().replace(system={"u_t": 1, "u_r": 1, "n_subcarriers": 1, "ris_mx": 2, "ris_mz": 1},
                                 agent={"actor_hidden": [7, 3], "critic_hidden": [9], "meta_critic": False}),
    ]
    mismatches = 0
    for cfg in variants:
        env = FimStarEnv(cfg)
        s, a = env.state_dim, env.action_dim
        ag = cfg.agent
        expected = {"actor": [s, *ag.actor_hidden, 2 * a], "critic": [s + a, *ag.critic_hidden, 1]}
        if ag.meta_critic:
            expected["meta_critic"] = [s + a, *ag.meta_hidden, 1]
        rep = complexity_report(cfg)
        mismatches += set(rep["networks"]) != set(expected)
        total_w = total_p = 0
        for name, widths in expected.items():
            w, b = count_params(widths)
            net = Mlp(widths)
            built = sum(p.size for p in net.params())
            entry = rep["networks"].get(name, {})
            mismatches += entry.get("macs") != w or entry.get("params") != w + b or built != w + b
            total_w += w
            total_p += w + b
        mismatches += rep["total_macs"] != total_w or rep["total_params"] != total_p
    assert record(8, mismatches == 0, f"3 architectures, {mismatches} mismatches")
