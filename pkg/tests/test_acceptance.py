"""Acceptance suite: one test per criterion, each adding a PASS/FAIL line to the
terminal summary.

The desk models are trained on first use and cached (``$ROBUSTREP_CACHE`` or
``./.desk_cache``), so the first run spends about half an hour training on one
core; every run then spends about fifteen minutes on the measurements. Budgets and thresholds come from
``preregistered.yaml``, which was written by ``scripts/desk_run.py`` before
this file existed.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from robustrep.checkpoint import load_checkpoint, save_checkpoint
from robustrep.cli import main
from robustrep.experiments import (
    DESK_RADII,
    DeskConfig,
    desk_models,
    desk_test_split,
    measure_accuracy,
    measure_gray_visualization,
    measure_interpolation,
    measure_inversion_proxy,
    measure_manipulation,
    measure_sweep,
)
from robustrep.nn import LayerSpec, Network, he_uniform_init
from robustrep.nn.network import gradient_wrt_input
from robustrep.nn.tensor import Tensor, cross_entropy, l2_norm
from robustrep.pgd import BallConstraint, PgdConfig, pgd_optimize
from robustrep.synth import write_corpus

from oracles import ball_projection, central_difference, ref_cross_entropy, ref_forward, relative_error

PREREG = yaml.safe_load(Path(__file__).with_name("preregistered.yaml").read_text())
LIMITS = PREREG["thresholds"]


# -- 1: gradients ------------------------------------------------------------------------

def _random_net(rng):
    size = int(rng.choice([6, 8, 10]))
    c1, c2, hidden, classes = (int(v) for v in rng.integers(2, 7, 4))
    layers = [LayerSpec.conv(3, c1, 3, 1, 1), LayerSpec("relu")]
    if rng.random() < 0.5:
        layers += [LayerSpec("maxpool", kernel=2, stride=2)]
    layers += [LayerSpec.conv(c1, c2, 3, 2, 1), LayerSpec("relu"), LayerSpec("globalavgpool"),
               LayerSpec.dense(c2, hidden), LayerSpec("relu"), LayerSpec.dense(hidden, classes)]
    net = he_uniform_init(Network(layers, (3, size, size), rep_tap=len(layers) - 2), int(rng.integers(1 << 30)))
    for t in net.params.values():
        if t.ndim == 1:
            t.data = rng.normal(0, 0.1, t.shape).astype(np.float32)
    return net, classes


def _objective(kind, net, classes, rng, batch):
    """Engine objective and its float64 reference over (logits, rep)."""
    if kind == 0:
        y = rng.integers(0, classes, batch)
        return (lambda lo, r, x: cross_entropy(lo, y, "sum"),
                lambda lo, r: ref_cross_entropy(lo, y))
    if kind == 1:
        t = rng.random((batch, net.rep_dim)).astype(np.float32)
        return (lambda lo, r, x: l2_norm(r - Tensor(t), axis=1).sum(),
                lambda lo, r: np.linalg.norm(r - t, axis=1).sum())
    if kind == 2:
        u = int(rng.integers(net.rep_dim))
        return (lambda lo, r, x: r[:, u].sum(), lambda lo, r: r[:, u].sum())
    return (lambda lo, r, x: 0.5 * lo.square().sum(), lambda lo, r: 0.5 * np.sum(lo * lo))


def test_criterion_1_gradient_correctness(verdict):
    start = time.process_time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(20):
        net, classes = _random_net(rng)
        batch = int(rng.integers(1, 4))
        x = rng.random((batch,) + net.input_shape).astype(np.float32)
        engine, ref = _objective(k % 4, net, classes, rng, batch)
        _, g = gradient_wrt_input(net, engine, x)
        arch, params = net.architecture(), net.state_dict()

        def f(z):
            return ref(*ref_forward(arch, params, z))

        coords = [tuple(int(rng.integers(0, s)) for s in x.shape) for _ in range(20)]
        fd = [central_difference(f, x, c, h=1e-4) for c in coords]
        worst = max(worst, relative_error([g[c] for c in coords], fd))
    elapsed = time.process_time() - start
    ok = worst < 1e-3 and elapsed < 60
    verdict(1, "gradient correctness", ok, f"max rel err {worst:.2e} over 20 triples, {elapsed:.1f}s CPU")
    assert ok


# -- 2: PGD oracles ----------------------------------------------------------------------

def _sq_dist(t):
    tt = Tensor(np.asarray(t, dtype=np.float32))
    return lambda x: (x - tt).square().sum()


def test_criterion_2_pgd_oracle_equivalence(verdict):
    rng = np.random.default_rng(7)
    worst_proj = worst_lin = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 30))
        center = rng.normal(size=d).astype(np.float32)
        radius = float(rng.uniform(0.1, 2.0))
        u = rng.normal(size=d)
        # targets both inside and outside the ball
        t = (center + u / np.linalg.norm(u) * radius * rng.uniform(0.0, 3.0)).astype(np.float32)
        c = BallConstraint(center, radius, pixel_box=None)
        x = center
        # normalized steps hover within one step of an interior optimum, so shrink the step
        for step in radius / 10 * 10.0 ** -np.arange(6):
            x = pgd_optimize(_sq_dist(t), x, c, PgdConfig(steps=200, step_size=float(step), keep_best=True)).x
        expected = ball_projection(t.astype(np.float64), center.astype(np.float64), radius)
        worst_proj = max(worst_proj, float(np.linalg.norm(x - expected)))

        w = rng.normal(size=d).astype(np.float32)
        wt = Tensor(w)
        res = pgd_optimize(lambda z: (z * wt).sum(), center, c,
                           PgdConfig(steps=50, step_size=radius / 4, direction="maximize"))
        best = center + radius * w.astype(np.float64) / np.linalg.norm(w)
        worst_lin = max(worst_lin, float(np.linalg.norm(res.x - best)))
    ok = worst_proj < 1e-4 and worst_lin < 1e-4
    verdict(2, "PGD oracle equivalence", ok,
            f"projection err {worst_proj:.1e}, linear maximizer err {worst_lin:.1e}, 50 instances each")
    assert ok


# -- desk models -------------------------------------------------------------------------

@pytest.fixture(scope="session")
def desk():
    cfg = DeskConfig()
    assert cfg.protocol() == PREREG["protocol"], "desk protocol differs from the pre-registered one"
    nets = desk_models(cfg)
    return cfg, nets, desk_test_split(cfg)


def test_thresholds_are_the_required_ones():
    assert LIMITS["adv_gap_points"] >= 30 and LIMITS["proxy_gap_points"] >= 25
    assert LIMITS["sweep_monotone_tol"] <= 0.02 and LIMITS["floor_tol"] <= 0.15
    assert LIMITS["interp_endpoint_max"] <= 0.05 and LIMITS["interp_monotone_tol"] <= 0.05
    assert LIMITS["manip_violations"] == 0 and LIMITS["manip_success_min"] >= 0.95
    assert list(DESK_RADII) == PREREG["radii"]


def test_criterion_3_robustness_gap(desk, verdict):
    cfg, nets, test = desk
    acc = measure_accuracy({k: nets[k] for k in ("robust", "standard")}, test, cfg.eps,
                           steps=cfg.eval_steps)
    gap = 100 * (acc["robust"]["adversarial"] - acc["standard"]["adversarial"])
    ok = gap >= LIMITS["adv_gap_points"] and acc["standard"]["clean"] >= acc["robust"]["clean"]
    verdict(3, "robustness gap", ok,
            f"adv robust {acc['robust']['adversarial']:.3f} vs standard {acc['standard']['adversarial']:.3f} "
            f"(gap {gap:.1f} pts); clean standard {acc['standard']['clean']:.3f} vs robust "
            f"{acc['robust']['clean']:.3f}")
    assert ok


@pytest.fixture(scope="session")
def sweeps(desk):
    cfg, nets, test = desk
    return {kind: measure_sweep(nets[kind], test, cfg) for kind in ("robust", "standard")}


def test_criterion_4_sweep_shape(desk, sweeps, verdict):
    cfg, _, _ = desk
    eps = cfg.eps
    tol = LIMITS["sweep_monotone_tol"]
    (rob, rob_floor), (std, std_floor) = sweeps["robust"], sweeps["standard"]
    monotone = all(all(b <= a + tol for a, b in zip(c.mean, c.mean[1:])) for c in (rob, std))
    ratio = rob.at(eps) / max(std.at(eps), 1e-12)
    std_gap = min(m for r, m in zip(std.radii, std.mean) if r <= 4 * eps) - std_floor
    rob_gaps = [m - rob_floor for r, m in zip(rob.radii, rob.mean) if r < 16 * eps]
    ok = (monotone and ratio >= LIMITS["sweep_ratio_at_eps"] and std_gap <= LIMITS["floor_tol"]
          and min(rob_gaps) > LIMITS["floor_tol"])
    verdict(4, "constrained inversion sweep shape", ok,
            f"monotone={monotone}; ratio at eps {ratio:.2f}; standard-floor by 4eps {std_gap:.3f}; "
            f"robust-floor before 16eps >= {min(rob_gaps):.3f}; robust {np.round(rob.mean, 3).tolist()} "
            f"floor {rob_floor:.3f}; standard {np.round(std.mean, 3).tolist()} floor {std_floor:.3f}")
    assert ok


def test_sweeps_reach_their_floor_at_the_largest_radius(sweeps):
    for curve, floor in sweeps.values():
        assert curve.mean[-1] - floor <= LIMITS["floor_tol"]


@pytest.fixture(scope="session")
def proxies(desk):
    cfg, nets, test = desk
    return {kind: measure_inversion_proxy(nets[kind], nets["judge"], test, cfg) for kind in ("robust", "standard")}


def test_criterion_5_inversion_proxy(desk, proxies, verdict):
    cfg, _, _ = desk
    rob, std = proxies["robust"]["agreement"], proxies["standard"]["agreement"]
    gap = 100 * (rob - std)
    ok = rob > std and gap >= LIMITS["proxy_gap_points"]
    verdict(5, "inversion proxy", ok,
            f"judge agrees with robust inversions {rob:.2f}, standard {std:.2f} (gap {gap:.0f} pts, "
            f"{cfg.proxy_pairs} pairs)")
    assert ok


def test_noise_seeded_robust_inversion_matches_target(proxies):
    assert proxies["robust"]["mean_normalized_distance"] <= LIMITS["noise_inversion_max"]


def test_gray_seed_visualization_raises_every_active_unit(desk):
    cfg, nets, _ = desk
    rep = measure_gray_visualization(nets["robust"], cfg)
    assert rep["active_units"] > 0
    assert rep["active_increased"] == rep["active_units"]


def test_criterion_6_interpolation(desk, verdict):
    cfg, nets, test = desk
    rep = measure_interpolation(nets["robust"], test, cfg)
    ok = (rep["max_endpoint_distance"] <= LIMITS["interp_endpoint_max"]
          and rep["max_rise"] <= LIMITS["interp_monotone_tol"])
    verdict(6, "interpolation contract", ok,
            f"endpoint distance {rep['max_endpoint_distance']:.4f}, worst rise {rep['max_rise']:.4f}, "
            f"{cfg.interp_pairs} pairs, T={cfg.interp_frames}")
    assert ok


def test_criterion_7_manipulation(desk, verdict):
    cfg, nets, test = desk
    rob = measure_manipulation(nets["robust"], test, cfg)
    std = measure_manipulation(nets["standard"], test, cfg)
    violations = rob["violations"] + std["violations"]
    ok = violations <= LIMITS["manip_violations"] and rob["reached"] >= LIMITS["manip_success_min"]
    verdict(7, "manipulation postcondition", ok,
            f"{violations} violations over {rob['runs'] + std['runs']} runs; robust reached argmax in "
            f"{100 * rob['reached']:.1f}% within {cfg.manip_steps} steps")
    assert ok


# -- 8: determinism and persistence ----------------------------------------------------------

REPLAYS = [
    ["eval", "--eps", "0.5", "--steps", "3", "--limit", "10"],
    ["invert", "--index", "3", "--steps", "10"],
    ["sweep", "--radii", "0.5,2", "--pairs", "2", "--steps", "4"],
    ["interp", "--frames", "2", "--steps", "3"],
    ["viz", "--unit", "5", "--steps", "3", "--seed-image", "pattern"],
    ["addfeat", "--unit", "2", "--steps", "5"],
    ["topk", "--unit", "4", "--n", "3"],
]


def _files(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(Path(path).rglob("*"))
            if p.is_file() and p.name != "run.yaml"}


def test_criterion_8_determinism_and_persistence(tmp_path, verdict):
    corpus = str(tmp_path / "corpus")
    write_corpus(corpus, n_train=8, n_test=3, n_ood=1, seed=4)
    train = ["train", "--data", corpus, "--robust", "--eps", "0.5", "--epochs", "2", "--batch-size", "32",
             "--attack-steps", "2", "--seed", "11", "--threads", "1"]
    a, b = str(tmp_path / "a" / "m.ckpt"), str(tmp_path / "b" / "m.ckpt")
    assert main(train + ["--out", a]) == 0 and main(train + ["--out", b]) == 0
    identical = Path(a).read_bytes() == Path(b).read_bytes()

    ck = load_checkpoint(a)
    again = str(tmp_path / "again.ckpt")
    save_checkpoint(ck.network, ck.metadata, again)
    round_trip = Path(again).read_bytes() == Path(a).read_bytes()

    replayed = []
    train_replay = str(tmp_path / "replay" / "m.ckpt")
    replayed.append(main(["train", "--config", os.path.splitext(a)[0] + ".run.yaml", "--out", train_replay]) == 0
                    and Path(train_replay).read_bytes() == Path(a).read_bytes())
    for argv in REPLAYS:
        first, second = tmp_path / (argv[0] + "1"), tmp_path / (argv[0] + "2")
        extra = ["--data", corpus] if argv[0] != "viz" else []
        assert main(argv + ["--model", a, "--seed", "3", "--out", str(first)] + extra) == 0
        code = main([argv[0], "--config", str(first / "run.yaml"), "--out", str(second)])
        replayed.append(code == 0 and _files(first) == _files(second))
    ok = identical and round_trip and all(replayed)
    verdict(8, "determinism and persistence", ok,
            f"retrain identical={identical}, round trip identical={round_trip}, "
            f"{sum(replayed)}/{len(replayed)} CLI runs replayed byte-identically")
    assert ok
