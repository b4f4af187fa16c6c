import csv
import math

import numpy as np
import pytest

from robustrep.data import Dataset, DatasetError
from robustrep.nn import LayerSpec, Network, NonFiniteError, build_repnet_s, he_uniform_init
from robustrep.synth import make_shapes
from robustrep.trainer import (
    TrainConfig,
    augment_batch,
    eval_accuracy,
    eval_adversarial_accuracy,
    train_robust,
    train_standard,
    write_metrics_csv,
)

from oracles import linearly_separable


def tiny_net(num_classes=10, seed=0, size=16):
    layers = [LayerSpec.conv(3, 8, 3, 2, 1), LayerSpec("relu"), LayerSpec.conv(8, 16, 3, 2, 1),
              LayerSpec("relu"), LayerSpec("globalavgpool"), LayerSpec.dense(16, 16), LayerSpec("relu"),
              LayerSpec.dense(16, num_classes)]
    return he_uniform_init(Network(layers, (3, size, size), rep_tap=6), seed)


@pytest.fixture(scope="module")
def shapes16():
    images, labels = make_shapes(4, seed=5, size=16)
    return Dataset(images, labels, [str(i) for i in range(10)], "train")


def separable_points(n=200, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    score = pts @ np.array([1.0, -0.7]) - 0.15
    keep = np.abs(score) > 0.08
    pts, y = pts[keep], (score[keep] > 0).astype(np.int64)
    return pts, y


def test_linearly_separable_toy_is_fit():
    pts, y = separable_points()
    assert linearly_separable(pts, y)
    ds = Dataset(pts.reshape(-1, 1, 1, 2), y, ["neg", "pos"])
    layers = [LayerSpec("flatten"), LayerSpec.dense(2, 1), LayerSpec.dense(1, 2)]
    net = he_uniform_init(Network(layers, (1, 1, 2), rep_tap=1), 0)
    cfg = TrainConfig(epochs=50, batch_size=16, lr=0.1, drop_epochs=(), augment=False)
    res = train_standard(net, ds, cfg)
    assert res.epochs[-1].train_acc >= 0.99
    assert eval_accuracy(net, ds) >= 0.99


def test_same_seed_gives_identical_parameters(shapes16):
    cfg = TrainConfig(epochs=2, batch_size=16, seed=4)
    a, b = tiny_net(seed=1), tiny_net(seed=1)
    train_standard(a, shapes16, cfg)
    train_standard(b, shapes16, cfg)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)


def test_robust_with_zero_eps_matches_standard(shapes16):
    cfg = TrainConfig(epochs=2, batch_size=16, seed=2, eps=0.0)
    a, b = tiny_net(seed=2), tiny_net(seed=2)
    ra = train_standard(a, shapes16, cfg)
    rb = train_robust(b, shapes16, cfg)
    assert ra.step_losses == rb.step_losses
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)


def test_lr_drops_by_ten_at_listed_epochs(shapes16):
    cfg = TrainConfig(epochs=5, batch_size=20, lr=0.05, drop_epochs=(2, 4), augment=False)
    res = train_standard(tiny_net(), shapes16, cfg)
    assert [m.lr for m in res.epochs] == pytest.approx([0.05, 0.05, 0.005, 0.005, 0.0005])


def test_robust_metrics_carry_adversarial_loss(shapes16, tmp_path):
    cfg = TrainConfig(epochs=1, batch_size=20, robust=True, eps=0.5, attack_steps=2)
    res = train_robust(tiny_net(), shapes16, cfg)
    m = res.epochs[0]
    assert m.adv_train_loss is not None and math.isfinite(m.adv_train_loss)
    path = write_metrics_csv(res.epochs, str(tmp_path / "m.csv"))
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["epoch", "lr", "train_loss", "train_acc", "adv_train_loss"]
    assert len(rows) == 2


def test_standard_metrics_header(shapes16, tmp_path):
    res = train_standard(tiny_net(), shapes16, TrainConfig(epochs=1, batch_size=40))
    rows = list(csv.reader(open(write_metrics_csv(res.epochs, str(tmp_path / "m.csv")))))
    assert rows[0] == ["epoch", "lr", "train_loss", "train_acc"]


def test_memorizes_ten_samples():
    images, labels = make_shapes(1, seed=9, size=16)
    ds = Dataset(images, labels, [str(i) for i in range(10)])
    net = tiny_net(seed=3)
    train_standard(net, ds, TrainConfig(epochs=300, batch_size=10, lr=0.05, drop_epochs=(), augment=False))
    assert eval_accuracy(net, ds) == 1.0


def test_untrained_net_is_near_chance():
    images, labels = make_shapes(30, seed=1)
    ds = Dataset(images, labels, [str(i) for i in range(10)])
    acc = eval_accuracy(build_repnet_s(10, seed=0), ds)
    assert abs(acc - 0.1) <= 3 * math.sqrt(0.1 * 0.9 / len(ds))


def test_eps_zero_attack_equals_clean_accuracy(shapes16):
    net = tiny_net(seed=5)
    train_standard(net, shapes16, TrainConfig(epochs=3, batch_size=10, augment=False))
    assert eval_adversarial_accuracy(net, shapes16, 0.0) == eval_accuracy(net, shapes16)


def test_attack_never_helps(shapes16):
    net = tiny_net(seed=6)
    train_standard(net, shapes16, TrainConfig(epochs=3, batch_size=10, augment=False))
    clean = eval_accuracy(net, shapes16)
    for eps in (0.25, 1.0):
        assert eval_adversarial_accuracy(net, shapes16, eps, steps=10, restarts=3) <= clean


def test_empty_dataset_rejected():
    ds = Dataset(np.zeros((0, 3, 16, 16)), np.zeros(0), ["a"])
    with pytest.raises(DatasetError):
        train_standard(tiny_net(1), ds, TrainConfig(epochs=1))
    with pytest.raises(DatasetError):
        eval_accuracy(tiny_net(1), ds)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts(shapes16):
    with pytest.raises(NonFiniteError, match="diverged"):
        train_standard(tiny_net(), shapes16, TrainConfig(epochs=3, batch_size=8, lr=1e30, drop_epochs=()))


@pytest.mark.parametrize("kwargs", [dict(eps=-1.0), dict(attack_steps=0), dict(attack_step_size=0.0),
                                    dict(batch_size=0)])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_default_attack_step_ratio():
    cfg = TrainConfig(robust=True, eps=0.5, attack_steps=7)
    assert cfg.resolved_attack_step == pytest.approx(0.125)
    assert cfg.to_dict()["attack_step_ratio"] == 1.75


def test_augmentation_is_seeded_flip_and_shift():
    x = np.random.default_rng(0).random((6, 3, 8, 8)).astype(np.float32)
    a = augment_batch(x, np.random.default_rng(1))
    np.testing.assert_array_equal(a, augment_batch(x, np.random.default_rng(1)))
    assert a.shape == x.shape
    # each output is a shifted copy of the (possibly flipped) input, zero-filled
    for i in range(6):
        found = False
        for src in (x[i], x[i][..., ::-1]):
            padded = np.pad(src, ((0, 0), (4, 4), (4, 4)))
            for dy in range(9):
                for dx in range(9):
                    if np.array_equal(padded[:, dy:dy + 8, dx:dx + 8], a[i]):
                        found = True
        assert found


def test_eps_warmup_ramps_linearly():
    cfg = TrainConfig(robust=True, eps=0.5, eps_warmup=4)
    assert [cfg.eps_at(e) for e in range(6)] == pytest.approx([0.125, 0.25, 0.375, 0.5, 0.5, 0.5])
    assert TrainConfig(eps=0.5).eps_at(0) == 0.5
    with pytest.raises(ValueError):
        TrainConfig(eps_warmup=-1)
