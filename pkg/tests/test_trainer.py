import math

import numpy as np
import pytest

from dcwh import data as D, loss as L, trainer as T
from dcwh.errors import CenterUpdateError, ConfigError, TrainingError
from dcwh.net import backward, embed, forward, init_net, sgd_step


@pytest.fixture(scope="module")
def blobs():
    return D.gen_blobs(3, 40, 2, spread=1.0, seed=5)


def make_cfg(bits=8, classes=3, **kw):
    loss_kw = {k: kw.pop(k) for k in ("sigma_sq", "eta1", "eta2", "alpha", "multilabel")
               if k in kw}
    kw.setdefault("seed", 3)
    return T.TrainConfig(L.LossConfig(bits, classes, **loss_kw), **kw)


@pytest.fixture(scope="module")
def blob_run(blobs):
    cfg = make_cfg(stage1_epochs=20, stage2_epochs=20)
    net0 = init_net(cfg.layer_dims(2), cfg.seed)
    net1, c1, log1 = T.train_stage1(net0, blobs, cfg)
    net2, c2, log2 = T.train_stage2(net1, c1, blobs, cfg)
    return cfg, net0, (net1, c1, log1), (net2, c2, log2)


def test_config_validation():
    with pytest.raises(ConfigError):
        make_cfg(batch_size=0)
    with pytest.raises(ConfigError):
        make_cfg(center_update_period=0)
    with pytest.raises(ConfigError):
        make_cfg(center_mode="sometimes")
    with pytest.raises(ConfigError):
        make_cfg(center_mode="gradient", stage2_centers="binary")


def test_zero_epochs_returns_initial_state(blobs):
    cfg = make_cfg(stage1_epochs=0)
    net = init_net(cfg.layer_dims(2), 1)
    out, centers, log = T.train_stage1(net, blobs, cfg)
    assert out is net and not log.iterations
    expected = L.update_centers(embed(net, blobs.features), blobs.labels, 3, 1.1)
    np.testing.assert_array_equal(centers.centers, expected.centers)


def test_stage1_lowers_objective(blob_run):
    _, _, (_, _, log), _ = blob_run
    obj = log.objective(1)
    assert obj[-20:].mean() < obj[:20].mean()


def test_stage2_lowers_quantization_error(blob_run, blobs):
    _, _, (net1, _, _), (net2, _, _) = blob_run
    q1 = L.quantization_error(embed(net1, blobs.features))
    q2 = L.quantization_error(embed(net2, blobs.features))
    assert q2 < q1


def test_runs_are_deterministic(blobs, blob_run):
    cfg, net0, (net1, _, log1), _ = blob_run
    again, _, log = T.train_stage1(init_net(cfg.layer_dims(2), cfg.seed), blobs, cfg)
    assert log.to_csv() == log1.to_csv()
    assert log.refreshes == log1.refreshes
    for a, b in zip(net1.parameters(), again.parameters()):
        assert a.tobytes() == b.tobytes()


def test_stage2_zero_epochs_passthrough(blobs, blob_run):
    cfg, _, (net1, c1, _), _ = blob_run
    cfg0 = make_cfg(stage1_epochs=20, stage2_epochs=0)
    net, centers, log = T.train_stage2(net1, c1, blobs, cfg0)
    assert net is net1 and centers is c1 and not log.iterations


def test_log_is_well_formed(blob_run):
    _, _, (_, _, log1), (_, _, log2) = blob_run
    its = log1.column("iteration")
    assert np.all(np.diff(its) > 0)
    for col in ("loss", "penalty", "quant_error"):
        assert np.all(np.isfinite(log1.column(col)))
    lines = log1.to_csv().splitlines()
    assert lines[0] == "iteration,stage,loss,penalty,quant_error"
    assert len(lines) == len(log1.iterations) + 1
    # one refresh per epoch by default
    assert len(log1.refreshes) == 20
    assert all(r[1] == 2 for r in log2.refreshes)


def _hand_loop(net, centers, data, cfg, epochs):
    """Class-wise loss only, periodic refresh each epoch, stage-2 shuffle stream."""
    rng = np.random.default_rng([cfg.seed, 2])
    n, bs = len(data), cfg.batch_size
    losses = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        centers = L.update_centers(embed(net, data.features), data.labels,
                                   data.class_count, cfg.loss.alpha)
        for start in range(0, n, bs):
            rows = perm[start:start + bs]
            r, cache = forward(net, data.features[rows])
            loss, g = L.classwise_loss_grad(r, data.labels[rows], centers, cfg.loss)
            losses.append(loss)
            net = sgd_step(net, backward(net, cache, g), cfg.lr, cfg.weight_decay)
    return net, losses


def test_eta2_zero_equals_plain_classwise_continuation(blobs, blob_run):
    _, _, (net1, c1, _), _ = blob_run
    cfg = make_cfg(stage1_epochs=20, stage2_epochs=5, eta2=0.0)
    net2, _, log = T.train_stage2(net1, c1, blobs, cfg)
    ref_net, ref_losses = _hand_loop(net1, c1, blobs, cfg, 5)
    assert np.array_equal(log.column("loss"), np.array(ref_losses))
    assert np.all(log.column("penalty") == 0)
    for a, b in zip(net2.parameters(), ref_net.parameters()):
        assert a.tobytes() == b.tobytes()


def test_zero_lr_keeps_everything_fixed():
    ds = D.gen_blobs(4, 1, 3, seed=2)
    cfg = make_cfg(bits=6, classes=4, lr=0.0, stage1_epochs=1, stage2_epochs=0)
    result = T.train_full(ds, cfg)
    net0 = init_net(cfg.layer_dims(3), cfg.seed)
    expected = L.update_centers(embed(net0, ds.features), ds.labels, 4, 1.1)
    np.testing.assert_array_equal(result.centers.centers, expected.centers)
    for a, b in zip(result.net.parameters(), net0.parameters()):
        np.testing.assert_array_equal(a, b)


def test_refresh_and_steps_are_separate(blobs):
    # a period longer than the run means only the iteration-0 refresh happens
    cfg = make_cfg(stage1_epochs=3, center_update_period=10_000)
    net0 = init_net(cfg.layer_dims(2), cfg.seed)
    before = [p.copy() for p in net0.parameters()]
    net, centers, log = T.train_stage1(net0, blobs, cfg)
    for a, b in zip(before, net0.parameters()):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(centers.centers, T.compute_centers(net0, blobs, cfg).centers)
    assert len(log.refreshes) == 1


def test_custom_period_refresh_count(blobs):
    cfg = make_cfg(stage1_epochs=2, center_update_period=3, batch_size=16)
    _, _, log = T.train_stage1(init_net(cfg.layer_dims(2), 0), blobs, cfg)
    iters = len(log.iterations)
    assert iters == 2 * math.ceil(120 / 16)
    assert len(log.refreshes) == math.ceil(iters / 3)


def test_binary_stage2_centers(blobs, blob_run):
    _, _, (net1, c1, _), _ = blob_run
    cfg = make_cfg(stage1_epochs=20, stage2_epochs=2, stage2_centers="binary")
    _, centers, _ = T.train_stage2(net1, c1, blobs, cfg)
    assert centers.mode == "binary"
    assert set(np.unique(centers.centers)) <= {-1.0, 1.0}


def test_gradient_mode_moves_centers_each_step(blobs):
    cfg = make_cfg(stage1_epochs=1, center_mode="gradient", lr=0.05)
    net0 = init_net(cfg.layer_dims(2), cfg.seed)
    start = T.compute_centers(net0, blobs, cfg)
    _, centers, log = T.train_stage1(net0, blobs, cfg)
    assert not log.refreshes
    assert not np.allclose(centers.centers, start.centers)
    assert np.abs(centers.centers).max() <= 1.1


def test_empty_class_rejected():
    ds = D.LabeledDataset(np.zeros((3, 2)), [0, 0, 2], 3)
    with pytest.raises(CenterUpdateError):
        T.train_full(ds, make_cfg(bits=4, classes=3))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_iteration_and_stage(blobs):
    cfg = make_cfg(lr=1e12, stage1_epochs=5)
    with pytest.raises(TrainingError, match=r"iteration \d+, stage 1"):
        T.train_stage1(init_net(cfg.layer_dims(2), 0), blobs, cfg)


def test_multilabel_training_runs():
    ds = D.gen_multilabel_blobs(4, 15, 3, [[0], [1], [2], [3], [0, 1], [2, 3]], seed=8)
    cfg = make_cfg(bits=8, classes=4, multilabel=True, stage1_epochs=5, stage2_epochs=2)
    result = T.train_full(ds, cfg)
    assert len(result.codes) == len(ds)
    assert np.all(np.isfinite(result.log.column("loss")))


def test_multilabel_gradient_mode_runs():
    ds = D.gen_multilabel_blobs(3, 10, 3, [[0], [1], [2], [0, 2]], seed=8)
    cfg = make_cfg(bits=8, classes=3, multilabel=True, center_mode="gradient",
                   stage1_epochs=3, stage2_epochs=1)
    assert np.all(np.isfinite(T.train_full(ds, cfg).log.column("loss")))


def test_label_mode_mismatch():
    with pytest.raises(ConfigError):
        T.train_full(D.gen_blobs(2, 3, 2), make_cfg(bits=4, classes=2, multilabel=True))


def test_geometry_statistics():
    r = np.array([[0.0, 0.0], [2.0, 0.0], [10.0, 10.0]])
    ds = D.LabeledDataset(np.zeros((3, 1)), [0, 0, 1], 2)
    # class 0 variance 1, class 1 variance 0
    assert T.intra_class_variance(r, ds) == pytest.approx(0.5)
    assert T.inter_class_distance(np.array([[0.0, 0], [3, 4], [0, 0]])) == \
        pytest.approx((5 + 0 + 5) / 3)


def test_sigma_sq_trades_compactness_for_separation():
    # trained close to convergence with the larger step size
    ds = D.gen_blobs(10, 40, 16, seed=11)
    stats = []
    for s in (0.5, 2.0):
        cfg = make_cfg(bits=16, classes=10, sigma_sq=s, lr=0.05, stage1_epochs=150, seed=11)
        net, _, _ = T.train_stage1(init_net(cfg.layer_dims(16), cfg.seed), ds, cfg)
        r = embed(net, ds.features)
        stats.append((T.intra_class_variance(r, ds),
                      T.inter_class_distance(T.compute_centers(net, ds, cfg))))
    (var_small, dist_small), (var_big, dist_big) = stats
    assert var_big < var_small
    assert dist_big > dist_small
