import numpy as np
import pytest

from gpgd.nets import (
    Activation,
    CheckpointError,
    DenseLayer,
    DenseNet,
    NonFiniteLoss,
    TrainConfig,
    adam_state_for,
    adam_step,
    forward,
    forward_batch,
    load_checkpoint,
    loss_and_grad,
    make_net,
    save_checkpoint,
    sor_value,
    stochastic_gradient_unbiasedness_check,
    train,
)
from gpgd.theory import psi


def identity_net(n):
    return DenseNet([DenseLayer(np.eye(n), np.zeros(n), Activation("identity"))])


def flatten(grads):
    return np.concatenate([np.concatenate([g.ravel(), b]) for g, b in grads])


# --- forward ---------------------------------------------------------------


def test_forward_identity_layer():
    net = identity_net(3)
    x = np.array([0.3, -0.2, 0.9])
    assert np.array_equal(forward(net, x), x)


def test_forward_leaky_relu():
    net = DenseNet([DenseLayer(np.eye(2), np.zeros(2), Activation("leaky_relu", 0.01))])
    assert np.allclose(forward(net, [-1.0, 2.0]), [-0.01, 2.0])


def test_forward_two_layer_matches_manual_oracle():
    rng = np.random.default_rng(0)
    W1 = rng.standard_normal((4, 6))
    b1 = rng.standard_normal(4)
    W2 = rng.standard_normal((6, 4))
    b2 = rng.standard_normal(6)
    net = DenseNet(
        [
            DenseLayer(W1, b1, Activation("leaky_relu", 0.01)),
            DenseLayer(W2, b2, Activation("identity")),
        ]
    )
    x = rng.standard_normal(6)
    z1 = W1 @ x + b1
    a1 = np.where(z1 >= 0, z1, 0.01 * z1)
    expected = W2 @ a1 + b2
    assert np.allclose(forward(net, x), expected, atol=1e-14)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(identity_net(3), np.zeros(4))


def test_net_requires_matching_in_out():
    with pytest.raises(ValueError):
        DenseNet([DenseLayer(np.zeros((3, 5)), np.zeros(3), Activation("identity"))])


# --- loss and gradient ------------------------------------------------------


def test_data_term_zero_on_fixed_points():
    net = identity_net(4)
    cfg = TrainConfig(lam=0.0, batch_size=2)
    batch = np.random.default_rng(1).uniform(0, 1, (2, 4))
    loss, grads = loss_and_grad(net, batch, np.zeros((2, 4)), cfg)
    assert loss == 0.0
    assert np.all(flatten(grads) == 0.0)


def test_single_layer_least_squares_gradient():
    # analytic oracle: loss = ||Wx + b - x||^2 / n for one sample, so
    # dW = 2 r x^T / n and db = 2 r / n with r = Wx + b - x
    rng = np.random.default_rng(2)
    W = rng.standard_normal((5, 5))
    b = rng.standard_normal(5)
    net = DenseNet([DenseLayer(W.copy(), b.copy(), Activation("identity"))])
    x = rng.uniform(0, 1, 5)
    cfg = TrainConfig(lam=0.0, batch_size=1)
    _, grads = loss_and_grad(net, x.reshape(1, -1), np.zeros((1, 5)), cfg)
    r = W @ x + b - x
    assert np.allclose(grads[0][0], 2.0 * np.outer(r, x) / 5.0, atol=1e-14)
    assert np.allclose(grads[0][1], 2.0 * r / 5.0, atol=1e-14)


@pytest.mark.parametrize("mode", ["AE", "PnP"])
@pytest.mark.parametrize("lam", [0.0, 0.4])
def test_gradient_matches_finite_differences(mode, lam):
    rng = np.random.default_rng(3)
    net = make_net((6, 4, 6), seed=7)
    cfg = TrainConfig(lam=lam, mode=mode, batch_size=3, xi=0.1)
    X = rng.uniform(0, 1, (3, 6))
    Z = rng.uniform(0, 1, (3, 6))
    _, grads = loss_and_grad(net, X, Z, cfg, noise_seed=11)
    bp = flatten(grads)
    theta = net.params_vector()
    h = 1e-5
    fd = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += h
        net.set_params_vector(up)
        lp, _ = loss_and_grad(net, X, Z, cfg, noise_seed=11)
        dn = theta.copy()
        dn[i] -= h
        net.set_params_vector(dn)
        lm, _ = loss_and_grad(net, X, Z, cfg, noise_seed=11)
        fd[i] = (lp - lm) / (2.0 * h)
    net.set_params_vector(theta)
    assert np.max(np.abs(bp - fd) / (1.0 + np.abs(fd))) <= 1e-4


def test_loss_batches_must_pair():
    net = identity_net(3)
    with pytest.raises(ValueError):
        loss_and_grad(net, np.zeros((2, 3)), np.zeros((3, 3)), TrainConfig())


def test_non_finite_loss_names_term():
    net = DenseNet(
        [DenseLayer(np.full((3, 3), 1e200), np.zeros(3), Activation("identity"))]
    )
    with pytest.raises(NonFiniteLoss) as exc:
        with np.errstate(over="ignore", invalid="ignore"):
            loss_and_grad(net, np.ones((1, 3)), np.ones((1, 3)), TrainConfig())
    assert exc.value.term == "data"


# --- orthogonality penalty ---------------------------------------------------


def test_sor_zero_for_affine_orthogonal_projection():
    # net computing an exact orthogonal projection onto a 2-D subspace
    rng = np.random.default_rng(4)
    q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    net = DenseNet([DenseLayer(q @ q.T, np.zeros(6), Activation("identity"))])
    z = rng.uniform(0, 1, (64, 6))
    res = sor_value(net, z)
    assert res.value <= 1e-9


def test_sor_identity_net_all_degenerate():
    net = identity_net(5)
    z = np.random.default_rng(5).uniform(0, 1, (32, 5))
    res = sor_value(net, z)
    assert res.value == 0.0
    assert res.degenerate == 32


def test_sor_matches_external_psi_average():
    net = make_net((6, 4, 6), seed=8)
    z = np.random.default_rng(6).uniform(0, 1, (256, 6))
    res = sor_value(net, z)
    proj = lambda v: forward(net, v)
    vals = [psi(proj, zi) for zi in z]
    external = sum(v for v in vals if v is not None) / len(z)
    assert res.value == pytest.approx(external, abs=1e-12)


def test_sor_inside_loss_matches_external_average():
    net = make_net((6, 4, 6), seed=9)
    rng = np.random.default_rng(7)
    X = rng.uniform(0, 1, (8, 6))
    Z = rng.uniform(0, 1, (8, 6))
    cfg = TrainConfig(lam=0.4, batch_size=8)
    loss, _ = loss_and_grad(net, X, Z, cfg)
    out, _ = forward_batch(net, X)
    data = float(np.mean((out - X) ** 2))
    assert loss - data == pytest.approx(0.4 * sor_value(net, Z).value, abs=1e-12)


# --- Adam ---------------------------------------------------------------------


def test_adam_zero_gradient_no_move():
    net = make_net((4, 3, 4), seed=10)
    before = net.params_vector()
    state = adam_state_for(net)
    zero = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]
    adam_step(net, zero, state, tau=0.1)
    assert np.array_equal(net.params_vector(), before)
    assert state.step == 1


def test_adam_first_step_closed_form():
    net = identity_net(2)
    before = net.params_vector()
    g = np.array([[1.0, -2.0], [3.0, 0.25]]), np.array([0.5, -2.0])
    grads = [g]
    state = adam_state_for(net)
    adam_step(net, grads, state, tau=0.01)
    delta = net.params_vector() - before
    g_flat = np.concatenate([g[0].ravel(), g[1]])
    expected = -0.01 * g_flat / (np.abs(g_flat) + 1e-8)
    assert np.allclose(delta, expected, atol=1e-15)


def test_adam_constant_gradient_step_magnitude_approaches_tau():
    net = identity_net(1)
    state = adam_state_for(net)
    g = [(np.array([[3.0]]), np.array([0.0]))]
    tau = 0.05
    prev = net.params_vector()[0]
    for _ in range(200):
        prev = net.params_vector()[0]
        adam_step(net, g, state, tau)
    step = abs(net.params_vector()[0] - prev)
    assert step == pytest.approx(tau, rel=1e-6)


# --- training -----------------------------------------------------------------


def test_train_zero_epochs_unchanged():
    net = make_net((4, 3, 4), seed=11)
    before = net.params_vector()
    data = np.random.default_rng(8).uniform(0, 1, (6, 4))
    net, history = train(net, data, TrainConfig(epochs=0, batch_size=2))
    assert np.array_equal(net.params_vector(), before)
    assert history == []


def test_train_deterministic_per_seed():
    data = np.random.default_rng(9).uniform(0, 1, (10, 4))
    cfg = TrainConfig(lam=0.2, epochs=3, batch_size=4, seed=123)
    n1, _ = train(make_net((4, 3, 4), seed=12), data, cfg)
    n2, _ = train(make_net((4, 3, 4), seed=12), data, cfg)
    assert np.array_equal(n1.params_vector(), n2.params_vector())


def test_train_replay_oracle():
    # step-by-step replay with the documented seed-stream layout: probe,
    # shuffle, z, noise spawned in that order from SeedSequence(cfg.seed)
    data = np.random.default_rng(10).uniform(0, 1, (4, 3))
    cfg = TrainConfig(lam=0.3, tau=0.01, epochs=2, batch_size=2, seed=77)
    trained, _ = train(make_net((3, 3), seed=13), data, cfg)

    replica = make_net((3, 3), seed=13)
    probe_ss, shuffle_ss, z_ss, noise_ss = np.random.SeedSequence(77).spawn(4)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    z_rng = np.random.default_rng(z_ss)
    state = adam_state_for(replica)
    for _ in range(2):
        perm = shuffle_rng.permutation(4)
        for start in (0, 2):
            idx = perm[start : start + 2]
            zb = z_rng.uniform(size=(2, 3))
            _, grads = loss_and_grad(replica, data[idx], zb, cfg, 0)
            adam_step(replica, grads, state, cfg.tau, *cfg.adam)
    assert np.array_equal(trained.params_vector(), replica.params_vector())


def test_train_rejects_out_of_range_data():
    net = make_net((3, 3), seed=14)
    with pytest.raises(ValueError):
        train(net, np.array([[0.5, 1.5, 0.0]]), TrainConfig(epochs=1))


def test_train_history_records():
    data = np.random.default_rng(11).uniform(0, 1, (8, 4))
    _, history = train(make_net((4, 2, 4), seed=15), data,
                       TrainConfig(epochs=3, batch_size=4))
    assert [h.epoch for h in history] == [0, 1, 2]
    assert all(np.isfinite(h.data_loss) and np.isfinite(h.probe_mean_psi)
               for h in history)


def test_train_lambda_reduces_probe_psi():
    # regularized training ends with lower probe-set orthogonality defect
    data = np.random.default_rng(12).uniform(0, 1, (40, 9))
    base_cfg = dict(tau=2e-3, epochs=60, batch_size=8, seed=5)
    _, h0 = train(make_net((9, 6, 3, 6, 9), seed=16), data,
                  TrainConfig(lam=0.0, **base_cfg))
    _, h1 = train(make_net((9, 6, 3, 6, 9), seed=16), data,
                  TrainConfig(lam=0.4, **base_cfg))
    assert h1[-1].probe_mean_psi < h0[-1].probe_mean_psi


# --- unbiasedness -------------------------------------------------------------


def test_unbiasedness_full_batch_lambda_zero_exact():
    data = np.random.default_rng(13).uniform(0, 1, (6, 4))
    net = make_net((4, 3, 4), seed=17)
    cfg = TrainConfig(lam=0.0, batch_size=6)
    report = stochastic_gradient_unbiasedness_check(net, data, cfg, trials=20)
    assert report.frac_within_4se == 1.0
    assert report.max_abs_z == 0.0


def test_unbiasedness_single_trial_no_assertion():
    data = np.random.default_rng(14).uniform(0, 1, (6, 4))
    net = make_net((4, 3, 4), seed=18)
    cfg = TrainConfig(lam=0.4, batch_size=3)
    report = stochastic_gradient_unbiasedness_check(net, data, cfg, trials=1,
                                                    mc_points=2000)
    assert report.trials == 1
    assert report.frac_within_4se == 1.0  # no assertion content at one trial


def test_unbiasedness_rejects_pnp():
    data = np.random.default_rng(15).uniform(0, 1, (6, 4))
    net = make_net((4, 3, 4), seed=19)
    with pytest.raises(ValueError):
        stochastic_gradient_unbiasedness_check(
            net, data, TrainConfig(mode="PnP", xi=0.1, batch_size=3), trials=2
        )


def test_unbiasedness_error_shrinks_at_root_trials_rate():
    # SOR-gradient averaging error should follow ~ 1/sqrt(trials): the
    # log-log slope over two decades sits near -0.5
    data = np.random.default_rng(16).uniform(0, 1, (8, 6))
    net = make_net((6, 4, 6), seed=20)
    cfg = TrainConfig(lam=0.4, batch_size=8)  # full batch: only SOR noise

    out, caches = forward_batch(net, data)
    from gpgd.nets import _backward_batch, _flatten_grads, _psi_batch_and_grad

    resid = out - data
    data_grad = _flatten_grads(
        _backward_batch(net, caches, 2.0 * resid / resid.size)
    )
    # high-precision reference (1e6 points, chunked) so its own Monte-Carlo
    # error does not flatten the measured slope at large trial counts
    rng = np.random.default_rng(21)
    sor_ref = np.zeros(net.n_params())
    n_chunks, per_chunk = 10, 100_000
    for _ in range(n_chunks):
        zc = rng.uniform(size=(per_chunk, 6))
        outz, cz = forward_batch(net, zc)
        _, dpsi, _ = _psi_batch_and_grad(outz, zc, 1e-9)
        sor_ref += _flatten_grads(
            _backward_batch(net, cz, dpsi / (per_chunk * n_chunks))
        )
    ref = data_grad + 0.4 * sor_ref

    errors = []
    for trials in (100, 10_000):
        acc = np.zeros(net.n_params())
        for _ in range(trials):
            zb = rng.uniform(size=(8, 6))
            _, grads = loss_and_grad(net, data, zb, cfg)
            acc += _flatten_grads(grads)
        errors.append(np.linalg.norm(acc / trials - ref))
    slope = (np.log10(errors[1]) - np.log10(errors[0])) / 2.0
    assert -0.65 <= slope <= -0.35


# --- checkpoints ---------------------------------------------------------------


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    net = make_net((6, 4, 2, 4, 6), seed=22)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.dims == net.dims
    assert back.latent_index == net.latent_index
    assert np.array_equal(back.params_vector(), net.params_vector())
    for a, b in zip(back.layers, net.layers):
        assert a.activation == b.activation


def test_checkpoint_truncated(tmp_path):
    net = make_net((4, 3, 4), seed=23)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(CheckpointError) as exc:
        load_checkpoint(path)
    assert exc.value.offset > 0


def test_checkpoint_architecture_mismatch(tmp_path):
    net = make_net((4, 3, 4), seed=24)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    raw = path.read_bytes()
    header, _, blob = raw.partition(b"\n")
    tampered = header.replace(b"[4,3,4]", b"[4,4,4]")
    path.write_bytes(tampered + b"\n" + blob)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_missing_header(tmp_path):
    path = tmp_path / "net.ckpt"
    path.write_bytes(b"\x00\x01\x02\x03")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
