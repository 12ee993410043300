import numpy as np
import pytest

from eqmatch import ndtensor as nd
from eqmatch.model import ModelConfig, init_model
from eqmatch.objective import (ObjectiveError, TrainBatch, corrupt, draw_batch,
                               eqm_loss, eqme_loss, fm_loss, gradient_target,
                               loss_for, uncond_fm_loss)
from eqmatch.optimizer import AdamW
from eqmatch.schedule import Schedule
from conftest import central_difference, rel_err

LINEAR = Schedule(kind="linear")
CONST = Schedule(kind="constant")
TRUNC4 = Schedule(kind="truncated", a=0.8, lam=4.0)


def batch_of(rng, n=6, d=2, labels=None):
    return draw_batch(rng, rng.standard_normal((n, d)), labels=labels)


def fresh_model(**kw):
    cfg = dict(input_dim=2, hidden=(8, 8), activation="silu", init_seed=5)
    cfg.update(kw)
    return init_model(ModelConfig(**cfg))


# ---------------------------------------------------------------------------
# corruption and targets


def test_corrupt_endpoints():
    x = np.array([[2.0, 0.0]])
    eps = np.array([[0.0, 2.0]])
    np.testing.assert_array_equal(corrupt(x, eps, np.array([1.0])), x)
    np.testing.assert_array_equal(corrupt(x, eps, np.array([0.0])), eps)


def test_corrupt_midpoint():
    got = corrupt([[2.0, 0.0]], [[0.0, 2.0]], np.array([0.5]))
    np.testing.assert_array_equal(got, [[1.0, 1.0]])


def test_corrupt_shape_mismatch():
    with pytest.raises(ObjectiveError):
        corrupt(np.zeros((2, 2)), np.zeros((3, 2)), np.array([0.5, 0.5]))


def test_target_zero_at_gamma_one():
    for sched in (LINEAR, TRUNC4, Schedule(kind="piecewise", a=0.8, b=1.4)):
        t = gradient_target(np.ones((4, 2)), np.zeros((4, 2)), np.ones(4), sched)
        np.testing.assert_array_equal(t, np.zeros((4, 2)))


def test_target_direction_at_gamma_zero():
    t = gradient_target([[1.0, 0.0]], [[0.0, 0.0]], np.array([0.0]), LINEAR)
    np.testing.assert_array_equal(t, [[-1.0, 0.0]])


def test_target_plateau_value():
    t = gradient_target([[1.0, 0.0]], [[0.0, 0.0]], np.array([0.5]), TRUNC4)
    np.testing.assert_array_equal(t, [[-4.0, 0.0]])


def test_batch_validation():
    with pytest.raises(ObjectiveError, match="gamma"):
        TrainBatch(x=np.zeros((3, 2)), eps=np.zeros((3, 2)), gamma=np.array([0.5, 2.0, 0.1]))
    with pytest.raises(ObjectiveError, match="per-sample"):
        TrainBatch(x=np.zeros((3, 2)), eps=np.zeros((3, 2)), gamma=np.array(0.5))


# ---------------------------------------------------------------------------
# losses


def test_eqm_loss_zero_on_exact_fit(rng):
    # zero-init model output is identically zero; make the target zero too
    m = fresh_model()
    b = batch_of(rng)
    b.gamma = np.ones_like(b.gamma)
    assert eqm_loss(m, b, LINEAR).item() == 0.0


def test_eqm_loss_equals_mean_target_square_for_zero_model(rng):
    m = fresh_model()
    b = batch_of(rng)
    target = gradient_target(b.x, b.eps, b.gamma, LINEAR)
    assert eqm_loss(m, b, LINEAR).item() == pytest.approx(np.mean(target ** 2), rel=1e-12)


def test_eqm_rejects_non_equilibrium_without_override(rng):
    m = fresh_model()
    b = batch_of(rng)
    with pytest.raises(ObjectiveError, match="vanish"):
        eqm_loss(m, b, CONST)
    assert eqm_loss(m, b, CONST, allow_non_equilibrium=True).item() >= 0.0


def test_eqm_rejects_energy_models(rng):
    m = fresh_model(energy_kind="dot")
    with pytest.raises(ObjectiveError, match="implicit"):
        eqm_loss(m, batch_of(rng), LINEAR)


def negated_copy(model):
    """Exact output negation: flip the final layer."""
    out = init_model(model.config)
    out.params = {k: v.copy() for k, v in model.params.items()}
    last = len(model.config.hidden)
    out.params[f"layers.{last}.w"] = -out.params[f"layers.{last}.w"]
    out.params[f"layers.{last}.b"] = -out.params[f"layers.{last}.b"]
    return out


def test_negation_duality_with_constant_schedule():
    """With c == 1 the eqm objective of f equals the fm objective of -f,
    bit-for-bit on random batches."""
    for seed in range(50):
        rng = np.random.default_rng(seed)
        m = fresh_model(init_seed=seed)
        m.params["layers.2.w"] = 0.5 * rng.standard_normal((8, 2))
        m.params["layers.2.b"] = 0.1 * rng.standard_normal(2)
        b = batch_of(rng, n=16)
        lhs = eqm_loss(m, b, CONST, allow_non_equilibrium=True).item()
        rhs = uncond_fm_loss(negated_copy(m), b).item()
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_fm_loss_conditioning_contracts(rng):
    cond = fresh_model(noise_conditioned=True)
    plain = fresh_model()
    b = batch_of(rng)
    assert fm_loss(cond, b).item() >= 0.0
    with pytest.raises(ObjectiveError):
        fm_loss(plain, b)
    with pytest.raises(ObjectiveError):
        uncond_fm_loss(cond, b)


def test_fm_target_is_velocity_not_zero_at_gamma_one(rng):
    m = fresh_model()
    b = batch_of(rng)
    b.gamma = np.ones_like(b.gamma)
    fm = uncond_fm_loss(m, b).item()
    eq = eqm_loss(m, b, LINEAR).item()
    assert eq == 0.0 and fm == pytest.approx(np.mean((b.x - b.eps) ** 2), rel=1e-12)


def test_eqme_loss_zero_when_gradient_matches(rng):
    """Identity-field dot energy has gradient 2x at the corrupted point; with
    gamma=0 and x = -eps the target (eps - x) is exactly that gradient."""
    from test_model import identity_model
    m = identity_model("dot")
    eps = rng.standard_normal((4, 2))
    b = TrainBatch(x=-eps, eps=eps, gamma=np.zeros(4), labels=None)
    loss = eqme_loss(m, b, CONST, allow_non_equilibrium=True)
    assert loss.item() == pytest.approx(0.0, abs=1e-24)


def test_eqme_requires_energy_head(rng):
    with pytest.raises(ObjectiveError, match="energy"):
        eqme_loss(fresh_model(), batch_of(rng), LINEAR)


def test_eqme_parameter_gradients_match_fd():
    """Second-order path: gradients of the gradient-matching loss vs FD."""
    rng = np.random.default_rng(42)
    m = fresh_model(energy_kind="dot", hidden=(8,), init_seed=7)
    m.params["layers.1.w"] = 0.5 * rng.standard_normal((8, 2))
    b = batch_of(rng, n=3)

    loss = eqme_loss(m, b, LINEAR)
    grads = nd.backward(loss)
    bound = m._bind(loss.graph)
    for name in m.params:
        def fn(v, _name=name):
            saved = m.params[_name]
            m.params[_name] = v
            try:
                return eqme_loss(m, b, LINEAR).item()
            finally:
                m.params[_name] = saved

        want = central_difference(fn, m.params[name])
        got = nd.grad_values(grads, bound[name])
        assert rel_err(got, want) < 1e-4, name


@pytest.mark.parametrize("kind", ["dot", "l2norm"])
def test_eqme_smoke_training_reduces_loss(kind):
    """200 optimizer steps on one fixed point must cut the loss."""
    rng = np.random.default_rng(0)
    m = fresh_model(energy_kind=kind, init_seed=1)
    # break the zero init so the l2norm construction has signal to shape
    m.params["layers.2.w"] = 0.3 * rng.standard_normal((8, 2))
    opt = AdamW(lr=1e-2)
    x = np.array([[1.0, -0.5]])
    first = None
    for step in range(200):
        b = TrainBatch(x=x, eps=rng.standard_normal((1, 2)),
                       gamma=rng.uniform(0, 1, 1))
        loss = eqme_loss(m, b, LINEAR)
        if first is None:
            first = loss.item()
        grads = nd.backward(loss)
        bound = m._bind(loss.graph)
        opt.step(m.params, {k: nd.grad_values(grads, bound[k]) for k in m.params})
    last_rng = np.random.default_rng(123)
    b = TrainBatch(x=x, eps=last_rng.standard_normal((1, 2)),
                   gamma=last_rng.uniform(0, 1, 1))
    assert eqme_loss(m, b, LINEAR).item() < first


def test_loss_for_dispatch(rng):
    b = batch_of(rng)
    assert loss_for("eqm", fresh_model(), b, LINEAR).item() >= 0.0
    assert loss_for("uncond-fm", fresh_model(), b, LINEAR).item() >= 0.0
    with pytest.raises(ObjectiveError, match="unknown objective"):
        loss_for("score", fresh_model(), b, LINEAR)


def test_conditional_model_needs_labels(rng):
    m = fresh_model(num_classes=3)
    with pytest.raises(ObjectiveError, match="labels"):
        eqm_loss(m, batch_of(rng), LINEAR)
    b = batch_of(rng, labels=np.array([0, 1, 2, 0, 1, 2]))
    assert eqm_loss(m, b, LINEAR).item() >= 0.0
