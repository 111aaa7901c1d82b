import numpy as np
import pytest
from spatial_attention_pyramid import (
    LAMBDA_PRESETS,
    Adam,
    Parameter,
    SAPNet,
    SyntheticDataset,
    TrainConfig,
    Trainer,
    adam_step,
    evaluate,
    train
)
from spatial_attention_pyramid.exceptions import ConfigurationError, DataFormatError, NumericalError
from spatial_attention_pyramid.trainer import METRICS_COLUMNS, resolve_lambda
from .toy import toy_model_config, toy_scene, toy_train_config


def toy_dataset():
    return SyntheticDataset.generate(count=4, seed=0, spec=toy_scene(), verbose=False)


def test_train_config_validation():
    config = TrainConfig()
    assert (config.iterations, config.pretrain_iterations, config.milestones) == (9000, 1000, (7000, 8000))
    assert TrainConfig.full_schedule().learning_rate == 1e-5
    assert TrainConfig.full_schedule().milestones == (70000, 80000)
    with pytest.raises(ConfigurationError):
        TrainConfig(milestones=(8000, 7000))
    with pytest.raises(ConfigurationError):
        TrainConfig(milestones=(9000,))
    with pytest.raises(ConfigurationError):
        TrainConfig(source_batch=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(target_batch=0)
    assert TrainConfig(target_batch=0, source_only=True).target_batch == 0


def test_lambda_presets():
    assert TrainConfig(lam="cityscapes_to_foggy").lam == 1.0
    assert resolve_lambda("0.25") == 0.25
    assert LAMBDA_PRESETS["cityscapes_to_kitti"] == 0.01
    with pytest.raises(ConfigurationError, match="cityscapes_to_foggy"):
        resolve_lambda("cityscapes_to_fogy")
    with pytest.raises(ConfigurationError):
        resolve_lambda(-1)


def test_learning_rate_schedule():
    config = TrainConfig(learning_rate=1e-3)
    assert config.learning_rate_at(6999) == 1e-3
    assert config.learning_rate_at(7000) == 1e-3/10
    assert config.learning_rate_at(8000) == 1e-3/100
    assert not config.is_adversarial(999)
    assert config.is_adversarial(1000)
    assert not TrainConfig(source_only=True).is_adversarial(5000)


def test_adam_zero_gradient():
    value, m, v = adam_step(np.ones(3), np.zeros(3), np.zeros(3), np.zeros(3), 1, 0.1)
    assert np.array_equal(value, np.ones(3))
    value, m, v = adam_step(np.ones(3), np.zeros(3), np.full(3, 0.5), np.full(3, 0.5), 2, 0.1)
    assert np.allclose(m, 0.45)
    assert np.allclose(v, 0.4995)


def test_adam_scalar_oracle():
    learning_rate, beta1, beta2, eps = 0.01, 0.9, 0.999, 1e-8
    parameter = Parameter("w", np.array([2.0]))
    optimizer = Adam(beta1, beta2, eps)
    value, m, v = 2.0, 0.0, 0.0
    for t, g in enumerate([0.5, -1.5, 3.0], start=1):
        parameter.grad = np.array([g])
        optimizer.step([parameter], learning_rate)
        m = beta1*m + (1 - beta1)*g
        v = beta2*v + (1 - beta2)*g*g
        value -= learning_rate*(m/(1 - beta1**t))/(np.sqrt(v/(1 - beta2**t)) + eps)
        assert abs(parameter.value[0] - value) < 1e-15
    assert optimizer.t["w"] == 3
    # First step moves by about the learning rate whatever the gradient scale.
    first, _, _ = adam_step(np.zeros(1), np.array([1e-3]), np.zeros(1), np.zeros(1), 1, 0.01)
    assert np.isclose(first[0], -0.01, rtol=1e-4)


def test_adam_rejects_non_finite_gradients():
    parameter = Parameter("pyramid.squeeze.weight", np.ones(2))
    parameter.grad = np.array([1.0, np.nan])
    with pytest.raises(NumericalError, match="pyramid.squeeze.weight"):
        Adam().step([parameter], 0.1)
    assert np.array_equal(parameter.value, np.ones(2))


def test_pretraining_leaves_the_pyramid_untouched():
    model = SAPNet(toy_model_config(), seed=0)
    before = {p.name: p.value.copy() for p in model.parameters()}
    trainer = Trainer(model, toy_train_config(), toy_dataset())
    trainer.run(iterations=3, verbose=False)
    for parameter in model.adversarial_parameters():
        assert np.array_equal(parameter.value, before[parameter.name])
    assert any(not np.array_equal(p.value, before[p.name]) for p in model.task_parameters())
    assert all(name.startswith(("backbone", "head")) for name in trainer.optimizer.t)


def test_training_log_and_determinism():
    dataset = toy_dataset()
    first, metrics = train(toy_model_config(), toy_train_config(), dataset, verbose=False)
    second, again = train(toy_model_config(), toy_train_config(), dataset, verbose=False)
    assert list(metrics.columns) == METRICS_COLUMNS
    assert metrics.iter.tolist() == [2, 4, 6]
    assert np.isnan(metrics.adv_loss[0])
    assert np.isfinite(metrics.adv_loss[2])
    assert np.allclose(metrics.lr, [1e-3, 1e-3, 5.5e-4])
    assert metrics.equals(again)
    assert first.to_bytes() == second.to_bytes()
    assert first.iteration == 6


def test_zero_lambda_matches_source_only():
    dataset = toy_dataset()
    adapted, _ = train(toy_model_config(), toy_train_config(lam=0.0), dataset, verbose=False)
    baseline, _ = train(toy_model_config(), toy_train_config(source_only=True), dataset, verbose=False)
    task = [name for name in baseline.tensors if name.startswith("param/") and not name.startswith("param/pyramid")]
    task = [name for name in task if not name.startswith("param/discriminator")]
    assert task
    for name in task:
        assert np.array_equal(adapted.tensors[name], baseline.tensors[name])


def test_trainer_needs_target_samples():
    source = toy_dataset().domain(0)
    with pytest.raises(DataFormatError):
        Trainer(SAPNet(toy_model_config()), toy_train_config(), source)
    Trainer(SAPNet(toy_model_config()), toy_train_config(source_only=True), source)


def test_evaluate():
    dataset = SyntheticDataset.generate(count=3, seed=5, spec=toy_scene(), target_labels=True, verbose=False)
    scores = evaluate(SAPNet(toy_model_config()), dataset.domain(1))
    assert {"iou_0", "iou_1", "iou_2", "iou_3", "miou", "pixel_accuracy", "disc_acc"} <= set(scores)
    assert 0 <= scores["pixel_accuracy"] <= 1
    assert 0 <= scores["disc_acc"] <= 1


def test_repeated_step_gives_identical_gradients():
    dataset = toy_dataset()
    trainers = [Trainer(SAPNet(toy_model_config(), seed=3), toy_train_config(), dataset) for _ in range(2)]
    for iteration in range(5):
        records = [trainer.step() for trainer in trainers]
        assert records[0] == records[1] or np.isnan(records[0]["adv_loss"])
        first, second = (trainer.model.named_parameters() for trainer in trainers)
        assert first.keys() == second.keys()
        for name, parameter in first.items():
            assert np.array_equal(parameter.grad, second[name].grad), (iteration, name)
    assert trainers[0].config.is_adversarial(4)
    assert any(np.any(p.grad) for p in trainers[0].model.adversarial_parameters())
