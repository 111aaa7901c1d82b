import numpy as np
import pytest
from spatial_attention_pyramid import Checkpoint, SAPNet, SyntheticDataset, Trainer, train
from spatial_attention_pyramid.exceptions import DataFormatError
from .toy import toy_model_config, toy_scene, toy_train_config


def small_checkpoint() -> Checkpoint:
    return Checkpoint(
        12,
        "train.lam=1.0\n",
        {
            "param/head.classifier.weight": np.arange(6, dtype=np.float64).reshape(2, 3),
            "adam_t/head.classifier.weight": np.array(3.0),
            "bn/pyramid.reduce.norm/running_mean": np.zeros(4, dtype=np.float32)
        }
    )


def test_checkpoint_bytes_are_stable(tmp_path):
    checkpoint = small_checkpoint()
    path = str(tmp_path / "run" / "checkpoint.sapc")
    checkpoint.save(path)
    loaded = Checkpoint.load(path)
    assert loaded.iteration == 12
    assert loaded.config == "train.lam=1.0\n"
    assert loaded.to_bytes() == checkpoint.to_bytes()
    for name, tensor in checkpoint.tensors.items():
        assert loaded.tensors[name].dtype == tensor.dtype
        assert np.array_equal(loaded.tensors[name], tensor)
    assert set(loaded.subset("param/")) == {"head.classifier.weight"}


def test_checkpoint_rejects_bad_files(tmp_path):
    data = small_checkpoint().to_bytes()
    with pytest.raises(DataFormatError):
        Checkpoint.from_bytes(b"NOPE" + data[4:])
    with pytest.raises(DataFormatError):
        Checkpoint.from_bytes(data[:len(data)//2])
    with pytest.raises(DataFormatError):
        Checkpoint.load(str(tmp_path / "missing.sapc"))


def test_resume_reproduces_the_uninterrupted_run():
    dataset = SyntheticDataset.generate(count=4, seed=3, spec=toy_scene(), verbose=False)
    config = toy_train_config()
    uninterrupted, _ = train(toy_model_config(), config, dataset, verbose=False)

    first = Trainer(SAPNet(toy_model_config()), config, dataset)
    first.run(iterations=4, verbose=False)
    halfway = Checkpoint.from_bytes(first.checkpoint().to_bytes())
    assert halfway.iteration == 4

    second = Trainer(SAPNet(toy_model_config(), seed=11), config, dataset)
    second.restore(halfway)
    second.run(verbose=False)
    assert second.checkpoint().to_bytes() == uninterrupted.to_bytes()


def test_restore_rejects_foreign_checkpoints():
    dataset = SyntheticDataset.generate(count=2, seed=0, spec=toy_scene(), verbose=False)
    trainer = Trainer(SAPNet(toy_model_config()), toy_train_config(), dataset)
    with pytest.raises(DataFormatError):
        trainer.restore(small_checkpoint())
