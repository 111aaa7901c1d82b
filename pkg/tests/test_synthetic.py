import os

import numpy as np
import pytest
from spatial_attention_pyramid import SceneSpec, SyntheticDataset, generate
from spatial_attention_pyramid.exceptions import ConfigurationError, DataFormatError
from spatial_attention_pyramid.synthetic import MANIFEST
from .toy import toy_scene


def test_scene_validation():
    with pytest.raises(ConfigurationError):
        SceneSpec(image_size=16, max_radius=8)
    with pytest.raises(ConfigurationError):
        SceneSpec(min_shapes=3, max_shapes=2)
    with pytest.raises(ConfigurationError):
        SceneSpec(haze_alpha=1.5)
    with pytest.raises(ConfigurationError):
        SceneSpec(color_shift=(0.1, 0.2))
    with pytest.raises(ConfigurationError):
        generate(0, 0, 1)
    with pytest.raises(ConfigurationError):
        generate(2, 1, 1)


def test_generation_is_deterministic():
    first = generate(1, 3, seed=9, spec=toy_scene())
    second = generate(1, 3, seed=9, spec=toy_scene())
    for a, b in zip(first, second):
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.label, b.label)
    other = generate(1, 3, seed=10, spec=toy_scene())
    assert not all(np.array_equal(a.image, b.image) for a, b in zip(first, other))


def test_samples_are_well_formed():
    for sample in generate(1, 5, seed=2, spec=toy_scene()):
        assert sample.image.shape == (3, 16, 16)
        assert sample.label.shape == (16, 16)
        assert sample.image.min() >= 0 and sample.image.max() <= 1
        assert np.array_equal(np.round(sample.image*255)/255, sample.image)
        assert set(np.unique(sample.label)) <= {0, 1, 2, 3}
        assert sample.domain == 1


def test_zero_severity_target_matches_source():
    spec = SceneSpec(image_size=16, min_radius=2, max_radius=5, noise_sigma=0.0, haze_alpha=0.0, color_shift=(0, 0, 0))
    for source, target in zip(generate(0, 4, 5, spec), generate(1, 4, 5, spec)):
        assert np.array_equal(source.image, target.image)
        assert np.array_equal(source.label, target.label)


def test_target_style_changes_images():
    source, = generate(0, 1, 5, toy_scene())
    target, = generate(1, 1, 5, toy_scene())
    assert np.array_equal(source.label, target.label)
    assert not np.array_equal(source.image, target.image)


def test_dataset_domains_and_labels():
    dataset = SyntheticDataset.generate(count=3, seed=1, spec=toy_scene(), verbose=False)
    assert len(dataset) == 6
    assert dataset.domains.tolist() == [0, 0, 0, 1, 1, 1]
    assert dataset.domain(0).labels.shape == (3, 16, 16)
    assert all(sample.label is None for sample in dataset.domain(1))
    with pytest.raises(DataFormatError):
        dataset.labels
    with pytest.raises(DataFormatError, match="target"):
        dataset.domain(0).domain(1)
    labelled = SyntheticDataset.generate(count=3, seed=1, spec=toy_scene(), target_labels=True, verbose=False)
    assert labelled.labels.shape == (6, 16, 16)


def test_class_frequencies_match_across_domains():
    dataset = SyntheticDataset.generate(count=200, seed=0, spec=toy_scene(), target_labels=True, verbose=False)
    source = dataset.domain(0).class_frequencies()
    target = dataset.domain(1).class_frequencies()
    assert np.isclose(source.sum(), 1.0)
    assert np.all(source > 0)
    assert np.abs(source - target).max() < 0.05


def test_save_and_load(tmp_path):
    dataset = SyntheticDataset.generate(count=2, seed=4, spec=toy_scene(), verbose=False)
    directory = str(tmp_path / "data")
    dataset.save(directory)
    with open(os.path.join(directory, MANIFEST)) as f:
        lines = f.read().splitlines()
    assert lines[0] == "source_00000.ppm source_00000_label.pgm 0"
    assert lines[-1] == "target_00003.ppm - 1"
    loaded = SyntheticDataset.load(directory)
    assert np.array_equal(loaded.images, dataset.images)
    assert np.array_equal(loaded.domains, dataset.domains)
    assert np.array_equal(loaded.domain(0).labels, dataset.domain(0).labels)
    assert loaded[3].label is None


def test_load_reports_manifest_lines(tmp_path):
    directory = str(tmp_path / "data")
    SyntheticDataset.generate(count=1, seed=4, spec=toy_scene(), verbose=False).save(directory)
    with open(os.path.join(directory, MANIFEST), "a") as f:
        f.write("target_00009.ppm - 2\n")
    with pytest.raises(DataFormatError, match="line 3"):
        SyntheticDataset.load(directory)
    with open(os.path.join(directory, MANIFEST), "w") as f:
        f.write("missing.ppm - 0\n")
    with pytest.raises(DataFormatError, match="line 1"):
        SyntheticDataset.load(directory)
    with pytest.raises(DataFormatError):
        SyntheticDataset.load(str(tmp_path / "nowhere"))
