"""Line-oriented key=value run configuration.

Keys are dotted as ``<section>.<field>`` where the section is one of
``model``, ``pyramid``, ``scene`` and ``train``, and the field is a field of
the matching configuration dataclass. Lines starting with ``#`` and blank
lines are ignored, tuples are comma separated, booleans are ``true`` or
``false`` and optional values accept ``none``.

Usage examples
--------------

.. code:: text

    # λ for the fog-style shift
    train.lam=1.0
    pyramid.C=16
    pyramid.sizes=3,9,15
    scene.noise_sigma=0.05
"""
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Union, get_args, get_origin

from userinput.utils import closest

from .exceptions import ConfigurationError, DataFormatError
from .pyramid import PyramidConfig
from .synthetic import SceneSpec
from .task_net import ModelConfig
from .trainer import TrainConfig

__all__ = ["RunConfig", "ABLATIONS", "ALIASES", "ablation_overrides", "level_overrides"]

ALIASES = {
    "pyramid.C": "pyramid.channels",
    "pyramid.d": "pyramid.compact_dim",
    "model.C_sem": "model.classes",
    "train.lr": "train.learning_rate",
    "scene.sigma": "scene.noise_sigma",
    "scene.alpha": "scene.haze_alpha"
}
ABLATIONS = {
    "gm": {"pyramid.use_guided_map": False},
    "ca": {"pyramid.use_channel_attention": False},
    "sa": {"pyramid.use_spatial_attention": False},
    "maxpool": {"pyramid.pooling": "max"}
}
SECTION_TYPES = {
    "model": ModelConfig,
    "pyramid": PyramidConfig,
    "scene": SceneSpec,
    "train": TrainConfig
}
# Fields holding nested sections rather than values.
NESTED = {("model", "pyramid")}


def _keys() -> Dict[str, Any]:
    """Return every configurable key with its annotation."""
    return {
        "{section}.{name}".format(section=section, name=f.name): f.type
        for section, kind in SECTION_TYPES.items()
        for f in fields(kind)
        if (section, f.name) not in NESTED
    }


def _parse(text: str, annotation: Any, key: str) -> Any:
    origin = get_origin(annotation)
    if origin is Union:
        if text.strip().lower() == "none":
            return None
        inner, = [arg for arg in get_args(annotation) if arg is not type(None)]
        return _parse(text, inner, key)
    if origin is tuple:
        return tuple(
            _parse(part, get_args(annotation)[0], key)
            for part in text.split(",")
            if part.strip()
        )
    text = text.strip()
    if annotation is bool:
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigurationError(
                "Key {key} expects true or false, got {text!r}.".format(key=key, text=text)
            )
        return text.lower() in ("true", "1", "yes")
    if annotation in (int, float):
        try:
            return annotation(text)
        except ValueError as e:
            raise ConfigurationError(
                "Key {key} expects {kind}, got {text!r}.".format(
                    key=key,
                    kind="an integer" if annotation is int else "a number",
                    text=text
                )
            ) from e
    return text


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(element) for element in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _canonical_key(key: str) -> str:
    key = ALIASES.get(key.strip(), key.strip())
    known = _keys()
    if key not in known:
        raise ConfigurationError(
            "Unknown configuration key {key}. Did you mean {closest}?".format(
                key=key,
                closest=closest(key, list(known) + list(ALIASES))
            )
        )
    return key


@dataclass(frozen=True)
class RunConfig:
    """Every setting of a run: model, pyramid, scene and training schedule."""
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    scene: SceneSpec = field(default_factory=SceneSpec)

    @property
    def pyramid(self) -> PyramidConfig:
        """Return the pyramid configuration of the model."""
        return self.model.pyramid

    def override(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Return a copy with the given dotted keys changed.

        Values given as strings are parsed according to the field type;
        other values are used as they are.

        Raises
        ------
        ConfigurationError:
            If a key is unknown, a value cannot be parsed or the resulting
            configuration is invalid.
        """
        annotations = _keys()
        changes: Dict[str, Dict[str, Any]] = {section: {} for section in SECTION_TYPES}
        for key, value in overrides.items():
            key = _canonical_key(key)
            if isinstance(value, str) and key != "train.lam":
                value = _parse(value, annotations[key], key)
            section, name = key.split(".", 1)
            changes[section][name] = value
        # A new C without an explicit d brings back the C/2 default.
        if "channels" in changes["pyramid"]:
            changes["pyramid"].setdefault("compact_dim", None)
        pyramid = replace(self.pyramid, **changes["pyramid"])
        return RunConfig(
            model=replace(self.model, pyramid=pyramid, **changes["model"]),
            train=replace(self.train, **changes["train"]),
            scene=replace(self.scene, **changes["scene"])
        )

    @classmethod
    def from_text(cls, text: str, source: str = "<configuration>") -> "RunConfig":
        """Return the configuration described by key=value lines over the defaults.

        Raises
        ------
        ConfigurationError:
            If a line is malformed, naming the source and the line number,
            or if a key is repeated or unknown.
        """
        overrides: Dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(
                    "{source} line {number}: expected key=value, got {line!r}.".format(
                        source=source,
                        number=number,
                        line=line
                    )
                )
            key, value = line.split("=", 1)
            key = _canonical_key(key)
            if key in overrides:
                raise ConfigurationError(
                    "{source} line {number}: key {key} is set twice.".format(
                        source=source,
                        number=number,
                        key=key
                    )
                )
            overrides[key] = value.strip()
        return cls().override(overrides)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        """Return the configuration stored at given path.

        Raises
        ------
        DataFormatError:
            If the file does not exist.
        """
        if not os.path.exists(path):
            raise DataFormatError("No configuration file at {path}.".format(path=path))
        with open(path) as f:
            return cls.from_text(f.read(), source=path)

    def to_dict(self) -> Dict[str, str]:
        """Return every key with its formatted value."""
        sections = {
            "model": self.model,
            "pyramid": self.pyramid,
            "scene": self.scene,
            "train": self.train
        }
        return {
            key: _format(getattr(sections[key.split(".", 1)[0]], key.split(".", 1)[1]))
            for key in _keys()
        }

    def to_text(self) -> str:
        """Return the canonical text of this configuration, one sorted key per line."""
        return "".join(
            "{key}={value}\n".format(key=key, value=value)
            for key, value in sorted(self.to_dict().items())
        )

    def save(self, path: str):
        """Store the canonical text at given path."""
        with open(path, "w") as f:
            f.write(self.to_text())


def ablation_overrides(names: Iterable[str]) -> Dict[str, Any]:
    """Return the overrides switching off the named pyramid components.

    Raises
    ------
    ConfigurationError:
        If an ablation is unknown.
    """
    overrides: Dict[str, Any] = {}
    for name in names:
        if name not in ABLATIONS:
            raise ConfigurationError(
                "Unknown ablation {name}. Did you mean {closest}?".format(
                    name=name,
                    closest=closest(name, list(ABLATIONS))
                )
            )
        overrides.update(ABLATIONS[name])
    return overrides


def level_overrides(levels: Optional[int]) -> Dict[str, Tuple[int, ...]]:
    """Return the override selecting the standard pooling set of N levels."""
    if levels is None:
        return {}
    return {"pyramid.sizes": PyramidConfig.with_levels(levels).sizes}
