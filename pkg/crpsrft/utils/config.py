"""Run configuration documents

A run is described by one JSON document with the sections
``{system, backbone, noise, train, eval, paths, seed}``. Every section maps onto
the configuration dataclass of the module that consumes it, missing keys take
the dataclass defaults and unknown keys are rejected. The top-level seed is
used by the train and eval sections unless they set their own.
"""

import json
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import Optional

from ..dynamics.systems import SystemSpec
from ..errors import ConfigError
from ..evaluation.harness import EvalConfig
from ..layers.modulation import NoiseBranchConfig
from ..models.backbone import BackboneConfig
from ..training.trainer import TrainConfig, RETROFIT_DEFAULTS
from .binary import canonical_json, sha256_hex

# License: BSD 3 clause

CONFIG_HASH_LENGTH = 16


@dataclass
class PathsConfig:
    """Default locations of the artifacts of a run, overridden by command-line flags

    Parameters
    ----------
    data : str, optional
        dataset file
    init : str, optional
        checkpoint a fine-tuning or retrofit run starts from
    out_dir : str
        directory of the outputs
    run_id : str, optional
        name of the run in merged reports, by default the name of the model file
    """
    data: Optional[str] = None
    init: Optional[str] = None
    out_dir: str = 'runs'
    run_id: Optional[str] = None

    def validate(self):
        return self


_SECTIONS = {
    'system': SystemSpec,
    'backbone': BackboneConfig,
    'noise': NoiseBranchConfig,
    'train': TrainConfig,
    'eval': EvalConfig,
    'paths': PathsConfig,
}
_SEEDED_SECTIONS = ('train', 'eval')


def _check_keys(where, d, allowed):
    if not isinstance(d, dict):
        raise ConfigError(f'Got {type(d).__name__} for {where} but expected a JSON object.')
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f'Unknown keys {unknown} in {where}, expected a subset of {sorted(allowed)}.')


def _build_section(name, d):
    cls = _SECTIONS[name]
    _check_keys(f'section "{name}"', d, [f.name for f in fields(cls)])
    try:
        section = cls.from_dict(d) if hasattr(cls, 'from_dict') else cls(**d)
        return section.validate()
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f'Invalid section "{name}": {err}') from None


@dataclass
class RunConfig:
    """All the settings of a run

    Parameters
    ----------
    system : SystemSpec
    backbone : BackboneConfig
    noise : NoiseBranchConfig
    train : TrainConfig
    eval : EvalConfig
    paths : PathsConfig
    seed : int
    """
    system: SystemSpec = field(default_factory=SystemSpec)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    noise: NoiseBranchConfig = field(default_factory=NoiseBranchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, d, seed=None, retrofit=False):
        """Builds and validates a configuration

        Parameters
        ----------
        d : dict
            configuration document
        seed : int, optional
            overrides the top-level seed of the document
        retrofit : bool, default is False
            fill the keys the train section leaves out from the retrofitting
            defaults (:data:`~crpsrft.training.trainer.RETROFIT_DEFAULTS`)

        Raises
        ------
        ConfigError
            on unknown keys or invalid values
        """
        _check_keys('the configuration', d, list(_SECTIONS) + ['seed'])
        if seed is None:
            seed = d.get('seed', 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f'Got seed={seed!r} but expected an integer.')
        sections = {}
        for name in _SECTIONS:
            section = d.get(name, {})
            if not isinstance(section, dict):
                raise ConfigError(f'Got {type(section).__name__} for section "{name}" but expected a JSON object.')
            section = dict(section)
            if retrofit and name == 'train':
                section = {**RETROFIT_DEFAULTS, **section}
            if name in _SEEDED_SECTIONS:
                section.setdefault('seed', seed)
            sections[name] = _build_section(name, section)
        return cls(seed=seed, **sections)

    def to_dict(self):
        d = {name: asdict(getattr(self, name)) for name in _SECTIONS}
        d['seed'] = self.seed
        return d

    def config_hash(self):
        """First 16 hex digits of the SHA-256 of the canonical JSON document"""
        return sha256_hex(canonical_json(self.to_dict()))[:CONFIG_HASH_LENGTH]

    def check_data(self, dataset):
        """Raises ConfigError if the backbone section does not fit the dataset"""
        if self.backbone.channels != dataset.channels or list(self.backbone.spatial_dims) != list(dataset.grid):
            raise ConfigError(f'The backbone section expects {self.backbone.channels} channels on a '
                              f'{self.backbone.spatial_dims} grid, but the dataset has {dataset.channels} '
                              f'channels on a {dataset.grid} grid.')


def load_config(path, seed=None, retrofit=False):
    """Reads a :class:`RunConfig` from a JSON file, see :meth:`RunConfig.from_dict`

    Raises
    ------
    FileNotFoundError
        if the file does not exist
    ConfigError
        if it is not valid JSON or not a valid configuration
    """
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f'{path} is not valid JSON ({err}).') from None
    return RunConfig.from_dict(d, seed=seed, retrofit=retrofit)
