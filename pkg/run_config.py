"""
Run Configuration
INI-style configuration files, typed and validated against the published
schema in config/config_schema.json
"""

import configparser
import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import jsonschema
from dotenv import load_dotenv

from processing.errors import ConfigError

logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).resolve().parent / 'config' / 'config_schema.json'

load_dotenv()


def load_schema(path: Path = SCHEMA_PATH) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


SCHEMA = load_schema()
SCHEMA_VERSION = SCHEMA['version']


def _property_schema(section: str, key: str) -> Optional[Dict[str, Any]]:
    prop = SCHEMA['properties'].get(section, {}).get('properties', {}).get(key)
    if prop is None:
        return None
    if '$ref' in prop:
        name = prop['$ref'].rsplit('/', 1)[-1]
        resolved = dict(SCHEMA['definitions'][name])
        resolved.update({k: v for k, v in prop.items() if k != '$ref'})
        return resolved
    return prop


def _convert(raw: str, prop: Dict[str, Any], key: str) -> Any:
    kind = prop.get('type', 'string')
    text = raw.strip()
    try:
        if kind == 'integer':
            return int(text)
        if kind == 'number':
            return float(text)
        if kind == 'boolean':
            lowered = text.lower()
            if lowered not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError(f"not a boolean: {text!r}")
            return configparser.ConfigParser.BOOLEAN_STATES[lowered]
        if kind == 'array':
            item_kind = prop.get('items', {}).get('type', 'string')
            parts = [p.strip() for p in text.split(',') if p.strip()]
            if item_kind == 'integer':
                return [int(p) for p in parts]
            if item_kind == 'number':
                return [float(p) for p in parts]
            return parts
    except ValueError as e:
        raise ConfigError(f"cannot convert {raw!r} to {kind}: {e}", key)
    return text


class RunConfig:
    """Parsed, typed and validated configuration of one run"""

    def __init__(self, sections: Dict[str, Dict[str, Any]], source_text: str = '',
                 path: Optional[str] = None):
        self.sections = sections
        self.source_text = source_text
        self.path = path
        self.base_dir = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()

    @classmethod
    def from_text(cls, text: str, path: Optional[str] = None,
                  overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> 'RunConfig':
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
        parser.optionxform = str
        try:
            parser.read_string(text, source=path or '<config>')
        except configparser.Error as e:
            raise ConfigError(f"cannot parse configuration: {e}")

        sections: Dict[str, Dict[str, Any]] = {}
        for name in parser.sections():
            if name not in SCHEMA['properties']:
                raise ConfigError("unknown section", name)
            sections[name] = {}
            for key, raw in parser.items(name):
                prop = _property_schema(name, key)
                if prop is None:
                    raise ConfigError("unknown key", f'{name}.{key}')
                sections[name][key] = _convert(raw, prop, f'{name}.{key}')

        for name, values in (overrides or {}).items():
            sections.setdefault(name, {}).update(values)

        resolved = cls._with_defaults(sections)
        cls._validate(resolved)
        return cls(resolved, text, path)

    @classmethod
    def from_file(cls, path: str, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> 'RunConfig':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read configuration file {path}: {e}")
        config = cls.from_text(text, path, overrides)
        logger.info(f"Loaded configuration from {path} (schema version {SCHEMA_VERSION})")
        return config

    @staticmethod
    def _with_defaults(sections: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
        """Fill schema defaults for every section, present or not"""
        resolved = copy.deepcopy(sections)
        for name, section_schema in SCHEMA['properties'].items():
            target = resolved.setdefault(name, {})
            for key in section_schema.get('properties', {}):
                prop = _property_schema(name, key)
                if key not in target and 'default' in prop:
                    target[key] = copy.deepcopy(prop['default'])
        return resolved

    @staticmethod
    def _validate(document: Dict[str, Any]):
        validator = jsonschema.Draft7Validator(SCHEMA)
        errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
        if errors:
            first = errors[0]
            key = '.'.join(str(p) for p in first.absolute_path) or None
            raise ConfigError(first.message, key)
        for name in ('priors',):
            for key, (lower, upper) in document[name].items():
                if not lower < upper:
                    raise ConfigError("lower bound must be below upper bound", f'{name}.{key}')
        mcmc = document['mcmc']
        if mcmc['leapfrog_min'] > mcmc['leapfrog_max']:
            raise ConfigError("leapfrog_min exceeds leapfrog_max", 'mcmc.leapfrog_min')

    def section(self, name: str) -> Dict[str, Any]:
        return self.sections.get(name, {})

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self.section(section).get(key, default)

    def require(self, section: str, key: str) -> Any:
        value = self.get(section, key)
        if value is None or value == '':
            raise ConfigError("required for this command", f'{section}.{key}')
        return value

    def resolve_path(self, value: str) -> str:
        """Paths in the file are relative to the file's directory"""
        return value if os.path.isabs(value) else os.path.normpath(os.path.join(self.base_dir, value))

    @property
    def seed(self) -> int:
        return int(self.sections['run']['seed'])

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return copy.deepcopy(self.sections)


def load_run_config(path: str, seed: Optional[int] = None, output_dir: Optional[str] = None) -> RunConfig:
    """Load a configuration, applying command-line overrides for seed and output directory"""
    overrides: Dict[str, Dict[str, Any]] = {}
    if seed is not None:
        overrides.setdefault('run', {})['seed'] = seed
    if output_dir is not None:
        overrides.setdefault('run', {})['output_dir'] = os.path.abspath(output_dir)
    return RunConfig.from_file(path, overrides)
