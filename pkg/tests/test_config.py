"""
Tests for the run configuration
Typed INI parsing, schema defaults and validation, and command-line overrides
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from processing.errors import ConfigError
from run_config import SCHEMA_VERSION, RunConfig, load_run_config

DESK_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'config', 'osse_desk.ini')


def test_minimal_config_gets_defaults():
    config = RunConfig.from_text('[run]\nseed = 3\n')
    assert config.seed == 3
    assert config.get('mcmc', 'iterations') == 3000
    assert config.get('mcmc', 'burn_in') == 2000
    assert config.get('mcmc', 'thin') == 10
    assert config.get('model', 'variant') == 1
    assert config.get('priors', 'log_inv_tau2') == [-2.0, 20.0]
    assert config.get('priors', 'log_d') == pytest.approx([np.log(0.1), np.log(5.0)])
    assert config.get('truth', 'beta') == [1.0]
    assert config.get('grid', 'path') is None


def test_typed_conversion():
    config = RunConfig.from_text(
        '[run]\nseed = 1\n[truth]\nbeta = 1.0, 0.5\nspatial = no\n[observation]\nmissing_slots = 0, 3,7\n'
        '[mcmc]\nstep_size = 0.02  # per leapfrog step\n'
    )
    assert config.get('truth', 'beta') == [1.0, 0.5]
    assert config.get('truth', 'spatial') is False
    assert config.get('observation', 'missing_slots') == [0, 3, 7]
    assert config.get('mcmc', 'step_size') == 0.02


def test_desk_config_loads():
    config = RunConfig.from_file(DESK_CONFIG)
    assert config.get('grid', 'nx') * config.get('grid', 'ny') == 60
    assert config.get('sensitivities', 'T') == 200
    assert config.resolve_path(config.get('data', 'grid')).endswith(os.path.join('outputs', 'desk', 'grid.csv'))
    assert SCHEMA_VERSION == '1'


@pytest.mark.parametrize('text, key', [
    ('[run]\nseed = 1\n[plots]\nx = 1\n', 'plots'),
    ('[run]\nseed = 1\n[mcmc]\nwarmup = 10\n', 'mcmc.warmup'),
    ('[run]\nseed = 1\n[mcmc]\nthin = ten\n', 'mcmc.thin'),
    ('[run]\nseed = 1\n[mcmc]\nthin = 0\n', 'mcmc.thin'),
    ('[run]\nseed = 1\n[model]\nvariant = 7\n', 'model.variant'),
    ('[run]\nseed = 1\n[truth]\nspatial = maybe\n', 'truth.spatial'),
    ('[run]\nseed = 1\n[priors]\na = 0.5, -0.5\n', 'priors.a'),
    ('[run]\nseed = 1\n[priors]\nlambda = 1\n', 'priors.lambda'),
    ('[run]\nseed = 1\n[mcmc]\nleapfrog_min = 30\n', 'mcmc.leapfrog_min'),
    ('[run]\nseed = 1\n[discrepancy]\na = 1.0\n', 'discrepancy.a'),
])
def test_invalid_configs(text, key):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_text(text)
    assert info.value.key == key


def test_missing_run_section():
    with pytest.raises(ConfigError):
        RunConfig.from_text('[mcmc]\nthin = 5\n')
    with pytest.raises(ConfigError):
        RunConfig.from_text('not an ini file')


def test_overrides(tmp_path):
    path = tmp_path / 'run.ini'
    path.write_text('[run]\nseed = 1\noutput_dir = out\n[data]\ngrid = inputs/grid.csv\n', encoding='utf-8')
    config = load_run_config(str(path))
    assert config.resolve_path(config.get('run', 'output_dir')) == str(tmp_path / 'out')
    assert config.resolve_path(config.get('data', 'grid')) == str(tmp_path / 'inputs' / 'grid.csv')
    overridden = load_run_config(str(path), seed=99, output_dir=str(tmp_path / 'elsewhere'))
    assert overridden.seed == 99
    assert overridden.get('run', 'output_dir') == str(tmp_path / 'elsewhere')
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / 'absent.ini'))


def test_require_and_to_dict():
    config = RunConfig.from_text('[run]\nseed = 1\n[data]\nstations = s.csv\n')
    assert config.require('data', 'stations') == 's.csv'
    with pytest.raises(ConfigError) as info:
        config.require('data', 'grid')
    assert info.value.key == 'data.grid'
    snapshot = config.to_dict()
    snapshot['run']['seed'] = 5
    assert config.seed == 1


def run_all_tests():
    """Run the parameter-free tests in this module without pytest"""
    import inspect
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith('test_') and callable(obj)]
    print("\n" + "=" * 80)
    print("RUN CONFIGURATION TESTS")
    print("=" * 80)
    ran = 0
    for test in tests:
        if inspect.signature(test).parameters:
            continue
        test()
        ran += 1
        print(f"✓ {test.__name__}")
    print(f"\n{ran} tests passed")


if __name__ == "__main__":
    run_all_tests()
