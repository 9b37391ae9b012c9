import json

import numpy as np
import pytest

from conftest import paired_block_config
from config.config_manager import DEFAULT_CONFIG_FILE, ConfigManager
from config.experiment_config import ConfigError, ExperimentConfig
from core.coupling import NotSymmetricError, PhiKind


def test_default_config_loads():
    config = ExperimentConfig.load(DEFAULT_CONFIG_FILE)
    matrix = config.build_matrix()
    assert matrix.ell == 4
    decomposition = config.build_decomposition(matrix.ell)
    assert decomposition.q == 2
    assert decomposition.signs.kind(2) is PhiKind.THETA
    assert config.solver_config().L == 40.0
    spec = config.build_spec(matrix)
    assert len(spec.potentials) == 4


@pytest.mark.parametrize('name', ['experiment.json', 'experiment.yaml'])
def test_config_round_trip(tmp_path, name):
    config = ExperimentConfig.from_dict(paired_block_config(100.0))
    path = config.save(tmp_path / name)
    loaded = ExperimentConfig.load(path)
    assert loaded == config
    assert loaded.config_hash() == config.config_hash()


def test_hash_changes_with_content():
    first = ExperimentConfig.from_dict(paired_block_config(100.0))
    second = ExperimentConfig.from_dict(paired_block_config(16.0))
    assert first.config_hash() != second.config_hash()
    assert len(first.config_hash()) == 64


def test_defaults_for_missing_sections():
    config = ExperimentConfig.from_dict({'problem': {'beta': [[1.0, 0.5], [0.5, 1.0]]}})
    decomposition = config.build_decomposition(2)
    assert decomposition.boundaries == (0, 2)
    assert decomposition.signs.kind(1) is PhiKind.TRIVIAL
    assert config.solver.n == 799


@pytest.mark.parametrize('data', [
    {'problem': {'beta': [[1.0]]}, 'plotting': {}},
    {'problem': {'beta': [[1.0]], 'gamma': 2}},
    {'problem': {'beta': [[1.0]], 'matrix_file': 'beta.txt'}},
    {'problem': {'N': 1}},
    {'problem': {'beta': [[1.0]]}, 'seed': 'abc'},
    {'problem': {'beta': [[1.0]]}, 'solver': [1, 2]},
])
def test_invalid_documents(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_matrix_file_relative_to_config(tmp_path):
    (tmp_path / 'beta.txt').write_text("1 -0.5\n-0.5 1\n", encoding='utf-8')
    path = tmp_path / 'experiment.json'
    path.write_text(json.dumps({'problem': {'matrix_file': 'beta.txt'}}), encoding='utf-8')
    matrix = ExperimentConfig.load(path).build_matrix()
    np.testing.assert_array_equal(matrix.entries, [[1.0, -0.5], [-0.5, 1.0]])


def test_matrix_file_errors(tmp_path):
    (tmp_path / 'beta.txt').write_text("1 0.5\n0.2 1\n", encoding='utf-8')
    config = ExperimentConfig.from_dict({'problem': {'matrix_file': 'beta.txt'}}, base_dir=tmp_path)
    with pytest.raises(NotSymmetricError):
        config.build_matrix()

    missing = ExperimentConfig.from_dict({'problem': {'matrix_file': 'absent.txt'}}, base_dir=tmp_path)
    with pytest.raises(ConfigError):
        missing.build_matrix()


def test_bad_potential_entry():
    config = ExperimentConfig.from_dict({'problem': {'beta': [[1.0]], 'potentials': [{'depth': 2.0}]}})
    with pytest.raises(ConfigError):
        config.build_spec()


def test_unparsable_file(tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text("{ not json", encoding='utf-8')
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / 'absent.json')


def test_config_manager_dotted_access(write_config):
    path = write_config(paired_block_config(100.0))
    manager = ConfigManager(path)
    assert manager.loaded
    assert manager.get_config('problem.N') == 1
    assert manager.get_config('problem.missing') is None

    assert manager.set_config('solver.n', 99)
    assert manager.update_config({'solver.L': 10.0, 'decay.rel_tol': 0.1})
    config = manager.experiment_config()
    assert config.solver.n == 99
    assert config.solver.L == 10.0
    assert config.decay.rel_tol == 0.1


def test_config_manager_backup_on_save(write_config):
    path = write_config(paired_block_config(100.0))
    manager = ConfigManager(path)
    manager.set_config('seed', 7)
    assert manager.save_config()
    backup = path.with_suffix('.backup.json')
    assert backup.exists()
    assert json.loads(backup.read_text(encoding='utf-8')).get('seed') is None
    assert json.loads(path.read_text(encoding='utf-8'))['seed'] == 7


def test_config_manager_missing_file(tmp_path):
    manager = ConfigManager(tmp_path / 'absent.json')
    assert not manager.loaded
    with pytest.raises(ConfigError):
        manager.experiment_config()
