import json
import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from core.coupling import paired_block_matrix  # noqa: E402
from core.groundstate import solve_radial_ground_state  # noqa: E402

# √2 sech x 의 ‖ω‖² = |ω|_4^4
SOLITON_NORM_SQ = 16.0 / 3.0


@pytest.fixture(scope='session')
def profile_1d():
    return solve_radial_ground_state(1, 2.0)


@pytest.fixture(scope='session')
def profile_2d():
    return solve_radial_ground_state(2, 2.0)


@pytest.fixture(scope='session')
def profile_3d():
    return solve_radial_ground_state(3, 2.0)


@pytest.fixture(scope='session')
def profile_4d():
    return solve_radial_ground_state(4, 1.5)


@pytest.fixture
def write_config(tmp_path):
    """설정 딕셔너리를 임시 JSON 파일로 저장"""
    def _write(data, name='experiment.json'):
        path = tmp_path / name
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
        return path
    return _write


def paired_block_config(lam, cross=-0.5, cstar=1.0):
    return {
        'problem': {'N': 1, 'p': 2.0, 'beta': paired_block_matrix(2, lam, cross).to_list()},
        'decomposition': {'boundaries': [0, 2, 4], 'q_plus': [1], 'q_minus': [2]},
        'coupling': {'cstar': cstar},
    }


def scalar_config(L=20.0, n=199):
    return {
        'problem': {'N': 1, 'p': 2.0, 'beta': [[1.0]]},
        'coupling': {'cstar': 1.0},
        'solver': {'L': L, 'n': n},
    }
