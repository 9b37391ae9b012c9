"""
실험 설정 구조
설정 문서(JSON/YAML)를 섹션별 데이터클래스로 해석하고 다시 직렬화
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from core.coupling import BlockDecomposition, CouplingError, CouplingMatrix, SignPartition
from core.pde import Potential, SolverConfig, SystemSpec

DEFAULT_SEED = 20240611


class ConfigError(ValueError):
    """설정 문서 해석 오류"""


@dataclass
class ProblemSection:
    N: int = 1
    p: float = 2.0
    beta: Optional[List[List[float]]] = None
    matrix_file: Optional[str] = None
    potentials: List[Dict[str, Any]] = field(default_factory=lambda: [{'kind': 'constant', 'value': 1.0}])


@dataclass
class DecompositionSection:
    boundaries: Optional[List[int]] = None
    q_plus: Optional[List[int]] = None
    q_minus: List[int] = field(default_factory=list)


@dataclass
class CouplingSection:
    cstar: Optional[float] = None


@dataclass
class GroundStateSection:
    dr: float = 0.01
    r_max: float = 40.0


@dataclass
class SolverSection:
    L: float = 20.0
    n: int = 799
    tol: float = 1e-6
    max_iterations: int = 200_000
    step_factor: float = 0.9
    log_interval: int = 100
    symmetric: bool = True
    fold: int = 6
    seed_radius: Optional[float] = None
    projection_interval: int = 1
    force: bool = False


@dataclass
class SymmetrySection:
    fold: int = 6
    block: int = 1
    radii: List[float] = field(default_factory=lambda: [8.0, 10.0, 12.0, 14.0, 16.0])
    quadrature_step: float = 0.05
    mc_samples: int = 400_000


@dataclass
class DecaySection:
    window: List[float] = field(default_factory=lambda: [5.0, 15.0])
    windows: Optional[List[List[float]]] = None
    radii: Optional[List[float]] = None
    tail_window: Optional[List[float]] = None
    noise_floor: float = 1e-9
    rel_tol: float = 0.05
    annulus_width: Optional[float] = None


@dataclass
class OutputSection:
    directory: Optional[str] = None
    write_csv: bool = True
    write_checkpoint: bool = True


SECTIONS = {
    'problem': ProblemSection,
    'decomposition': DecompositionSection,
    'coupling': CouplingSection,
    'groundstate': GroundStateSection,
    'solver': SolverSection,
    'symmetry': SymmetrySection,
    'decay': DecaySection,
    'outputs': OutputSection,
}


def _parse_section(name: str, data: Any):
    cls = SECTIONS[name]
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"'{name}' 섹션은 키-값 문서여야 합니다")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"'{name}' 섹션에 알 수 없는 키: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"'{name}' 섹션 해석 실패: {e}")


@dataclass
class ExperimentConfig:
    """실험 한 번의 전체 설정"""
    problem: ProblemSection = field(default_factory=ProblemSection)
    decomposition: DecompositionSection = field(default_factory=DecompositionSection)
    coupling: CouplingSection = field(default_factory=CouplingSection)
    groundstate: GroundStateSection = field(default_factory=GroundStateSection)
    solver: SolverSection = field(default_factory=SolverSection)
    symmetry: SymmetrySection = field(default_factory=SymmetrySection)
    decay: DecaySection = field(default_factory=DecaySection)
    outputs: OutputSection = field(default_factory=OutputSection)
    seed: int = DEFAULT_SEED
    base_dir: Path = field(default=Path('.'), compare=False, repr=False)

    @classmethod
    def from_dict(cls, data: Dict, base_dir: Union[str, Path] = '.') -> 'ExperimentConfig':
        if not isinstance(data, dict):
            raise ConfigError("설정 문서의 최상위는 키-값 문서여야 합니다")
        unknown = set(data) - set(SECTIONS) - {'seed'}
        if unknown:
            raise ConfigError(f"알 수 없는 최상위 키: {sorted(unknown)}")
        sections = {name: _parse_section(name, data.get(name)) for name in SECTIONS}
        seed = data.get('seed', DEFAULT_SEED)
        if not isinstance(seed, int):
            raise ConfigError(f"seed 는 정수여야 합니다: {seed!r}")
        config = cls(**sections, seed=seed, base_dir=Path(base_dir))
        config.validate()
        return config

    def to_dict(self) -> Dict:
        data = {name: asdict(getattr(self, name)) for name in SECTIONS}
        data['seed'] = self.seed
        return data

    def validate(self):
        problem = self.problem
        if not isinstance(problem.N, int) or problem.N < 1:
            raise ConfigError(f"problem.N 은 1 이상의 정수여야 합니다: {problem.N!r}")
        if not isinstance(problem.p, (int, float)):
            raise ConfigError(f"problem.p 는 실수여야 합니다: {problem.p!r}")
        if (problem.beta is None) == (problem.matrix_file is None):
            raise ConfigError("problem.beta 와 problem.matrix_file 중 정확히 하나를 지정해야 합니다")
        if not problem.potentials:
            raise ConfigError("problem.potentials 가 비어 있습니다")

    def config_hash(self) -> str:
        """정렬된 JSON 덤프의 SHA-256"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, default=str)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def build_matrix(self) -> CouplingMatrix:
        if self.problem.beta is not None:
            return CouplingMatrix(self.problem.beta)
        path = Path(self.problem.matrix_file)
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.exists():
            raise ConfigError(f"행렬 파일을 찾을 수 없습니다: {path}")
        try:
            return CouplingMatrix.from_text_file(path)
        except CouplingError:
            raise
        except ValueError as e:
            raise ConfigError(f"행렬 파일 해석 실패 ({path}): {e}")

    def build_decomposition(self, ell: int) -> BlockDecomposition:
        section = self.decomposition
        boundaries = section.boundaries or [0, ell]
        q = len(boundaries) - 1
        q_plus = section.q_plus if section.q_plus is not None else \
            [h for h in range(1, q + 1) if h not in set(section.q_minus)]
        return BlockDecomposition(tuple(boundaries), SignPartition.from_labels(q_plus, section.q_minus))

    def build_spec(self, matrix: Optional[CouplingMatrix] = None) -> SystemSpec:
        matrix = matrix if matrix is not None else self.build_matrix()
        try:
            potentials = [Potential.from_dict(dict(p)) for p in self.problem.potentials]
        except TypeError as e:
            raise ConfigError(f"problem.potentials 해석 실패: {e}")
        return SystemSpec(N=self.problem.N, p=float(self.problem.p), beta=matrix, potentials=potentials)

    def solver_config(self) -> SolverConfig:
        options = asdict(self.solver)
        options.pop('force')
        return SolverConfig(**options)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'ExperimentConfig':
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"설정 파일을 찾을 수 없습니다: {path}")
        return cls.from_dict(read_document(path), base_dir=path.parent)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        write_document(path, self.to_dict())
        return path


def read_document(path: Path) -> Dict:
    """확장자에 따라 JSON 또는 YAML 문서 읽기"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            if path.suffix in ('.yaml', '.yml'):
                return yaml.safe_load(f) or {}
            return json.load(f)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"설정 파일 해석 실패 ({path}): {e}")


def write_document(path: Path, data: Dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        if path.suffix in ('.yaml', '.yml'):
            yaml.safe_dump(data, f, allow_unicode=True, sort_keys=False)
        else:
            json.dump(data, f, indent=2, ensure_ascii=False, default=str)
