"""
결합 행렬 및 블록 구조 가설 검증 모듈
(B1) 블록 분해, (B2) 블록 내부 그래프 연결성, (B3) 결합 부등식과 상수 C_* 추정
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.groundstate import RadialProfile

logger = logging.getLogger(__name__)

# (B3) 좌우변이 이 범위 안이면 동률로 보고 실패 처리
TIE_TOLERANCE = 1e-12


class CouplingError(ValueError):
    """결합 모듈 기본 오류"""


class NotSymmetricError(CouplingError):
    def __init__(self, i: int, j: int):
        self.i, self.j = i, j
        super().__init__(f"행렬이 대칭이 아닙니다: β[{i},{j}] ≠ β[{j},{i}]")


class DiagonalNotPositiveError(CouplingError):
    def __init__(self, i: int):
        self.i = i
        super().__init__(f"대각 성분이 양수가 아닙니다: β[{i},{i}]")


class IntraBlockNegativeError(CouplingError):
    def __init__(self, i: int, j: int):
        self.i, self.j = i, j
        super().__init__(f"블록 내부 성분이 음수입니다: β[{i},{j}]")


class CrossBlockNonNegativeError(CouplingError):
    def __init__(self, i: int, j: int):
        self.i, self.j = i, j
        super().__init__(f"블록 간 성분이 음수가 아닙니다: β[{i},{j}]")


class BadBoundariesError(CouplingError):
    """경계 목록이 0=ℓ_0<…<ℓ_q=ℓ 형태가 아님"""


class BadSignPartitionError(CouplingError):
    """Q⁺, Q⁻ 가 {1,…,q} 의 분할이 아님"""


class EmptyEdgeSetError(CouplingError):
    def __init__(self, h: int):
        self.h = h
        super().__init__(f"블록 {h} 에 양의 간선이 없습니다")


class ProfileMissingError(CouplingError):
    """C_* 추정에 필요한 바닥상태가 없거나 (N, p) 가 맞지 않음"""


class PhiKind(Enum):
    """블록별 준동형 선택"""
    TRIVIAL = "trivial"   # Q⁺
    THETA = "theta"       # Q⁻


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """대칭 결합 행렬 β"""
    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise CouplingError(f"결합 행렬은 ℓ×ℓ (ℓ ≥ 1) 이어야 합니다: shape={arr.shape}")
        scale = max(1.0, float(np.max(np.abs(arr))))
        asym = np.abs(arr - arr.T) > 1e-12 * scale
        if np.any(asym):
            i, j = np.argwhere(np.triu(asym))[0]
            raise NotSymmetricError(int(i) + 1, int(j) + 1)
        arr.setflags(write=False)
        object.__setattr__(self, 'entries', arr)

    @property
    def ell(self) -> int:
        return int(self.entries.shape[0])

    def __getitem__(self, key):
        return self.entries[key]

    def submatrix(self, indices: Sequence[int]) -> np.ndarray:
        """0-기준 인덱스의 부분 행렬"""
        idx = np.asarray(indices, dtype=int)
        return self.entries[np.ix_(idx, idx)].copy()

    def to_list(self) -> List[List[float]]:
        return self.entries.tolist()

    @classmethod
    def from_text_file(cls, path: Union[str, Path]) -> 'CouplingMatrix':
        """공백 구분 행렬 파일 로드"""
        rows = np.loadtxt(Path(path), ndmin=2)
        return cls(rows)


@dataclass(frozen=True)
class SignPartition:
    """블록 레이블 {1,…,q} 의 분할 Q⁺ ∪ Q⁻"""
    q_plus: FrozenSet[int]
    q_minus: FrozenSet[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, 'q_plus', frozenset(int(h) for h in self.q_plus))
        object.__setattr__(self, 'q_minus', frozenset(int(h) for h in self.q_minus))
        if self.q_plus & self.q_minus:
            raise BadSignPartitionError(f"Q⁺ 와 Q⁻ 가 겹칩니다: {sorted(self.q_plus & self.q_minus)}")

    @classmethod
    def all_trivial(cls, q: int) -> 'SignPartition':
        return cls(frozenset(range(1, q + 1)), frozenset())

    @classmethod
    def from_labels(cls, q_plus: Iterable[int], q_minus: Iterable[int]) -> 'SignPartition':
        return cls(frozenset(q_plus), frozenset(q_minus))

    @property
    def q(self) -> int:
        return len(self.q_plus) + len(self.q_minus)

    def check_covers(self, q: int):
        if self.q_plus | self.q_minus != set(range(1, q + 1)):
            raise BadSignPartitionError(
                f"Q⁺={sorted(self.q_plus)}, Q⁻={sorted(self.q_minus)} 는 {{1,…,{q}}} 의 분할이 아닙니다"
            )

    def kind(self, h: int) -> PhiKind:
        return PhiKind.TRIVIAL if h in self.q_plus else PhiKind.THETA

    def to_dict(self) -> Dict:
        return {'q_plus': sorted(self.q_plus), 'q_minus': sorted(self.q_minus)}


@dataclass(frozen=True)
class BlockDecomposition:
    """(B1) 블록 분해: 경계 0=ℓ_0<…<ℓ_q=ℓ 와 부호 분할"""
    boundaries: Tuple[int, ...]
    signs: SignPartition = None

    def __post_init__(self):
        bounds = tuple(int(b) for b in self.boundaries)
        if len(bounds) < 2 or bounds[0] != 0 or any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise BadBoundariesError(f"경계는 0 에서 시작해 순증가해야 합니다: {list(self.boundaries)}")
        object.__setattr__(self, 'boundaries', bounds)
        signs = self.signs if self.signs is not None else SignPartition.all_trivial(len(bounds) - 1)
        signs.check_covers(len(bounds) - 1)
        object.__setattr__(self, 'signs', signs)

    @property
    def q(self) -> int:
        return len(self.boundaries) - 1

    @property
    def ell(self) -> int:
        return self.boundaries[-1]

    @property
    def blocks(self) -> Tuple[Tuple[int, ...], ...]:
        """1-기준 성분 번호로 된 I_h"""
        return tuple(tuple(range(a + 1, b + 1)) for a, b in zip(self.boundaries, self.boundaries[1:]))

    def block_indices(self, h: int) -> np.ndarray:
        """블록 h 의 0-기준 성분 인덱스"""
        return np.arange(self.boundaries[h - 1], self.boundaries[h])

    def block_size(self, h: int) -> int:
        return self.boundaries[h] - self.boundaries[h - 1]

    def block_of(self, i: int) -> int:
        """1-기준 성분 i 가 속한 블록"""
        for h in range(1, self.q + 1):
            if self.boundaries[h - 1] < i <= self.boundaries[h]:
                return h
        raise CouplingError(f"성분 {i} 가 어떤 블록에도 속하지 않습니다")

    def component_kinds(self) -> List[PhiKind]:
        return [self.signs.kind(self.block_of(i)) for i in range(1, self.ell + 1)]

    def to_dict(self) -> Dict:
        return {'boundaries': list(self.boundaries), **self.signs.to_dict()}


def validate_block_structure(matrix: CouplingMatrix, boundaries: Sequence[int],
                             signs: Optional[SignPartition] = None) -> BlockDecomposition:
    """(B1) 검증: 첫 위반 성분을 오류로 보고"""
    if not isinstance(matrix, CouplingMatrix):
        matrix = CouplingMatrix(matrix)
    decomposition = BlockDecomposition(tuple(boundaries), signs)
    if decomposition.ell != matrix.ell:
        raise BadBoundariesError(f"마지막 경계 {decomposition.ell} 가 ℓ={matrix.ell} 과 다릅니다")

    beta = matrix.entries
    owner = np.empty(matrix.ell, dtype=int)
    for h in range(1, decomposition.q + 1):
        owner[decomposition.block_indices(h)] = h

    for i in range(matrix.ell):
        for j in range(i, matrix.ell):
            value = beta[i, j]
            if i == j:
                if not value > 0:
                    raise DiagonalNotPositiveError(i + 1)
            elif owner[i] == owner[j]:
                if value < 0:
                    raise IntraBlockNegativeError(i + 1, j + 1)
            elif not value < 0:
                raise CrossBlockNonNegativeError(i + 1, j + 1)

    logger.debug(f"(B1) 통과: q={decomposition.q}, 경계={list(decomposition.boundaries)}")
    return decomposition


def check_graph_connected(decomp: BlockDecomposition, matrix: CouplingMatrix, h: int) -> bool:
    """(B2): 간선 β_ij > 0 으로 이루어진 I_h 위 그래프의 연결성 (BFS)"""
    indices = decomp.block_indices(h)
    if indices.size <= 1:
        return True
    beta = matrix.entries
    seen = {int(indices[0])}
    queue = deque([int(indices[0])])
    while queue:
        i = queue.popleft()
        for j in indices:
            j = int(j)
            if j not in seen and j != i and beta[i, j] > 0:
                seen.add(j)
                queue.append(j)
    return len(seen) == indices.size


def propose_boundaries(matrix: CouplingMatrix) -> List[int]:
    """부호 패턴으로부터 연속 블록 경계를 제안 (보조 기능, 검증 아님)"""
    beta = matrix.entries
    boundaries = [0]
    start = 0
    for i in range(1, matrix.ell):
        if np.all(beta[i, start:i] >= 0):
            continue
        boundaries.append(i)
        start = i
    boundaries.append(matrix.ell)
    return boundaries


@dataclass
class BlockB3Record:
    block: int
    size: int
    lhs: float
    rhs: float
    passed: bool
    vacuous: bool = False
    tie: bool = False
    min_edge: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'block': self.block, 'size': self.size, 'lhs': self.lhs, 'rhs': self.rhs,
            'pass': self.passed, 'vacuous': self.vacuous, 'tie': self.tie, 'min_edge': self.min_edge,
        }


@dataclass
class B3Report:
    """(B3) 블록별 좌변/우변 비교 결과"""
    per_block: List[BlockB3Record]
    cstar: float
    cstar_provenance: str
    p: float
    applicable: bool = True

    @property
    def all_pass(self) -> bool:
        return all(record.passed for record in self.per_block)

    @property
    def failed_blocks(self) -> List[int]:
        return [record.block for record in self.per_block if not record.passed]

    def reason(self) -> Optional[str]:
        failed = self.failed_blocks
        return f"B3 failed at block {failed[0]}" if failed else None

    def to_dict(self) -> Dict:
        return {
            'p': self.p,
            'cstar': self.cstar,
            'cstar_provenance': self.cstar_provenance,
            'applicable': self.applicable,
            'all_pass': self.all_pass,
            'blocks': [record.to_dict() for record in self.per_block],
        }


def check_b3(decomp: BlockDecomposition, matrix: CouplingMatrix, p: float, cstar: float,
             provenance: str = 'user-supplied') -> B3Report:
    """(B3) 부등식의 블록별 검사 (엄격 부등호)"""
    if not p > 1:
        raise CouplingError(f"p 는 1 보다 커야 합니다: {p}")
    if not cstar > 0:
        raise CouplingError(f"C_* 는 양수여야 합니다: {cstar}")

    beta = matrix.entries
    numerator = min(
        float(np.max(np.diag(beta)[decomp.block_indices(k)])) for k in range(1, decomp.q + 1)
    )
    power = p / (p - 1)
    records = []
    for h in range(1, decomp.q + 1):
        idx = decomp.block_indices(h)
        others = np.setdiff1d(np.arange(matrix.ell), idx)
        rhs = cstar * float(np.sum(np.abs(beta[np.ix_(idx, others)])))
        if idx.size == 1:
            records.append(BlockB3Record(block=h, size=1, lhs=math.inf, rhs=rhs, passed=True, vacuous=True))
            continue

        sub = beta[np.ix_(idx, idx)]
        off = sub[~np.eye(idx.size, dtype=bool)]
        edges = off[off > 0]
        if edges.size == 0:
            raise EmptyEdgeSetError(h)
        min_edge = float(np.min(edges))
        lhs = min_edge * (numerator / float(np.sum(sub))) ** power
        tie = abs(lhs - rhs) <= TIE_TOLERANCE * max(1.0, abs(rhs))
        passed = (lhs > rhs) and not tie
        if tie:
            logger.warning(f"(B3) 블록 {h}: 좌변 {lhs} 와 우변 {rhs} 가 동률이므로 실패로 처리합니다")
        records.append(BlockB3Record(block=h, size=int(idx.size), lhs=lhs, rhs=rhs,
                                     passed=passed, tie=tie, min_edge=min_edge))

    return B3Report(per_block=records, cstar=float(cstar), cstar_provenance=provenance,
                    p=float(p), applicable=decomp.q >= 2)


class CstarMode(Enum):
    EXACT_TRIVIAL = "exact-trivial-case"
    UPPER_BOUND = "upper-bound-estimate"


def cstar_formula(p: float, d_phi: float, s_phi: float) -> float:
    """C_* = (p d_φ / ((p-1) S_φ^{p/(p-1)}))^p"""
    return (p * d_phi / ((p - 1) * s_phi ** (p / (p - 1)))) ** p


@dataclass
class CstarEstimate:
    """S_φ, d_φ 와 C_*"""
    s_phi: float
    d_phi: float
    cstar: float
    mode: CstarMode
    p: float
    note: str = ""
    orbit_counts: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        expected = cstar_formula(self.p, self.d_phi, self.s_phi)
        if abs(expected - self.cstar) > 1e-12 * max(1.0, abs(expected)):
            raise CouplingError(f"C_*={self.cstar} 가 S_φ, d_φ 로부터 재계산한 값 {expected} 와 다릅니다")

    @property
    def rigorous(self) -> bool:
        return self.mode is CstarMode.EXACT_TRIVIAL

    def recompute(self) -> float:
        return cstar_formula(self.p, self.d_phi, self.s_phi)

    def to_dict(self) -> Dict:
        return {
            's_phi': self.s_phi, 'd_phi': self.d_phi, 'cstar': self.cstar,
            'mode': self.mode.value, 'rigorous': self.rigorous, 'note': self.note,
            'orbit_counts': {str(h): n for h, n in self.orbit_counts.items()},
        }


def estimate_cstar(p: float, q: int, signs: SignPartition, omega: Optional[RadialProfile],
                   fold: int = 6) -> CstarEstimate:
    """
    C_* 추정
    자명 준동형 q=1 은 닫힌 형태, 나머지는 분리된 범프 구성의 궤도 개수 극한으로 d_φ 상계와
    자명 경우 S 를 S_φ 하계로 사용 (비엄밀)
    """
    if omega is None:
        raise ProfileMissingError("C_* 추정에는 바닥상태 ω 가 필요합니다")
    if abs(omega.exponent - p) > 1e-12:
        raise ProfileMissingError(f"ω 의 지수 p={omega.exponent} 가 요청한 p={p} 와 다릅니다")
    signs.check_covers(q)

    level = (p - 1) / (2 * p) * omega.norm_sq
    s_trivial = omega.norm_sq ** ((p - 1) / p)

    if q == 1 and not signs.q_minus:
        d_phi = level
        return CstarEstimate(s_phi=s_trivial, d_phi=d_phi, cstar=cstar_formula(p, d_phi, s_trivial),
                             mode=CstarMode.EXACT_TRIVIAL, p=p, orbit_counts={1: 1},
                             note="자명 준동형, q=1: 닫힌 형태")

    counts = {}
    centered_used = False
    for h in range(1, q + 1):
        if h in signs.q_plus and not centered_used:
            counts[h] = 1
            centered_used = True
        elif h in signs.q_plus:
            counts[h] = fold
        else:
            counts[h] = 2 * fold
    d_phi = level * sum(counts.values())
    note = ("비엄밀 추정: d_φ 는 멀리 떨어진 대칭 범프 후보의 극한값(상계), "
            "S_φ 는 자명 준동형 상수(하계)")
    logger.warning(f"C_* {note}")
    return CstarEstimate(s_phi=s_trivial, d_phi=d_phi, cstar=cstar_formula(p, d_phi, s_trivial),
                         mode=CstarMode.UPPER_BOUND, p=p, note=note, orbit_counts=counts)


def paired_block_matrix(q: int, lam: float, cross: float = -1.0) -> CouplingMatrix:
    """2q×2q 행렬: 2×2 대각 블록은 λ, 나머지는 cross (< 0)"""
    ell = 2 * q
    beta = np.full((ell, ell), float(cross))
    for h in range(q):
        beta[2 * h:2 * h + 2, 2 * h:2 * h + 2] = lam
    return CouplingMatrix(beta)


def paired_block_threshold(p: float, q: int, cstar: float) -> float:
    """|β_ij| ≤ 1 일 때 (B3) 를 보장하는 λ 하한 4^{(2p-1)/(p-1)}(q-1)C_*"""
    return 4.0 ** ((2 * p - 1) / (p - 1)) * (q - 1) * cstar
