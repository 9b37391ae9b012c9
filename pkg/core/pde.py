"""
격자 PDE 모듈
Dirichlet 상자 위 연립 Schrödinger 방정식의 이산화, 에너지/기울기, Nehari 수축 기울기 흐름 풀이기,
꼬리 에너지 ξ_i(r) 와 지수 감쇠율 적합
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import ndimage

from core.blockopt import NehariScaling, energy_on_nehari, nehari_project, synchronized_coefficients
from core.coupling import BlockDecomposition, CouplingMatrix, PhiKind
from core.groundstate import RadialProfile, check_subcritical, solve_radial_ground_state
from core.symmetry import EquivariantProjector, GroupMode, SymmetryGroup

logger = logging.getLogger(__name__)

# 반복 후 에너지 증가 허용 폭 (상대)
ENERGY_SLACK = 1e-12

# 이 L² 노름 아래로 떨어진 성분은 소멸로 판정
COLLAPSE_THRESHOLD = 1e-8


class PdeError(ValueError):
    """격자 PDE 모듈 기본 오류"""


class GridMismatchError(PdeError):
    """상태의 격자 또는 성분 수가 방정식과 맞지 않음"""


class MaxIterationsError(PdeError):
    def __init__(self, result: 'SolveResult'):
        self.result = result
        super().__init__(f"{result.iterations} 회 반복 안에 수렴하지 않았습니다 "
                         f"(최대 잔차 {float(np.max(result.residuals)):.3e})")


class BlockCollapseError(PdeError):
    def __init__(self, component: int, norm: float, result: Optional['SolveResult'] = None):
        self.component = component
        self.norm = norm
        self.result = result
        super().__init__(f"성분 {component} 의 노름 {norm:.3e} 이 {COLLAPSE_THRESHOLD} 아래로 떨어졌습니다")


class RadiiOutOfBoxError(PdeError):
    """반경이 격자 상자를 벗어남"""


class WindowBelowNoiseError(PdeError):
    """적합 구간 안에서 포락선이 잡음 하한 이하"""


class DegenerateFitError(PdeError):
    """적합 구간 안의 구면 껍질이 4 개 미만"""


@dataclass
class Potential:
    """반경 퍼텐셜 V(|x|): 상수 또는 tanh 우물"""
    kind: str = 'constant'
    value: float = 1.0
    inner: float = 1.0
    outer: float = 1.0
    radius: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ('constant', 'well'):
            raise PdeError(f"알 수 없는 퍼텐셜 종류: {self.kind}")
        if self.kind == 'well' and (self.width <= 0 or self.radius < 0):
            raise PdeError(f"우물 폭은 양수, 반경은 0 이상이어야 합니다: width={self.width}, radius={self.radius}")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == 'constant':
            return np.full(r.shape, float(self.value))
        step = 0.5 * (1.0 - np.tanh((r - self.radius) / self.width))
        return self.outer + (self.inner - self.outer) * step

    @property
    def rho(self) -> float:
        """외부 영역 B_ρ 바깥이 시작되는 반경"""
        return 0.0 if self.kind == 'constant' else self.radius + 6.0 * self.width

    @property
    def sigma(self) -> float:
        """σ = inf_{|x| ≥ ρ} V"""
        if self.kind == 'constant':
            return float(self.value)
        return float(min(self.outer, self(self.rho)))

    @property
    def bound(self) -> float:
        """Λ ≥ ‖V‖_∞"""
        if self.kind == 'constant':
            return abs(float(self.value))
        return max(abs(self.inner), abs(self.outer))

    @property
    def autonomous(self) -> bool:
        return self.kind == 'constant' and self.value == 1.0

    def to_dict(self) -> Dict:
        if self.kind == 'constant':
            return {'kind': 'constant', 'value': self.value}
        return {'kind': 'well', 'inner': self.inner, 'outer': self.outer,
                'radius': self.radius, 'width': self.width}

    @classmethod
    def from_dict(cls, data: Dict) -> 'Potential':
        return cls(**data)


@dataclass
class SystemSpec:
    """−Δu_i + V_i u_i = Σ_j β_ij |u_j|^p |u_i|^{p-2} u_i"""
    N: int
    p: float
    beta: CouplingMatrix
    potentials: List[Potential] = field(default_factory=lambda: [Potential()])

    def __post_init__(self):
        check_subcritical(self.N, self.p)
        if not isinstance(self.beta, CouplingMatrix):
            self.beta = CouplingMatrix(np.asarray(self.beta, dtype=float))
        if len(self.potentials) == 1 and self.beta.ell > 1:
            self.potentials = [self.potentials[0]] * self.beta.ell
        if len(self.potentials) != self.beta.ell:
            raise PdeError(f"퍼텐셜 {len(self.potentials)} 개와 성분 {self.beta.ell} 개가 맞지 않습니다")
        for i, pot in enumerate(self.potentials, start=1):
            if not pot.sigma > 0:
                raise PdeError(f"성분 {i} 의 외부 하한 σ={pot.sigma:.6g} 이 양수가 아닙니다")

    @property
    def ell(self) -> int:
        return self.beta.ell

    @property
    def sigma(self) -> np.ndarray:
        return np.array([pot.sigma for pot in self.potentials])

    @property
    def Lambda(self) -> float:
        return max(pot.bound for pot in self.potentials)

    @property
    def autonomous(self) -> bool:
        return all(pot.autonomous for pot in self.potentials)

    def box_length(self, tolerance: float = 1e-8) -> float:
        """e^{-√σ_min L} < tolerance 가 되는 최소 상자 반폭"""
        return -math.log(tolerance) / math.sqrt(float(np.min(self.sigma)))

    def to_dict(self) -> Dict:
        return {'N': self.N, 'p': self.p, 'beta': self.beta.to_list(),
                'potentials': [pot.to_dict() for pot in self.potentials]}


@dataclass(frozen=True)
class Grid:
    """[-L, L]^N 의 내부 절점, 축마다 n 개, h = 2L/(n+1)"""
    N: int
    L: float
    n: int

    def __post_init__(self):
        if self.N < 1 or self.L <= 0 or self.n < 3:
            raise PdeError(f"잘못된 격자: N={self.N}, L={self.L}, n={self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n + 1)

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(1, self.n + 1)

    @property
    def axes(self) -> List[np.ndarray]:
        return [self.axis] * self.N

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.N

    @property
    def cell(self) -> float:
        return self.h ** self.N

    def radius(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing='ij', sparse=True)
        return np.sqrt(sum(c ** 2 for c in mesh))

    def to_dict(self) -> Dict:
        return {'N': self.N, 'L': self.L, 'n': self.n, 'h': self.h}


@dataclass
class SystemState:
    """격자 위 ℓ 개 성분과 성분별 대칭 표지"""
    grid: Grid
    fields: np.ndarray
    tags: List[PhiKind] = None
    energy: Optional[float] = None
    block_norms: Optional[np.ndarray] = None

    def __post_init__(self):
        self.fields = np.asarray(self.fields, dtype=float)
        if self.fields.ndim != self.grid.N + 1 or self.fields.shape[1:] != self.grid.shape:
            raise GridMismatchError(f"성분 배열 {self.fields.shape} 이 격자 {self.grid.shape} 와 맞지 않습니다")
        if self.tags is None:
            self.tags = [PhiKind.TRIVIAL] * self.ell
        self.tags = [PhiKind(t) for t in self.tags]
        if len(self.tags) != self.ell:
            raise GridMismatchError(f"표지 {len(self.tags)} 개와 성분 {self.ell} 개가 맞지 않습니다")

    @property
    def ell(self) -> int:
        return int(self.fields.shape[0])

    def copy(self) -> 'SystemState':
        return SystemState(self.grid, self.fields.copy(), list(self.tags), self.energy,
                           None if self.block_norms is None else self.block_norms.copy())

    def header(self) -> Dict:
        return {**self.grid.to_dict(), 'ell': self.ell, 'tags': [t.value for t in self.tags],
                'energy': self.energy}

    def save(self, path: Union[str, Path], metadata: Optional[Dict] = None) -> Path:
        """압축 npz (fields + JSON 헤더) 로 저장"""
        path = Path(path)
        if path.suffix != '.npz':
            path = path.with_name(path.name + '.npz')
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {**self.header(), **(metadata or {})}
        np.savez_compressed(path, fields=self.fields, header=np.array(json.dumps(header, default=str)))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'SystemState':
        with np.load(Path(path), allow_pickle=False) as data:
            header = json.loads(str(data['header']))
            fields = data['fields']
        grid = Grid(int(header['N']), float(header['L']), int(header['n']))
        return cls(grid, fields, header['tags'], header.get('energy'))

    @staticmethod
    def read_header(path: Union[str, Path]) -> Dict:
        with np.load(Path(path), allow_pickle=False) as data:
            return json.loads(str(data['header']))


class DiscreteSystem:
    """고정 격자 위 이산 범함수와 그 기울기"""

    def __init__(self, spec: SystemSpec, grid: Grid):
        if grid.N != spec.N:
            raise GridMismatchError(f"격자 차원 {grid.N} 이 방정식 차원 {spec.N} 과 다릅니다")
        self.spec = spec
        self.grid = grid
        self.p = spec.p
        self.beta = spec.beta.entries
        radius = grid.radius()
        self.V = np.stack([pot(radius) for pot in spec.potentials])

    def check(self, fields: np.ndarray):
        if fields.shape != (self.spec.ell,) + self.grid.shape:
            raise GridMismatchError(f"성분 배열 {fields.shape} 이 "
                                    f"{(self.spec.ell,) + self.grid.shape} 와 맞지 않습니다")

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        return ndimage.laplace(u, mode='constant', cval=0.0) / self.grid.h ** 2

    def norms(self, fields: np.ndarray) -> np.ndarray:
        """성분별 ∫(|∇u_i|² + V_i u_i²)"""
        cell = self.grid.cell
        return np.array([
            float(-np.sum(u * self.laplacian(u)) * cell + np.sum(V * u * u) * cell)
            for u, V in zip(fields, self.V)
        ])

    def interaction_matrix(self, fields: np.ndarray) -> np.ndarray:
        """M_ij = ∫|u_i|^p |u_j|^p"""
        powers = np.abs(fields.reshape(fields.shape[0], -1)) ** self.p
        return powers @ powers.T * self.grid.cell

    def energy(self, fields: np.ndarray) -> float:
        self.check(fields)
        interaction = float(np.sum(self.beta * self.interaction_matrix(fields)))
        return 0.5 * float(np.sum(self.norms(fields))) - interaction / (2 * self.p)

    def gradient(self, fields: np.ndarray) -> np.ndarray:
        self.check(fields)
        p = self.p
        powers = np.abs(fields) ** p
        coupling = np.tensordot(self.beta, powers, axes=(1, 0))
        out = np.empty_like(fields)
        for i, u in enumerate(fields):
            out[i] = -self.laplacian(u) + self.V[i] * u - coupling[i] * np.sign(u) * np.abs(u) ** (p - 1)
        return out

    def l2_norms(self, fields: np.ndarray) -> np.ndarray:
        flat = fields.reshape(fields.shape[0], -1)
        return np.sqrt(np.sum(flat ** 2, axis=1) * self.grid.cell)

    def residual(self, fields: np.ndarray) -> np.ndarray:
        """성분별 ‖(−Δ_h+V_i)u_i − Σβ_ij|u_j|^p|u_i|^{p-2}u_i‖ / ‖u_i‖"""
        grad_norms = self.l2_norms(self.gradient(fields))
        norms = self.l2_norms(fields)
        out = np.zeros_like(norms)
        nonzero = norms > 0
        out[nonzero] = grad_norms[nonzero] / norms[nonzero]
        return out

    def block_quantities(self, fields: np.ndarray,
                         decomposition: BlockDecomposition) -> Tuple[np.ndarray, np.ndarray]:
        """블록 노름 A_h 와 블록 상호작용 B_hk"""
        norms = self.norms(fields)
        weighted = self.beta * self.interaction_matrix(fields)
        q = decomposition.q
        A = np.empty(q)
        B = np.empty((q, q))
        for h in range(1, q + 1):
            rows = decomposition.block_indices(h)
            A[h - 1] = norms[rows].sum()
            for k in range(1, q + 1):
                B[h - 1, k - 1] = weighted[np.ix_(rows, decomposition.block_indices(k))].sum()
        return A, B


def _system_for(state: SystemState, spec: SystemSpec) -> DiscreteSystem:
    if state.ell != spec.ell:
        raise GridMismatchError(f"상태 성분 {state.ell} 개와 방정식 성분 {spec.ell} 개가 다릅니다")
    return DiscreteSystem(spec, state.grid)


def energy(state: SystemState, spec: SystemSpec) -> float:
    """J(u) = ½ Σ‖u_i‖² − 1/(2p) Σ β_ij ∫|u_i|^p|u_j|^p"""
    return _system_for(state, spec).energy(state.fields)


def gradient(state: SystemState, spec: SystemSpec) -> np.ndarray:
    """이산 L² 기울기"""
    return _system_for(state, spec).gradient(state.fields)


def residual(state: SystemState, spec: SystemSpec) -> np.ndarray:
    """성분별 정규화된 방정식 잔차"""
    return _system_for(state, spec).residual(state.fields)


def bump_field(grid: Grid, profile: RadialProfile, centers: np.ndarray,
               signs: Optional[np.ndarray] = None) -> np.ndarray:
    """Σ_c sign_c ω(|x − c|) 를 격자 위에서 계산"""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if signs is None:
        signs = np.ones(centers.shape[0])
    mesh = np.meshgrid(*grid.axes, indexing='ij', sparse=True)
    out = np.zeros(grid.shape)
    for center, sign in zip(centers, signs):
        r = np.sqrt(sum((c - x0) ** 2 for c, x0 in zip(mesh, center)))
        out += sign * profile.evaluate(np.broadcast_to(r, grid.shape))
    return out


def _block_geometry(kind: PhiKind, offset: int, radius: float, group: Optional[SymmetryGroup],
                    N: int) -> Tuple[np.ndarray, np.ndarray]:
    """블록 씨앗의 범프 중심과 부호 (offset 0 은 원점 중심)"""
    if offset == 0:
        return np.zeros((1, N)), np.ones(1)
    R = offset * radius
    axis = np.zeros(N)
    axis[0] = 1.0
    if group is None:
        if kind is PhiKind.THETA:
            return np.array([R * axis, -R * axis]), np.array([1.0, -1.0])
        return np.array([R * axis]), np.ones(1)
    zeta = axis if group.mode is GroupMode.REFLECTION else group.anchor(kind)
    points, signs = group.orbit(zeta, kind)
    return R * points, signs


def seed_state(spec: SystemSpec, decomposition: BlockDecomposition, grid: Grid, profile: RadialProfile,
               radius: Optional[float] = None, group: Optional[SymmetryGroup] = None) -> SystemState:
    """블록별 궤도 중심 R g ζ_h 에 ω 범프를 놓은 초기 상태"""
    if decomposition.ell != spec.ell:
        raise PdeError(f"블록 분해의 성분 수 {decomposition.ell} 가 방정식 {spec.ell} 과 다릅니다")
    if radius is None:
        radius = 0.4 * grid.L
    fields = np.zeros((spec.ell,) + grid.shape)
    centered_used = False
    offset = 0
    for h in range(1, decomposition.q + 1):
        kind = decomposition.signs.kind(h)
        if kind is PhiKind.TRIVIAL and not centered_used:
            centered_used = True
            block_offset = 0
        else:
            offset += 1
            block_offset = offset
        centers, signs = _block_geometry(kind, block_offset, radius, group, spec.N)
        if np.max(np.abs(centers)) >= grid.L:
            raise PdeError(f"블록 {h} 의 씨앗 중심이 상자 [-{grid.L}, {grid.L}] 밖에 있습니다")
        bump = bump_field(grid, profile, centers, signs)
        rows = decomposition.block_indices(h)
        amplitudes = np.ones(rows.size)
        if rows.size > 1:
            tbar = synchronized_coefficients(spec.beta.submatrix(rows), spec.p)
            amplitudes = np.maximum(tbar, 0.1 * np.max(tbar))
        for i, a in zip(rows, amplitudes):
            fields[i] = a * bump
        logger.debug(f"블록 {h} ({kind.value}) 씨앗: 범프 {centers.shape[0]} 개")
    return SystemState(grid, fields, decomposition.component_kinds())


@dataclass
class SolverConfig:
    """기울기 흐름 풀이기 설정"""
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

    def __post_init__(self):
        if not 0 < self.step_factor < 1:
            raise PdeError(f"step_factor 는 (0, 1) 안이어야 합니다: {self.step_factor}")
        if self.tol <= 0 or self.max_iterations < 0 or self.log_interval < 1 or self.projection_interval < 1:
            raise PdeError("tol, max_iterations, log_interval, projection_interval 값이 잘못되었습니다")

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class SolveResult:
    """풀이 결과: 최종 상태, 수렴 기록, 진단값"""
    state: SystemState
    log: pd.DataFrame
    converged: bool
    iterations: int
    energy: float
    residuals: np.ndarray
    norms: np.ndarray
    scaling: Optional[NehariScaling] = None
    equivariance_errors: List[float] = field(default_factory=list)

    def summary(self) -> Dict:
        return {
            'converged': self.converged,
            'iterations': self.iterations,
            'energy': self.energy,
            'residuals': self.residuals.tolist(),
            'norms': self.norms.tolist(),
            'norm_total': float(np.sum(self.norms)),
            'equivariance_errors': self.equivariance_errors,
            'signs': sign_diagnostics(self.state),
        }


class SystemSolver:
    """기울기 강하 → 대칭 사영 → 블록별 Nehari 수축을 반복"""

    def __init__(self, config: Optional[SolverConfig] = None, profile: Optional[RadialProfile] = None):
        self.config = config or SolverConfig()
        self.profile = profile
        self.logger = logging.getLogger('SystemSolver')

    def _group(self, spec: SystemSpec, decomposition: BlockDecomposition) -> Optional[SymmetryGroup]:
        if not self.config.symmetric:
            return None
        if spec.N == 3:
            self.logger.warning("N=3 에는 대칭 구성이 없어 사영 없이 풉니다")
            return None
        group = SymmetryGroup(self.config.fold, spec.N)
        for h in range(1, decomposition.q + 1):
            if not group.supports(decomposition.signs.kind(h)):
                raise PdeError(f"블록 {h} 의 θ 표지는 {spec.N} 차원 대칭 구성에서 지원되지 않습니다")
        return group

    def _project(self, fields: np.ndarray, tags: List[PhiKind],
                 projector: Optional[EquivariantProjector]) -> np.ndarray:
        if projector is None:
            return fields
        return np.stack([projector.project(u, kind) for u, kind in zip(fields, tags)])

    def _check_collapse(self, system: DiscreteSystem, fields: np.ndarray):
        norms = system.l2_norms(fields)
        weakest = int(np.argmin(norms))
        if norms[weakest] < COLLAPSE_THRESHOLD:
            raise BlockCollapseError(weakest + 1, float(norms[weakest]))

    def _retract(self, system: DiscreteSystem, fields: np.ndarray,
                 decomposition: BlockDecomposition) -> Tuple[np.ndarray, NehariScaling]:
        A, B = system.block_quantities(fields, decomposition)
        scaling = nehari_project(A, B, system.p)
        per_component = np.empty(fields.shape[0])
        for h in range(1, decomposition.q + 1):
            per_component[decomposition.block_indices(h)] = scaling.s[h - 1]
        return fields * per_component.reshape((-1,) + (1,) * system.grid.N), scaling

    def _finish(self, system: DiscreteSystem, fields: np.ndarray, tags: List[PhiKind],
                decomposition: BlockDecomposition, rows: List[Dict], iterations: int, converged: bool,
                projector: Optional[EquivariantProjector]) -> SolveResult:
        A, B = system.block_quantities(fields, decomposition)
        on_manifold = NehariScaling(s=np.ones(decomposition.q), block_norms=A, interactions=B,
                                    p=system.p, iterations=0)
        J = energy_on_nehari(on_manifold, system.p, tol=1e-8)
        state = SystemState(system.grid, fields, tags, energy=J, block_norms=A)
        errors = []
        if projector is not None:
            errors = [projector.equivariance_error(u, kind) for u, kind in zip(fields, tags)]
        return SolveResult(state=state, log=pd.DataFrame(rows), converged=converged, iterations=iterations,
                           energy=J, residuals=system.residual(fields), norms=system.norms(fields),
                           scaling=on_manifold, equivariance_errors=errors)

    def solve(self, spec: SystemSpec, decomposition: BlockDecomposition,
              seed: Optional[SystemState] = None) -> SolveResult:
        cfg = self.config
        if decomposition.ell != spec.ell:
            raise PdeError(f"블록 분해의 성분 수 {decomposition.ell} 가 방정식 {spec.ell} 과 다릅니다")
        group = self._group(spec, decomposition)
        grid = seed.grid if seed is not None else Grid(spec.N, cfg.L, cfg.n)
        system = DiscreteSystem(spec, grid)
        tags = decomposition.component_kinds()
        projector = EquivariantProjector(grid.axes, group) if group is not None else None

        if seed is None:
            if self.profile is None:
                self.profile = solve_radial_ground_state(spec.N, spec.p)
            seed = seed_state(spec, decomposition, grid, self.profile, cfg.seed_radius, group)
        system.check(seed.fields)

        fields = self._project(seed.fields.copy(), tags, projector)
        self._check_collapse(system, fields)
        fields, _ = self._retract(system, fields, decomposition)
        J = system.energy(fields)

        tau = cfg.step_factor / (4 * spec.N / grid.h ** 2 + spec.Lambda)
        step = tau
        residuals = system.residual(fields)
        rows = [{'iteration': 0, 'energy': J, 'residual': float(np.max(residuals)), 'step': step}]
        self.logger.info(f"풀이 시작: N={spec.N}, ℓ={spec.ell}, n={grid.n}, h={grid.h:.4g}, "
                         f"J0={J:.10g}, 잔차={rows[0]['residual']:.3e}")
        converged = bool(np.max(residuals) < cfg.tol)
        iteration = 0
        rejected = 0

        while not converged and iteration < cfg.max_iterations:
            iteration += 1
            candidate = fields - step * system.gradient(fields)
            if iteration % cfg.projection_interval == 0:
                candidate = self._project(candidate, tags, projector)
            try:
                self._check_collapse(system, candidate)
            except BlockCollapseError as e:
                e.result = self._finish(system, fields, tags, decomposition, rows, iteration - 1, False, projector)
                self.logger.error(f"블록 소멸: {e}")
                raise
            candidate, _ = self._retract(system, candidate, decomposition)
            J_new = system.energy(candidate)

            if J_new > J + ENERGY_SLACK * max(1.0, abs(J)):
                step *= 0.5
                rejected += 1
                self.logger.debug(f"반복 {iteration}: 에너지 증가 {J_new - J:.3e}, 보폭 {step:.3e} 로 축소")
                if step < tau * 1e-12:
                    break
                continue
            fields, J = candidate, J_new

            if iteration % cfg.log_interval == 0:
                residuals = system.residual(fields)
                worst = float(np.max(residuals))
                rows.append({'iteration': iteration, 'energy': J, 'residual': worst, 'step': step})
                self.logger.debug(f"반복 {iteration}: J={J:.12g}, 잔차={worst:.3e}")
                converged = worst < cfg.tol

        result = self._finish(system, fields, tags, decomposition, rows, iteration, converged, projector)
        if not converged:
            self.logger.error(f"수렴 실패: {iteration} 회, 잔차 {float(np.max(result.residuals)):.3e}")
            raise MaxIterationsError(result)
        self.logger.info(f"수렴: {iteration} 회, J={result.energy:.10g}, "
                         f"잔차={float(np.max(result.residuals)):.3e}, 보폭 축소 {rejected} 회")
        return result


def solve_system(spec: SystemSpec, decomposition: BlockDecomposition, config: Optional[SolverConfig] = None,
                 seed: Optional[SystemState] = None, profile: Optional[RadialProfile] = None) -> SolveResult:
    """N^φ 위 J^φ 최소화 (수렴 상태의 에너지는 c^φ 의 상계)"""
    return SystemSolver(config, profile).solve(spec, decomposition, seed)


def overlap_ratio(state: SystemState, i: int, j: int, p: float) -> float:
    """∫|u_i|^p|u_j|^p / ∫|u_i|^{2p} (1-기준 성분 번호)"""
    ui = np.abs(state.fields[i - 1]) ** p
    uj = np.abs(state.fields[j - 1]) ** p
    self_term = float(np.sum(ui * ui))
    if self_term == 0:
        raise PdeError(f"성분 {i} 가 0 입니다")
    return float(np.sum(ui * uj)) / self_term


def sign_diagnostics(state: SystemState, tol: float = 1e-6) -> List[Dict]:
    """성분별 양수 / 부호 변화 / 자명 여부와 블록 표지와의 일치"""
    out = []
    for i, (u, kind) in enumerate(zip(state.fields, state.tags), start=1):
        scale = float(np.max(np.abs(u)))
        trivial = scale == 0
        positive = not trivial and float(np.min(u)) >= -tol * scale
        sign_changing = not trivial and float(np.min(u)) < -tol * scale and float(np.max(u)) > tol * scale
        expected = positive if kind is PhiKind.TRIVIAL else sign_changing
        out.append({'component': i, 'tag': kind.value, 'positive': positive,
                    'sign_changing': sign_changing, 'trivial': trivial, 'consistent': expected})
    return out


@dataclass
class TailSeries:
    """ξ_i(r) = ∫_{|x|≥r} (|∇u_i|² + u_i²) 와 log Σξ_i 의 기울기"""
    radii: np.ndarray
    xi: np.ndarray
    fitted_theta: Optional[float]

    def __post_init__(self):
        if np.any(np.diff(self.xi, axis=1) > 0):
            raise PdeError("ξ_i 가 단조 비증가가 아닙니다")

    @property
    def total(self) -> np.ndarray:
        return self.xi.sum(axis=0)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'radius': self.radii})
        for i, row in enumerate(self.xi, start=1):
            frame[f'xi_{i}'] = row
        frame['xi_total'] = self.total
        return frame


def tail_norms(state: SystemState, radii: Sequence[float],
               fit_window: Optional[Tuple[float, float]] = None) -> TailSeries:
    """마스크 구적으로 꼬리 에너지 계산 (기울기는 변 중점의 전진 차분)"""
    grid = state.grid
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any(np.diff(radii) < 0):
        raise PdeError("radii 는 비어 있지 않은 증가 수열이어야 합니다")
    if radii[0] < 0 or radii[-1] > grid.L:
        raise RadiiOutOfBoxError(f"반경 [{radii[0]}, {radii[-1]}] 이 상자 [0, {grid.L}] 를 벗어납니다")

    h = grid.h
    mesh = np.meshgrid(*grid.axes, indexing='ij', sparse=True)
    midpoints = -grid.L + h * (np.arange(grid.n + 1) + 0.5)
    positions = [np.broadcast_to(grid.radius(), grid.shape).ravel()]
    weights = [state.fields.reshape(state.ell, -1) ** 2]
    for a in range(grid.N):
        pad = [(0, 0)] + [(1, 1) if b == a else (0, 0) for b in range(grid.N)]
        diffs = np.diff(np.pad(state.fields, pad), axis=a + 1) / h
        shape = [1] * grid.N
        shape[a] = grid.n + 1
        coords = [midpoints.reshape(shape) if b == a else mesh[b] for b in range(grid.N)]
        r_edge = np.sqrt(sum(c ** 2 for c in coords))
        positions.append(np.broadcast_to(r_edge, diffs.shape[1:]).ravel())
        weights.append(diffs.reshape(state.ell, -1) ** 2)
    position = np.concatenate(positions)
    weight = np.concatenate(weights, axis=1) * grid.cell

    order = np.argsort(position, kind='stable')
    position = position[order]
    suffix = np.cumsum(weight[:, order][:, ::-1], axis=1)[:, ::-1]
    suffix = np.concatenate([suffix, np.zeros((state.ell, 1))], axis=1)
    xi = suffix[:, np.searchsorted(position, radii, side='left')]

    total = xi.sum(axis=0)
    usable = total > 0
    if fit_window is not None:
        usable &= (radii >= fit_window[0]) & (radii <= fit_window[1])
    theta = None
    if usable.sum() >= 2:
        theta = -float(np.polyfit(radii[usable], np.log(total[usable]), 1)[0])
    return TailSeries(radii=radii, xi=xi, fitted_theta=theta)


@dataclass
class EnvelopeSamples:
    """반경별 포락선 표본 (성분 × 반경)"""
    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != self.radii.size:
            raise PdeError("포락선 표본과 반경의 길이가 다릅니다")


def annulus_envelope(state: SystemState, width: Optional[float] = None) -> EnvelopeSamples:
    """폭 width 의 구면 껍질마다 max|u_i| (껍질 반경은 절점 반경의 평균)"""
    grid = state.grid
    width = width or grid.h
    r = np.broadcast_to(grid.radius(), grid.shape).ravel()
    index = np.floor(r / width + 1e-9).astype(int)
    counts = np.bincount(index)
    occupied = counts > 0
    radii = np.bincount(index, weights=r)[occupied] / counts[occupied]
    values = np.zeros((state.ell, counts.size))
    for i, u in enumerate(state.fields):
        np.maximum.at(values[i], index, np.abs(u).ravel())
    return EnvelopeSamples(radii=radii, values=values[:, occupied])


def _regress(radii: np.ndarray, envelope: np.ndarray) -> Tuple[float, float, float]:
    """log 포락선의 선형 회귀: (율, 전인자, RMS 잔차)"""
    logs = np.log(envelope)
    slope, intercept = np.polyfit(radii, logs, 1)
    fitted = slope * radii + intercept
    return -float(slope), float(math.exp(intercept)), float(np.sqrt(np.mean((logs - fitted) ** 2)))


def _window_samples(radii: np.ndarray, envelope: np.ndarray, window: Tuple[float, float],
                    noise_floor: float) -> Tuple[np.ndarray, np.ndarray]:
    ra, rb = window
    mask = (radii >= ra) & (radii <= rb)
    if mask.sum() < 4:
        raise DegenerateFitError(f"구간 [{ra}, {rb}] 안의 껍질이 {int(mask.sum())} 개뿐입니다")
    if np.any(envelope[mask] <= noise_floor):
        raise WindowBelowNoiseError(f"구간 [{ra}, {rb}] 안에서 포락선이 잡음 하한 {noise_floor:g} 이하입니다")
    return radii[mask], envelope[mask]


@dataclass
class ComponentDecay:
    component: int
    rate: float
    prefactor: float
    window: Tuple[float, float]
    residual: float
    comparison: float
    threshold: float
    annuli: int

    @property
    def passed(self) -> bool:
        return self.rate >= self.threshold


@dataclass
class DecayFit:
    """성분별 적합 감쇠율 μ̂_i 와 √σ_i 비교"""
    components: List[ComponentDecay]
    noise_floor: float
    rel_tol: float

    @property
    def rates(self) -> np.ndarray:
        return np.array([c.rate for c in self.components])

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.components)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'component': c.component, 'rate': c.rate, 'prefactor': c.prefactor,
            'r_a': c.window[0], 'r_b': c.window[1], 'residual': c.residual,
            'comparison': c.comparison, 'threshold': c.threshold, 'annuli': c.annuli,
            'status': 'PASS' if c.passed else 'FAIL',
        } for c in self.components])


def fit_decay(source: Union[SystemState, RadialProfile, EnvelopeSamples],
              window: Union[Tuple[float, float], Sequence[Tuple[float, float]]],
              spec: Optional[SystemSpec] = None, noise_floor: float = 1e-9, rel_tol: float = 0.05,
              annulus_width: Optional[float] = None, sigma: Optional[Sequence[float]] = None) -> DecayFit:
    """구면 최댓값 포락선의 log 를 r 에 회귀하여 감쇠율 추정"""
    if isinstance(source, SystemState):
        samples = annulus_envelope(source, annulus_width)
    elif isinstance(source, RadialProfile):
        samples = EnvelopeSamples(source.radii, source.values)
    else:
        samples = source
    ell = samples.values.shape[0]

    windows = list(window) if np.ndim(window) == 2 else [tuple(window)] * ell
    if len(windows) != ell:
        raise PdeError(f"적합 구간 {len(windows)} 개와 성분 {ell} 개가 맞지 않습니다")

    if spec is not None:
        comparisons = [1.0 if pot.autonomous else math.sqrt(pot.sigma) for pot in spec.potentials]
    elif sigma is not None:
        comparisons = [math.sqrt(s) for s in sigma]
    else:
        comparisons = [1.0] * ell

    components = []
    for i in range(ell):
        radii, envelope = _window_samples(samples.radii, samples.values[i], windows[i], noise_floor)
        rate, prefactor, fit_residual = _regress(radii, envelope)
        comparison = comparisons[i]
        threshold = comparison * (1.0 - rel_tol)
        decay = ComponentDecay(component=i + 1, rate=rate, prefactor=prefactor, window=tuple(windows[i]),
                               residual=fit_residual, comparison=comparison, threshold=threshold,
                               annuli=int(radii.size))
        if not decay.passed:
            logger.warning(f"성분 {i + 1}: 적합 감쇠율 {rate:.4f} < 기준 {threshold:.4f}")
        components.append(decay)
    return DecayFit(components=components, noise_floor=noise_floor, rel_tol=rel_tol)


def sliding_decay_rates(radii, envelope, windows: Sequence[Tuple[float, float]],
                        noise_floor: float = 0.0) -> pd.DataFrame:
    """이동 구간별 지수 감쇠율 (지수 감쇠가 아니면 바깥으로 갈수록 0 으로)"""
    radii = np.asarray(radii, dtype=float)
    envelope = np.abs(np.asarray(envelope, dtype=float))
    rows = []
    for ra, rb in windows:
        r, env = _window_samples(radii, envelope, (ra, rb), noise_floor)
        rate, prefactor, fit_residual = _regress(r, env)
        rows.append({'r_a': ra, 'r_b': rb, 'rate': rate, 'prefactor': prefactor,
                     'residual': fit_residual, 'annuli': int(r.size)})
    return pd.DataFrame(rows)


def decay_chain_holds(tail: TailSeries, fit: DecayFit, slack: float = 0.1) -> bool:
    """ϑ̂ ≥ 2 min μ̂_i − slack"""
    if tail.fitted_theta is None:
        return False
    return tail.fitted_theta >= 2.0 * float(np.min(fit.rates)) - slack
