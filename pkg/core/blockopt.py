"""
블록 최적화 모듈
블록 상수 μ_h, 동기화 계수, Nehari 사영, 에너지 항등식, 에너지 상계 산술, 컴팩트성 임계 검사
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.coupling import PhiKind, SignPartition
from core.groundstate import RadialProfile, critical_exponent
from core.symmetry import compute_dm

logger = logging.getLogger(__name__)


class BlockOptError(ValueError):
    """블록 최적화 모듈 기본 오류"""


class NonPositiveFormError(BlockOptError):
    """구면 위에서 F ≤ 0"""


class ConditionNFailsError(BlockOptError):
    def __init__(self, h: int, total: float):
        self.h = h
        self.total = total
        super().__init__(f"블록 {h} 에서 Σ_k 상호작용 = {total:.6g} ≤ 0 (조건 N 위반)")


class NewtonDivergedError(BlockOptError):
    """Nehari Newton 반복이 수렴하지 않음"""


class NotOnNehariError(BlockOptError):
    """Nehari 항등식 잔차가 허용치를 넘음"""


class EmptyQError(BlockOptError):
    """블록 집합 Q 가 비어 있음"""


def form_value(block_beta: np.ndarray, s: np.ndarray, p: float) -> float:
    """F(s) = Σ β_ij s_i^p s_j^p"""
    sp = np.abs(s) ** p
    return float(sp @ block_beta @ sp)


@dataclass
class MuResult:
    """블록 상수 μ_h 와 최적 방향"""
    mu: float
    argmin: np.ndarray
    block: int
    multistart_spread: float
    objective: float
    restarts: int = 1

    def __post_init__(self):
        if not self.mu > 0:
            raise BlockOptError(f"μ 는 양수여야 합니다: {self.mu}")

    def to_dict(self) -> Dict:
        return {
            'block': self.block, 'mu': self.mu, 'argmin': self.argmin.tolist(),
            'multistart_spread': self.multistart_spread, 'F_max': self.objective,
            'restarts': self.restarts,
        }


class BlockConstantOptimizer:
    """구면 위 사영 경사 상승 + 다중 시작"""

    def __init__(self, restarts: int = 32, seed: int = 0, max_iterations: int = 20000,
                 max_workers: Optional[int] = None):
        self.restarts = restarts
        self.seed = seed
        self.max_iterations = max_iterations
        self.max_workers = max_workers
        self.logger = logging.getLogger('BlockConstantOptimizer')

    def _ascend(self, beta: np.ndarray, s: np.ndarray, p: float) -> Tuple[np.ndarray, float]:
        value = form_value(beta, s, p)
        step = 1.0 / (2 * p * max(float(np.abs(beta).sum()), 1e-300))
        for _ in range(self.max_iterations):
            gradient = 2 * p * s ** (p - 1) * (beta @ s ** p)
            while True:
                candidate = np.maximum(s + step * gradient, 0.0)
                norm = np.linalg.norm(candidate)
                if norm > 0:
                    candidate /= norm
                    candidate_value = form_value(beta, candidate, p)
                    if candidate_value >= value:
                        break
                step *= 0.5
                if step < 1e-300:
                    return s, value
            moved = float(np.linalg.norm(candidate - s))
            gain = candidate_value - value
            s, value = candidate, candidate_value
            step *= 1.5
            if moved < 1e-13 or gain <= 1e-16 * abs(value):
                break
        return s, value

    def optimize(self, block_beta, p: float, block: int = 1) -> MuResult:
        beta = np.array(block_beta, dtype=float, ndmin=2)
        k = beta.shape[0]
        if beta.shape != (k, k) or not np.allclose(beta, beta.T):
            raise BlockOptError("블록 행렬은 대칭 정방행렬이어야 합니다")
        if np.any(np.diag(beta) <= 0) or np.any(beta[~np.eye(k, dtype=bool)] < 0):
            raise BlockOptError("블록 내부 행렬이 (B1) 조건(대각 양수, 비대각 ≥ 0)을 만족하지 않습니다")
        if not p > 1:
            raise BlockOptError(f"p 는 1 보다 커야 합니다: {p}")

        if k == 1:
            value = float(beta[0, 0])
            return MuResult(mu=value ** (-1.0 / (p - 1)), argmin=np.ones(1), block=block,
                            multistart_spread=0.0, objective=value)

        rng = np.random.default_rng(self.seed)
        starts = rng.random((self.restarts, k)) + 1e-3
        starts /= np.linalg.norm(starts, axis=1, keepdims=True)

        if self.max_workers and self.max_workers > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                outcomes = list(executor.map(lambda s0: self._ascend(beta, s0, p), starts))
        else:
            outcomes = [self._ascend(beta, s0, p) for s0 in starts]

        values = np.array([value for _, value in outcomes])
        best = float(values.max())
        if best <= 0:
            raise NonPositiveFormError(f"블록 {block}: F_max = {best} ≤ 0")
        tied = [s for s, value in outcomes if value >= best * (1 - 1e-12)]
        argmin = min(tied, key=lambda s: tuple(np.round(s, 12)))
        mus = values[values > 0] ** (-1.0 / (p - 1))
        spread = float(mus.max() - mus.min()) if mus.size else 0.0
        mu = best ** (-1.0 / (p - 1))
        self.logger.debug(f"블록 {block}: μ={mu:.10g}, F_max={best:.10g}, 분산={spread:.2e}")
        return MuResult(mu=mu, argmin=argmin, block=block, multistart_spread=spread,
                        objective=best, restarts=self.restarts)


def compute_mu(block_beta, p: float, restarts: int = 32, seed: int = 0, block: int = 1,
               max_workers: Optional[int] = None) -> MuResult:
    """μ_h = F_max^{-1/(p-1)}"""
    optimizer = BlockConstantOptimizer(restarts=restarts, seed=seed, max_workers=max_workers)
    return optimizer.optimize(block_beta, p, block=block)


def synchronized_coefficients(block_beta, p: float, mu_result: Optional[MuResult] = None) -> np.ndarray:
    """Σ t_i² = Σ β_ij t_i^p t_j^p = μ_h 를 만족하는 t̄_h"""
    if mu_result is None:
        mu_result = compute_mu(block_beta, p)
    return math.sqrt(mu_result.mu) * np.asarray(mu_result.argmin, dtype=float)


def synchronized_solution_norm(tbar: np.ndarray, omega: RadialProfile) -> float:
    """(t_1ω, …, t_kω) 의 에너지 노름 Σ t_i² ‖ω‖²"""
    return float(np.sum(np.asarray(tbar) ** 2) * omega.norm_sq)


@dataclass
class NehariScaling:
    """블록별 배율 s_u 와 블록 노름/상호작용"""
    s: np.ndarray
    block_norms: np.ndarray
    interactions: np.ndarray
    p: float
    iterations: int = 0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.block_norms = np.asarray(self.block_norms, dtype=float)
        self.interactions = np.atleast_2d(np.asarray(self.interactions, dtype=float))
        q = self.s.size
        if self.block_norms.shape != (q,) or self.interactions.shape != (q, q):
            raise BlockOptError("s, block_norms, interactions 의 차원이 맞지 않습니다")

    @property
    def residuals(self) -> np.ndarray:
        """블록별 상대 잔차 |s_h² A_h - Σ_k s_h^p s_k^p B_hk| / (s_h² A_h)"""
        lhs = self.s ** 2 * self.block_norms
        sp = self.s ** self.p
        rhs = sp * (self.interactions @ sp)
        return np.abs(lhs - rhs) / np.abs(lhs)

    def to_dict(self) -> Dict:
        return {
            's': self.s.tolist(), 'block_norms': self.block_norms.tolist(),
            'interactions': self.interactions.tolist(), 'residuals': self.residuals.tolist(),
            'iterations': self.iterations,
        }


def check_condition_n(interactions: np.ndarray):
    totals = np.atleast_2d(interactions).sum(axis=1)
    for h, total in enumerate(totals, start=1):
        if not total > 0:
            raise ConditionNFailsError(h, float(total))


def nehari_project(block_norms, interactions, p: float, start: Optional[Sequence[float]] = None,
                   tol: float = 1e-13, max_iterations: int = 200) -> NehariScaling:
    """감쇠 Newton 으로 Nehari 방정식의 유일한 양의 해 s 계산"""
    A = np.asarray(block_norms, dtype=float)
    B = np.atleast_2d(np.asarray(interactions, dtype=float))
    q = A.size
    if B.shape != (q, q):
        raise BlockOptError(f"상호작용 행렬 크기 {B.shape} 가 q={q} 와 맞지 않습니다")
    if np.any(A <= 0):
        raise BlockOptError("블록 노름은 양수여야 합니다")
    check_condition_n(B)

    def residual(s):
        sp = s ** p
        return 1.0 - s ** (p - 2) * (B @ sp) / A

    def jacobian(s):
        sp = s ** p
        coupling = B @ sp
        J = -(s[:, None] ** (p - 2)) * B * (p * s[None, :] ** (p - 1)) / A[:, None]
        J[np.diag_indices(q)] = -((p - 2) * s ** (p - 3) * coupling
                                  + p * np.diag(B) * s ** (2 * p - 3)) / A
        return J

    s = np.ones(q) if start is None else np.asarray(start, dtype=float).copy()
    if np.any(s <= 0):
        raise BlockOptError("Newton 시작점은 양수여야 합니다")
    phi = residual(s)
    merit = float(np.linalg.norm(phi))
    iterations = 0
    while merit > tol and iterations < max_iterations:
        iterations += 1
        try:
            delta = np.linalg.solve(jacobian(s), -phi)
        except np.linalg.LinAlgError as e:
            raise NewtonDivergedError(f"Newton 야코비안이 특이합니다: {e}")
        damping = 1.0
        while np.any(s + damping * delta <= 0):
            damping *= 0.5
        while True:
            candidate = s + damping * delta
            candidate_phi = residual(candidate)
            candidate_merit = float(np.linalg.norm(candidate_phi))
            if candidate_merit < merit or damping < 1e-12:
                break
            damping *= 0.5
        if damping < 1e-12 and candidate_merit >= merit:
            raise NewtonDivergedError(f"Newton 감쇠가 한계에 도달했습니다 (잔차 {merit:.3e})")
        s, phi, merit = candidate, candidate_phi, candidate_merit

    if merit > max(tol, 1e-10):
        raise NewtonDivergedError(f"{max_iterations} 회 안에 수렴하지 않았습니다 (잔차 {merit:.3e})")
    return NehariScaling(s=s, block_norms=A, interactions=B, p=p, iterations=iterations)


def energy_on_nehari(scaling: NehariScaling, p: float, tol: float = 1e-10) -> float:
    """J = (p-1)/(2p) Σ s_h² ‖ū_h‖², 두 식의 일치 확인"""
    if float(np.max(scaling.residuals)) > tol:
        raise NotOnNehariError(f"Nehari 잔차 {np.max(scaling.residuals):.3e} > {tol}")
    weighted = scaling.s ** 2 * scaling.block_norms
    identity = (p - 1) / (2 * p) * float(np.sum(weighted))
    sp = scaling.s ** p
    full = 0.5 * float(np.sum(weighted)) - float(sp @ scaling.interactions @ sp) / (2 * p)
    if abs(identity - full) > tol * max(abs(identity), 1e-300):
        raise NotOnNehariError(f"에너지 두 식이 다릅니다: {identity} vs {full}")
    return identity


def bound_constants(kind: PhiKind, fold: int) -> Tuple[int, int]:
    """(a_k, b_h): Q⁺ 는 (1, m), Q⁻ 는 (2m, 2m)"""
    if kind is PhiKind.TRIVIAL:
        return 1, fold
    return 2 * fold, 2 * fold


def fold_exponent_window(m: int, N: int) -> Dict:
    """d_m < p < N/(N-2) 구간과 비어 있는지 여부"""
    low = compute_dm(m)
    high = critical_exponent(N)
    return {'fold': m, 'N': N, 'low': low, 'high': high, 'nonempty': high > low}


@dataclass
class BoundReport:
    """‖u‖² 상계 보고서"""
    per_candidate: Dict[int, float]
    bound: float
    argmin: int
    a: Dict[int, int]
    b: Dict[int, int]
    fold: int
    omega_norm_sq: float
    equality: bool = False
    corollary: Optional[float] = None
    mu_star: Optional[float] = None
    fold_hypothesis: Optional[bool] = None

    def __post_init__(self):
        for k, value in self.a.items():
            if value not in (1, 2 * self.fold):
                raise BlockOptError(f"a_{k}={value} 는 1 또는 {2 * self.fold} 이어야 합니다")
        for h, value in self.b.items():
            if value not in (self.fold, 2 * self.fold):
                raise BlockOptError(f"b_{h}={value} 는 {self.fold} 또는 {2 * self.fold} 이어야 합니다")

    @property
    def strict(self) -> bool:
        return not self.equality

    def to_dict(self) -> Dict:
        return {
            'per_candidate': {str(k): v for k, v in self.per_candidate.items()},
            'bound': self.bound, 'argmin': self.argmin,
            'a': {str(k): v for k, v in self.a.items()},
            'b': {str(k): v for k, v in self.b.items()},
            'fold': self.fold, 'omega_norm_sq': self.omega_norm_sq,
            'equality': self.equality, 'strict': self.strict,
            'corollary': self.corollary, 'mu_star': self.mu_star,
            'fold_hypothesis': self.fold_hypothesis,
        }


def bound_report(mu: Sequence[float], signs: SignPartition, omega_norm_sq: float,
                 fold: int = 6, single_block_fold: int = 5, p: Optional[float] = None) -> BoundReport:
    """min_k (a_k μ_k + Σ_{h≠k} b_h μ_h) ‖ω‖² 및 보조 따름정리 값"""
    mu = [float(value) for value in mu]
    q = len(mu)
    if q == 0 or signs.q == 0:
        raise EmptyQError("블록 집합 Q 가 비어 있습니다")
    signs.check_covers(q)
    if any(value <= 0 for value in mu):
        raise BlockOptError(f"μ 는 모두 양수여야 합니다: {mu}")
    hypothesis = (p > compute_dm(fold)) if p is not None else None

    if q == 1:
        trivial = 1 in signs.q_plus
        factor = 1 if trivial else 2 * single_block_fold
        value = factor * mu[0]
        return BoundReport(per_candidate={1: value}, bound=value * omega_norm_sq, argmin=1,
                           a={1: 1 if trivial else 2 * single_block_fold},
                           b={1: single_block_fold if trivial else 2 * single_block_fold},
                           fold=single_block_fold, omega_norm_sq=omega_norm_sq, equality=trivial,
                           fold_hypothesis=hypothesis)

    a, b = {}, {}
    for h in range(1, q + 1):
        a[h], b[h] = bound_constants(signs.kind(h), fold)
    per_candidate = {}
    for k in range(1, q + 1):
        per_candidate[k] = a[k] * mu[k - 1] + sum(b[h] * mu[h - 1] for h in range(1, q + 1) if h != k)
    argmin = 1
    for k in range(2, q + 1):
        if per_candidate[k] < per_candidate[argmin]:
            argmin = k

    mu_star = max(mu)
    n_plus, n_minus = len(signs.q_plus), len(signs.q_minus)
    if n_plus:
        corollary = (fold * n_plus + 2 * fold * n_minus - (fold - 1)) * mu_star
    else:
        corollary = 2 * fold * n_minus * mu_star

    return BoundReport(per_candidate=per_candidate, bound=per_candidate[argmin] * omega_norm_sq,
                       argmin=argmin, a=a, b=b, fold=fold, omega_norm_sq=omega_norm_sq,
                       corollary=corollary * omega_norm_sq, mu_star=mu_star,
                       fold_hypothesis=hypothesis)


def competitive_bound(diagonal: Sequence[float], p: float, signs: SignPartition,
                      omega_norm_sq: float, fold: int = 6) -> float:
    """순수 경쟁 결합 (q=ℓ): β_0 = min β_ii 로 닫힌 형태 상계"""
    beta_0 = float(min(diagonal))
    mu_star = beta_0 ** (-1.0 / (p - 1))
    n_plus, n_minus = len(signs.q_plus), len(signs.q_minus)
    if n_plus:
        factor = fold * n_plus + 2 * fold * n_minus - (fold - 1)
    else:
        factor = 2 * fold * n_minus
    return factor * mu_star * omega_norm_sq


@dataclass
class CompactnessReport:
    """c^φ < c^φ_{Q∖{h}} + (m 또는 2m) μ_h (p-1)/(2p) ‖ω‖² 블록별 검사"""
    c_full: float
    thresholds: Dict[int, float]
    passed: Dict[int, bool]
    fold: int
    exploratory: bool = False
    dimension_flag: Optional[str] = None
    note: str = "입력된 수치에 대해서만 부등식을 확인합니다 (c^φ 추정값의 최소성은 보장하지 않음)"

    @property
    def all_pass(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> Dict:
        return {
            'c_full': self.c_full,
            'thresholds': {str(h): v for h, v in self.thresholds.items()},
            'pass': {str(h): v for h, v in self.passed.items()},
            'all_pass': self.all_pass, 'fold': self.fold, 'exploratory': self.exploratory,
            'dimension_flag': self.dimension_flag, 'note': self.note,
        }


def compactness_check(c_full: float, c_sub: Sequence[float], mu: Sequence[float], m: int, p: float,
                      omega_norm_sq: float, signs: SignPartition, N: Optional[int] = None) -> CompactnessReport:
    """블록별 컴팩트성 임계 비교 (엄격 부등호)"""
    q = len(mu)
    if len(c_sub) != q:
        raise BlockOptError(f"c_sub 길이 {len(c_sub)} 가 q={q} 와 다릅니다")
    level = (p - 1) / (2 * p) * omega_norm_sq
    thresholds, passed = {}, {}
    for h in range(1, q + 1):
        orbit = m if h in signs.q_plus else 2 * m
        threshold = float(c_sub[h - 1]) + orbit * float(mu[h - 1]) * level
        thresholds[h] = threshold
        tie = abs(c_full - threshold) <= 1e-12 * max(1.0, abs(threshold))
        passed[h] = bool(c_full < threshold) and not tie
    exploratory = m < 5
    if exploratory:
        logger.warning(f"m={m} < 5: 탐색용 값이며 정리의 가정 밖입니다")
    flag = None
    if N is not None:
        flag = "N=5 는 대칭 구성에서 제외된 차원" if N == 5 else f"N={N}"
    return CompactnessReport(c_full=float(c_full), thresholds=thresholds, passed=passed, fold=m,
                             exploratory=exploratory, dimension_flag=flag)


def subsystem_levels(block_norms, interactions, p: float) -> List[float]:
    """블록 h 를 뺀 부분계의 Nehari 사영 에너지 (c^φ_{Q∖{h}} 의 상계 추정)"""
    A = np.asarray(block_norms, dtype=float)
    B = np.atleast_2d(np.asarray(interactions, dtype=float))
    levels = []
    for h in range(A.size):
        keep = [k for k in range(A.size) if k != h]
        if not keep:
            levels.append(0.0)
            continue
        scaling = nehari_project(A[keep], B[np.ix_(keep, keep)], p)
        levels.append(energy_on_nehari(scaling, p))
    return levels


def mu_table(results: List[MuResult]) -> pd.DataFrame:
    """블록별 μ 결과 표"""
    return pd.DataFrame([{
        'block': r.block, 'mu': r.mu, 'F_max': r.objective,
        'multistart_spread': r.multistart_spread,
        'argmin': ' '.join(f"{x:.12g}" for x in r.argmin),
    } for r in results])
