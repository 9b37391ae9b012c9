"""
대칭군 및 시험함수 모듈
G'_m (K_m 회전 + τ 교환), 부호 준동형 θ, 등변 사영, d_m, 다중 범프 시험함수와 그 에너지
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import simpson
from scipy.ndimage import map_coordinates

from core.coupling import PhiKind
from core.groundstate import RadialProfile, sphere_area

logger = logging.getLogger(__name__)


class SymmetryError(ValueError):
    """대칭 모듈 기본 오류"""


class AsymmetricDomainError(SymmetryError):
    """격자가 원점 대칭이 아니거나 축마다 다름"""


class GroupMode(Enum):
    FULL = "full"              # ℂ×ℂ×ℝ^{N-4} 위 G'_m
    PLANAR = "planar"          # ℝ² 위 K_m (아날로그)
    REFLECTION = "reflection"  # ℝ 위 {id, x↦-x}


# 부동소수 오차 없이 정확히 알려진 현의 길이
_EXACT_DM = {1: 0.0, 2: 2.0, 3: math.sqrt(3.0), 4: math.sqrt(2.0), 6: 1.0}


def compute_dm(m: int) -> float:
    """d_m = |1 - e^{2πi/m}| = 2 sin(π/m)"""
    if m < 1:
        raise SymmetryError(f"m 은 1 이상이어야 합니다: {m}")
    if m in _EXACT_DM:
        return _EXACT_DM[m]
    return 2.0 * math.sin(math.pi / m)


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class GroupElement:
    rotation: int
    swap: bool
    matrix: np.ndarray

    @property
    def theta(self) -> int:
        return -1 if self.swap else 1

    def phi(self, kind: PhiKind) -> int:
        return 1 if kind is PhiKind.TRIVIAL else self.theta


class SymmetryGroup:
    """유한 직교군과 그 합성표"""

    def __init__(self, m: int, dimension: int = 4):
        if dimension >= 4:
            self.mode = GroupMode.FULL
        elif dimension == 2:
            self.mode = GroupMode.PLANAR
        elif dimension == 1:
            self.mode = GroupMode.REFLECTION
        else:
            raise SymmetryError(f"차원 {dimension} 에 대한 대칭 구성이 없습니다")
        if m < 1:
            raise SymmetryError(f"m 은 1 이상이어야 합니다: {m}")
        self.m = m
        self.dimension = dimension
        self.logger = logging.getLogger('SymmetryGroup')
        self.elements = self._enumerate()
        self.table = self._composition_table()
        self.exploratory = m < 5 and self.mode is not GroupMode.REFLECTION
        if self.exploratory:
            self.logger.warning(f"m={m} < 5: 탐색용 군이며 시험함수 추정의 가정 밖입니다")

    def _enumerate(self) -> List[GroupElement]:
        N = self.dimension
        if self.mode is GroupMode.REFLECTION:
            return [GroupElement(0, False, np.eye(1)), GroupElement(0, True, -np.eye(1))]
        elements = []
        swaps = (False, True) if self.mode is GroupMode.FULL else (False,)
        for swap in swaps:
            for j in range(self.m):
                rot = _rotation(2 * math.pi * j / self.m)
                if self.mode is GroupMode.PLANAR:
                    matrix = rot
                else:
                    matrix = np.eye(N)
                    matrix[0:2, 0:2] = rot
                    matrix[2:4, 2:4] = rot
                    if swap:
                        tau = np.eye(N)
                        tau[0:4, 0:4] = np.block([[np.zeros((2, 2)), np.eye(2)],
                                                  [np.eye(2), np.zeros((2, 2))]])
                        matrix = matrix @ tau
                elements.append(GroupElement(j, swap, matrix))
        return elements

    def _composition_table(self) -> np.ndarray:
        size = len(self.elements)
        table = np.empty((size, size), dtype=int)
        for a, ga in enumerate(self.elements):
            for b, gb in enumerate(self.elements):
                product = ga.matrix @ gb.matrix
                match = [c for c, gc in enumerate(self.elements) if np.allclose(product, gc.matrix, atol=1e-12)]
                if len(match) != 1:
                    raise SymmetryError(f"합성 {a}∘{b} 가 군 안에서 유일하게 정해지지 않습니다")
                table[a, b] = match[0]
        return table

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def d_m(self) -> float:
        return compute_dm(self.m)

    @property
    def identity(self) -> int:
        return next(k for k, g in enumerate(self.elements) if np.allclose(g.matrix, np.eye(g.matrix.shape[0])))

    def compose(self, a: int, b: int) -> int:
        return int(self.table[a, b])

    def inverse(self, a: int) -> int:
        e = self.identity
        return int(np.flatnonzero(self.table[a] == e)[0])

    def supports(self, kind: PhiKind) -> bool:
        return kind is PhiKind.TRIVIAL or self.mode is not GroupMode.PLANAR

    def phi_per_block(self, kinds: Dict[int, PhiKind]) -> Dict[int, List[int]]:
        """블록별 φ_h(g) 값 목록"""
        return {h: [g.phi(kind) for g in self.elements] for h, kind in kinds.items()}

    def anchor(self, kind: PhiKind) -> np.ndarray:
        """ζ_h: Q⁺ 는 (1/√2, 1/√2, 0), Q⁻ 는 (1, 0, 0)"""
        zeta = np.zeros(self.dimension)
        if not self.supports(kind):
            raise SymmetryError("평면 아날로그는 자명 준동형 블록만 지원합니다")
        if self.mode is GroupMode.REFLECTION:
            if kind is PhiKind.THETA:
                zeta[0] = 1.0
            return zeta
        if self.mode is GroupMode.PLANAR:
            zeta[0] = 1.0
            return zeta
        if kind is PhiKind.TRIVIAL:
            zeta[0] = zeta[2] = 1.0 / math.sqrt(2.0)
        else:
            zeta[0] = 1.0
        return zeta

    def orbit(self, zeta: np.ndarray, kind: PhiKind) -> Tuple[np.ndarray, np.ndarray]:
        """궤도 {gζ} 와 부호 φ(g) (중복 제거)"""
        points, signs = [], []
        for g in self.elements:
            image = g.matrix @ zeta
            sign = g.phi(kind)
            duplicate = next((k for k, pt in enumerate(points) if np.allclose(pt, image, atol=1e-9)), None)
            if duplicate is None:
                points.append(image)
                signs.append(sign)
            elif signs[duplicate] != sign:
                raise SymmetryError("궤도 점의 부호가 모순됩니다 (등변 함수가 그 점에서 0)")
        return np.array(points), np.array(signs, dtype=float)


def group_elements(m: int, dimension: int = 4) -> SymmetryGroup:
    """G'_m 열거 (dimension=2 는 K_m 평면 아날로그, 1 은 반사군)"""
    return SymmetryGroup(m, dimension)


def symmetric_axes(axes: Sequence[np.ndarray]) -> float:
    """모든 축이 같고 원점 대칭인 균일 격자인지 확인하고 간격을 반환"""
    first = np.asarray(axes[0], dtype=float)
    if first.size < 2:
        raise AsymmetricDomainError("축에 점이 두 개 이상 필요합니다")
    spacing = float(first[1] - first[0])
    for axis in axes:
        axis = np.asarray(axis, dtype=float)
        if axis.shape != first.shape or not np.allclose(axis, first, atol=1e-12 * max(1.0, abs(first[0]))):
            raise AsymmetricDomainError("모든 축이 같은 격자여야 합니다")
    if not np.allclose(first, -first[::-1], atol=1e-9 * spacing):
        raise AsymmetricDomainError("격자가 원점 대칭이 아닙니다")
    if not np.allclose(np.diff(first), spacing, rtol=1e-9):
        raise AsymmetricDomainError("격자 간격이 균일하지 않습니다")
    return spacing


class EquivariantProjector:
    """군 평균 (1/|G|) Σ_g φ(g) f(g^{-1}x) 를 격자 함수에 적용"""

    def __init__(self, axes: Sequence[np.ndarray], group: SymmetryGroup, order: int = 1):
        if len(axes) != group.dimension:
            raise SymmetryError(f"격자 차원 {len(axes)} 와 군 차원 {group.dimension} 이 다릅니다")
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.spacing = symmetric_axes(self.axes)
        self.origin = float(self.axes[0][0])
        self.group = group
        self.order = order
        self.shape = tuple(a.size for a in self.axes)
        mesh = np.meshgrid(*self.axes, indexing='ij')
        self._points = np.stack([c.ravel() for c in mesh], axis=1)
        self.logger = logging.getLogger('EquivariantProjector')

    def _pull_back(self, field_values: np.ndarray, matrix: np.ndarray) -> np.ndarray:
        """x ↦ f(Mx) 를 격자 위에서 계산"""
        images = self._points @ matrix.T
        fractional = (images - self.origin) / self.spacing
        nearest = np.rint(fractional)
        if np.max(np.abs(fractional - nearest)) < 1e-8:
            idx = nearest.astype(int)
            inside = np.all((idx >= 0) & (idx < np.array(self.shape)), axis=1)
            out = np.zeros(idx.shape[0])
            out[inside] = field_values[tuple(idx[inside].T)]
            return out.reshape(self.shape)
        values = map_coordinates(field_values, fractional.T, order=self.order,
                                 mode='grid-constant', cval=0.0)
        return values.reshape(self.shape)

    def project(self, field_values: np.ndarray, kind: PhiKind) -> np.ndarray:
        if field_values.shape != self.shape:
            raise SymmetryError(f"격자 함수 크기 {field_values.shape} 가 {self.shape} 와 다릅니다")
        total = np.zeros(self.shape)
        for g in self.group.elements:
            total += g.phi(kind) * self._pull_back(field_values, g.matrix.T)
        return total / len(self.group)

    def equivariance_error(self, field_values: np.ndarray, kind: PhiKind) -> float:
        """max_g max_x |f(gx) - φ(g) f(x)| / max|f|"""
        scale = float(np.max(np.abs(field_values)))
        if scale == 0:
            return 0.0
        worst = 0.0
        for g in self.group.elements:
            moved = self._pull_back(field_values, g.matrix)
            worst = max(worst, float(np.max(np.abs(moved - g.phi(kind) * field_values))))
        return worst / scale


def project_equivariant(field_values: np.ndarray, axes: Sequence[np.ndarray], group: SymmetryGroup,
                        kind: PhiKind, order: int = 1) -> np.ndarray:
    """φ-등변 부분공간으로의 군 평균 사영"""
    return EquivariantProjector(axes, group, order=order).project(field_values, kind)


def pair_interaction(profile: RadialProfile, distance: float, p: float,
                     cutoff: Optional[float] = None, step: float = 0.02) -> float:
    """∫ ω(x)^p ω(x - a)^p dx (|a| = distance), 축대칭 좌표 (z, ρ) 국소 구적"""
    N = profile.dimension
    if cutoff is None:
        cutoff = min(profile.r_max, 12.0)
    if N == 1:
        z = np.arange(-cutoff, distance + cutoff + step, step)
        integrand = profile.evaluate(z) ** p * profile.evaluate(z - distance) ** p
        return float(simpson(integrand, x=z))
    z = np.arange(-cutoff, distance + cutoff + step, step)
    rho = np.arange(0.0, cutoff + step, step)
    Z, P = np.meshgrid(z, rho, indexing='ij')
    left = profile.evaluate(np.hypot(Z, P))
    right = profile.evaluate(np.hypot(Z - distance, P))
    weight = sphere_area(N - 1) * P ** (N - 2) if N > 2 else 2.0 * np.ones_like(P)
    integrand = (left * right) ** p * weight
    return float(simpson(simpson(integrand, x=rho, axis=1), x=z))


@dataclass
class TestFunction:
    """σ_hR = t_hR σ̂_hR, σ̂ 는 궤도 중심 범프의 부호 합"""
    kind: PhiKind
    R: float
    m: int
    t_hR: float
    bump_centers: np.ndarray
    sign_per_bump: np.ndarray
    profile: RadialProfile = field(repr=False)
    p: float
    raw_norm_sq: float
    raw_l2p: float
    quadrature: Dict
    block: int = 1
    overlap_collapse: bool = False

    @property
    def orbit_size(self) -> int:
        return int(self.bump_centers.shape[0])

    @property
    def norm_sq(self) -> float:
        """정규화 후 ‖σ_hR‖² (= ∫|σ_hR|^{2p})"""
        return self.t_hR ** 2 * self.raw_norm_sq

    @property
    def l2p(self) -> float:
        return self.t_hR ** (2 * self.p) * self.raw_l2p

    def evaluate_raw(self, points: np.ndarray) -> np.ndarray:
        return _bump_sum(points, self.bump_centers, self.sign_per_bump, self.profile)[0]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.t_hR * self.evaluate_raw(points)


def _bump_sum(points: np.ndarray, centers: np.ndarray, signs: np.ndarray,
              profile: RadialProfile) -> Tuple[np.ndarray, np.ndarray]:
    """σ̂ 값과 |∇σ̂|²"""
    points = np.atleast_2d(points)
    value = np.zeros(points.shape[0])
    gradient = np.zeros_like(points)
    for center, sign in zip(centers, signs):
        offset = points - center
        r = np.linalg.norm(offset, axis=1)
        value += sign * profile.evaluate(r)
        slope = profile.derivative(r)
        safe = np.where(r > 0, r, 1.0)
        gradient += (sign * slope / safe)[:, None] * offset
    return value, np.sum(gradient ** 2, axis=1)


def _profile_cutoff(profile: RadialProfile, relative: float = 1e-9) -> float:
    below = np.flatnonzero(profile.values < relative * profile.center_value)
    return float(profile.radii[below[0]]) if below.size else profile.r_max


def _tensor_quadrature(centers, signs, profile, p, step, cutoff, chunk=1_000_000):
    dim = centers.shape[1]
    low = centers.min(axis=0) - cutoff
    high = centers.max(axis=0) + cutoff
    axes = [np.arange(lo, hi + step, step) for lo, hi in zip(low, high)]
    mesh = np.meshgrid(*axes, indexing='ij')
    points = np.stack([c.ravel() for c in mesh], axis=1)
    near = np.zeros(points.shape[0], dtype=bool)
    for center in centers:
        near |= np.linalg.norm(points - center, axis=1) <= cutoff
    points = points[near]
    norm_sq, l2p = 0.0, 0.0
    for start in range(0, points.shape[0], chunk):
        value, grad_sq = _bump_sum(points[start:start + chunk], centers, signs, profile)
        norm_sq += float(np.sum(grad_sq + value ** 2))
        l2p += float(np.sum(np.abs(value) ** (2 * p)))
    cell = step ** dim
    return norm_sq * cell, l2p * cell, {'method': 'tensor', 'step': step, 'points': int(points.shape[0])}


def _monte_carlo_quadrature(centers, signs, profile, p, samples, seed, spread=1.5):
    rng = np.random.default_rng(seed)
    dim = centers.shape[1]
    which = rng.integers(0, centers.shape[0], size=samples)
    points = centers[which] + spread * rng.standard_normal((samples, dim))
    density = np.zeros(samples)
    for center in centers:
        sq = np.sum((points - center) ** 2, axis=1)
        density += np.exp(-sq / (2 * spread ** 2))
    density /= centers.shape[0] * (2 * math.pi * spread ** 2) ** (dim / 2)
    value, grad_sq = _bump_sum(points, centers, signs, profile)
    norm_sq = float(np.mean((grad_sq + value ** 2) / density))
    l2p = float(np.mean(np.abs(value) ** (2 * p) / density))
    return norm_sq, l2p, {'method': 'monte_carlo', 'samples': samples, 'seed': seed}


def build_test_function(kind: PhiKind, R: float, group: SymmetryGroup, profile: RadialProfile, p: float,
                        block: int = 1, quadrature: str = 'auto', step: float = 0.05,
                        samples: int = 400_000, seed: int = 20240611) -> TestFunction:
    """궤도 중심 {Rgζ_h} 에 범프를 놓고 Nehari 형 정규화 t_hR 계산"""
    if profile.dimension != group.dimension:
        raise SymmetryError(f"ω 의 차원 {profile.dimension} 와 군 차원 {group.dimension} 이 다릅니다")
    if abs(profile.exponent - p) > 1e-12:
        raise SymmetryError(f"ω 의 지수 {profile.exponent} 가 p={p} 와 다릅니다")
    if not R > 1:
        raise SymmetryError(f"R 은 1 보다 커야 합니다: {R}")

    orbit, signs = group.orbit(group.anchor(kind), kind)
    centers = R * orbit
    spacing = R * group.d_m if orbit.shape[0] > 1 else math.inf
    overlap = spacing < 2.0
    if overlap:
        logger.warning(f"R={R}: 범프 간격 {spacing:.3g} 이 너무 작아 구적 신뢰도가 낮습니다")

    method = quadrature
    if method == 'auto':
        method = 'tensor' if group.dimension <= 2 else 'monte_carlo'
    if method == 'tensor':
        raw_norm, raw_l2p, info = _tensor_quadrature(centers, signs, profile, p, step, _profile_cutoff(profile))
    elif method == 'monte_carlo':
        raw_norm, raw_l2p, info = _monte_carlo_quadrature(centers, signs, profile, p, samples, seed)
    else:
        raise SymmetryError(f"알 수 없는 구적 방식: {quadrature}")

    t = (raw_norm / raw_l2p) ** (1.0 / (2 * p - 2))
    return TestFunction(kind=kind, R=float(R), m=group.m, t_hR=float(t), bump_centers=centers,
                        sign_per_bump=signs, profile=profile, p=p, raw_norm_sq=raw_norm,
                        raw_l2p=raw_l2p, quadrature=info, block=block, overlap_collapse=overlap)


@dataclass
class TestFunctionEnergy:
    R: float
    J: float
    asymptote: float
    gap: float
    mu: float
    orbit_size: int


def test_function_energy(tf: TestFunction, tbar: np.ndarray, p: float,
                         block_beta: Optional[np.ndarray] = None) -> TestFunctionEnergy:
    """블록 범함수 J_h(t̄_h σ_hR), 점근값 |orbit| μ_h (p-1)/(2p) ‖ω‖² 과 그 차이"""
    tbar = np.asarray(tbar, dtype=float)
    mu = float(np.sum(tbar ** 2))
    if block_beta is None:
        interaction = mu
    else:
        tp = tbar ** p
        interaction = float(tp @ np.atleast_2d(block_beta) @ tp)
    J = 0.5 * mu * tf.norm_sq - interaction * tf.l2p / (2 * p)
    asymptote = tf.orbit_size * mu * (p - 1) / (2 * p) * tf.profile.norm_sq
    return TestFunctionEnergy(R=tf.R, J=J, asymptote=asymptote, gap=asymptote - J,
                              mu=mu, orbit_size=tf.orbit_size)


@dataclass
class SweepResult:
    """R 에 대한 시험함수 에너지 표와 log(gap) 기울기"""
    frame: pd.DataFrame
    slope: Optional[float]
    r0: Optional[float]
    negative_gap_beyond_r0: bool
    d_m: float

    def to_dict(self) -> Dict:
        return {'slope': self.slope, 'R0': self.r0,
                'negative_gap_beyond_R0': self.negative_gap_beyond_r0, 'd_m': self.d_m}


def test_function_sweep(radii: Sequence[float], kind: PhiKind, group: SymmetryGroup, profile: RadialProfile,
                        p: float, tbar: np.ndarray, block_beta: Optional[np.ndarray] = None,
                        expected_r0: Optional[float] = None, **quadrature_options) -> SweepResult:
    """여러 R 에서 gap 을 계산하고 log(gap) 의 R 에 대한 선형 기울기를 적합"""
    rows = []
    for R in radii:
        tf = build_test_function(kind, R, group, profile, p, **quadrature_options)
        energy = test_function_energy(tf, tbar, p, block_beta)
        neighbor = pair_interaction(profile, R * group.d_m, p) if tf.orbit_size > 1 else 0.0
        rows.append({'R': R, 'J': energy.J, 'asymptote': energy.asymptote, 'gap': energy.gap,
                     't_hR': tf.t_hR, 'pair_interaction': neighbor})
        logger.info(f"R={R}: J={energy.J:.10g}, 점근값={energy.asymptote:.10g}, gap={energy.gap:.3e}")
    frame = pd.DataFrame(rows)

    positive = frame['gap'].to_numpy() > 0
    r0 = None
    for k in range(len(frame)):
        if positive[k:].all():
            r0 = float(frame['R'].iloc[k])
            break
    if expected_r0 is not None:
        negative_beyond = not positive[frame["R"].to_numpy() >= expected_r0].all()
    else:
        negative_beyond = r0 is None
    if negative_beyond:
        logger.warning("R_0 이후 gap 이 음수입니다 (구적 의심)")
    if r0 is None:
        logger.warning("모든 R 에서 gap 이 양수가 아닙니다 (구적 의심)")
    slope = None
    if positive.sum() >= 2:
        slope = float(np.polyfit(frame['R'][positive], np.log(frame['gap'][positive]), 1)[0])
    return SweepResult(frame=frame, slope=slope, r0=r0, negative_gap_beyond_r0=negative_beyond,
                       d_m=group.d_m)

