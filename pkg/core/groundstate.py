"""
반경 바닥상태 계산 모듈
-Δw + w = |w|^{2p-2}w 의 유일한 양의 반경해 ω 를 사격법(shooting)으로 구하고,
노름과 감쇠 정보, 장벽 비교 인증서, 준선형 반례 샘플을 제공
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.special import gamma, kve

logger = logging.getLogger(__name__)


class GroundStateError(ValueError):
    """바닥상태 모듈 기본 오류"""


class NoBracketError(GroundStateError):
    """w(0) 이분 구간을 만들 수 없음"""


class SubcriticalityError(GroundStateError):
    """p 가 (1, N/(N-2)) 범위를 벗어남"""

    def __init__(self, N: int, p: float):
        self.N = N
        self.p = p
        super().__init__(f"p={p} 는 N={N} 에서 준임계가 아닙니다 (허용 범위: 1 < p < {critical_exponent(N)})")


class SigmaTooSmallError(GroundStateError):
    """외부 퍼텐셜 하한 σ 가 μ² 이하"""


class BoundaryFailsError(GroundStateError):
    """|x|=ρ 에서 허용 가능한 t 가 없음"""


class SampleInsideUnitBallError(GroundStateError):
    """반례 샘플이 |x| ≤ 1 에 있음"""


# 이 값 아래로 내려가면 궤적이 0 을 가로지른 것으로 판정
CROSSING_TOLERANCE = 1e-12


def critical_exponent(N: int) -> float:
    """2*/2 = N/(N-2), N ≤ 2 이면 무한대"""
    if N <= 2:
        return math.inf
    return N / (N - 2)


def check_subcritical(N: int, p: float):
    if N < 1 or int(N) != N:
        raise GroundStateError(f"차원 N 은 1 이상의 정수여야 합니다: {N}")
    if not (1.0 < p < critical_exponent(N)):
        raise SubcriticalityError(N, p)


def sphere_area(N: int) -> float:
    """단위 구면 S^{N-1} 의 넓이 (N=1 이면 두 점이므로 2)"""
    return 2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0)


def _bessel_tail(r: np.ndarray, r_ref: float, w_ref: float, nu: float) -> np.ndarray:
    # 선형화 방정식의 감쇠해 r^{-ν} K_ν(r) 를 r_ref 에서 값으로 맞춤
    order = abs(nu)
    r = np.asarray(r, dtype=float)
    ratio = kve(order, r) / kve(order, r_ref)
    return w_ref * (r / r_ref) ** (-nu) * ratio * np.exp(-(r - r_ref))


def _bessel_tail_slope(r: np.ndarray, r_ref: float, w_ref: float, nu: float) -> np.ndarray:
    # d/dr [r^{-ν} K_ν(r)] = -r^{-ν} K_{ν+1}(r)
    r = np.asarray(r, dtype=float)
    scale = w_ref * r_ref ** nu / kve(abs(nu), r_ref)
    return -scale * r ** (-nu) * kve(abs(nu + 1.0), r) * np.exp(-(r - r_ref))


@dataclass
class RadialProfile:
    """표본화된 반경 바닥상태 ω 와 노름, 감쇠 메타데이터"""
    dimension: int
    exponent: float
    radii: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    norm_sq: float
    l2p_norm_pow: float
    center_value: float
    tail_start: float
    tail_order: float
    _spline: CubicHermiteSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.slopes = np.asarray(self.slopes, dtype=float)
        if self.radii.ndim != 1 or self.radii.shape != self.values.shape or self.values.shape != self.slopes.shape:
            raise GroundStateError("radii, values, slopes 의 길이가 다릅니다")
        if self.radii[0] != 0.0 or np.any(np.diff(self.radii) <= 0):
            raise GroundStateError("반경 격자는 0 에서 시작해 순증가해야 합니다")
        if np.any(self.values <= 0):
            raise GroundStateError("바닥상태 값이 양수가 아닙니다")
        if np.any(np.diff(self.values) >= 0):
            raise GroundStateError("바닥상태 값이 순감소하지 않습니다")
        self._spline = CubicHermiteSpline(self.radii, self.values, self.slopes)

    @property
    def r_max(self) -> float:
        return float(self.radii[-1])

    @property
    def nehari_residual(self) -> float:
        """|‖ω‖² - |ω|_{2p}^{2p}| / ‖ω‖²"""
        return abs(self.norm_sq - self.l2p_norm_pow) / self.norm_sq

    def evaluate(self, r) -> np.ndarray:
        """임의 반경에서 ω 값 (격자 밖은 Bessel 꼬리로 연장)"""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inside = r <= self.r_max
        out[inside] = self._spline(r[inside])
        if np.any(~inside):
            out[~inside] = _bessel_tail(r[~inside], self.r_max, self.values[-1], self.tail_order)
        return out

    def derivative(self, r) -> np.ndarray:
        """ω'(r)"""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inside = r <= self.r_max
        out[inside] = self._spline(r[inside], 1)
        if np.any(~inside):
            out[~inside] = _bessel_tail_slope(r[~inside], self.r_max, self.values[-1], self.tail_order)
        return out

    def metadata(self) -> Dict:
        return {
            'N': self.dimension,
            'p': self.exponent,
            'norm_sq': self.norm_sq,
            'l2p_norm_pow': self.l2p_norm_pow,
            'center_value': self.center_value,
            'tail_start': self.tail_start,
            'tail_order': self.tail_order,
            'nehari_residual': self.nehari_residual,
        }

    def save(self, path: Union[str, Path]) -> Path:
        """두 열 (r, ω(r)) 텍스트 표와 JSON 헤더 한 줄로 저장 (세 번째 열은 ω')"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        table = np.column_stack([self.radii, self.values, self.slopes])
        np.savetxt(path, table, fmt='%.17e', header=json.dumps(self.metadata(), ensure_ascii=False))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'RadialProfile':
        path = Path(path)
        with open(path, 'r', encoding='utf-8') as f:
            header = f.readline().lstrip('#').strip()
        meta = json.loads(header)
        table = np.loadtxt(path, ndmin=2)
        if table.shape[1] >= 3:
            slopes = table[:, 2]
        else:
            slopes = np.gradient(table[:, 1], table[:, 0])
        return cls(
            dimension=int(meta['N']),
            exponent=float(meta['p']),
            radii=table[:, 0],
            values=table[:, 1],
            slopes=slopes,
            norm_sq=float(meta['norm_sq']),
            l2p_norm_pow=float(meta['l2p_norm_pow']),
            center_value=float(meta['center_value']),
            tail_start=float(meta.get('tail_start', table[-1, 0])),
            tail_order=float(meta.get('tail_order', (int(meta['N']) - 2) / 2.0)),
        )


class GroundStateSolver:
    """반경 ODE 사격법 + w(0) 이분법"""

    def __init__(self, dr: float = 0.01, r_max: float = 40.0,
                 rtol: float = 1e-12, atol: float = 1e-14, max_bisections: int = 200):
        if dr <= 0 or r_max <= 10 * dr:
            raise GroundStateError(f"잘못된 반경 격자: dr={dr}, r_max={r_max}")
        self.dr = dr
        self.r_max = r_max
        self.rtol = rtol
        self.atol = atol
        self.max_bisections = max_bisections
        self.r_start = 1e-6
        self.logger = logging.getLogger('GroundStateSolver')

    def _initial_state(self, w0: float, N: int, p: float) -> Tuple[float, np.ndarray]:
        curvature = (w0 - w0 ** (2 * p - 1)) / N
        r0 = self.r_start
        return curvature, np.array([w0 + 0.5 * curvature * r0 ** 2, curvature * r0])

    def _shoot(self, w0: float, N: int, p: float, dense: bool = False):
        """'overshoot' (0 을 가로지름) 또는 'undershoot' (되돌아감/발산) 판정"""
        curvature, y0 = self._initial_state(w0, N, p)
        if curvature >= 0:
            return 'undershoot', None

        def rhs(r, y):
            w, v = y
            return [v, -(N - 1) / r * v + w - abs(w) ** (2 * p - 2) * w]

        def crossed(r, y):
            return y[0] + CROSSING_TOLERANCE
        crossed.terminal = True
        crossed.direction = -1

        def turned(r, y):
            return y[1]
        turned.terminal = True
        turned.direction = 1

        def blew_up(r, y):
            return y[0] - 2.0 * w0
        blew_up.terminal = True
        blew_up.direction = 1

        r_end = max(self.r_max, 60.0)
        sol = solve_ivp(rhs, (self.r_start, r_end), y0, method='DOP853',
                        rtol=self.rtol, atol=self.atol,
                        events=[crossed, turned, blew_up], dense_output=dense)
        if sol.t_events[0].size:
            return 'overshoot', sol
        return 'undershoot', sol

    def _bracket(self, N: int, p: float) -> Tuple[float, float]:
        low, high = 1.0, 10.0
        while self._shoot(high, N, p)[0] == 'undershoot':
            low, high = high, 2.0 * high
            if high > 1e8:
                raise NoBracketError(f"w(0) 이분 구간을 찾지 못했습니다 (N={N}, p={p})")
        return low, high

    def solve(self, N: int, p: float) -> RadialProfile:
        """바닥상태 계산"""
        check_subcritical(N, p)
        low, high = self._bracket(N, p)
        self.logger.debug(f"초기 구간 [{low}, {high}] (N={N}, p={p})")

        for _ in range(self.max_bisections):
            mid = 0.5 * (low + high)
            if mid <= low or mid >= high:
                break
            if self._shoot(mid, N, p)[0] == 'overshoot':
                high = mid
            else:
                low = mid
            if high - low <= 4 * np.finfo(float).eps * high:
                break

        _, sol_low = self._shoot(low, N, p, dense=True)
        _, sol_high = self._shoot(high, N, p, dense=True)
        if sol_low is None or sol_high is None:
            raise NoBracketError(f"이분법이 수렴하지 않았습니다: [{low}, {high}]")
        w0 = 0.5 * (low + high)
        profile = self._assemble(N, p, w0, sol_low, sol_high)
        self.logger.info(
            f"바닥상태 계산 완료: N={N}, p={p}, ω(0)={profile.center_value:.12f}, "
            f"‖ω‖²={profile.norm_sq:.10f}, 꼬리 시작 r={profile.tail_start:.2f}"
        )
        return profile

    def _assemble(self, N: int, p: float, w0: float, sol_low, sol_high) -> RadialProfile:
        nu = (N - 2) / 2.0
        steps = int(round(self.r_max / self.dr))
        if steps % 2:
            steps += 1
        radii = np.linspace(0.0, self.r_max, steps + 1)

        # 두 궤적이 갈라지기 전까지만 ODE 해를 신뢰
        r_common = min(sol_low.t[-1], sol_high.t[-1])
        probe = np.linspace(self.r_start, r_common, 20001)
        w_low = sol_low.sol(probe)[0]
        w_high = sol_high.sol(probe)[0]
        w_mid = 0.5 * (w_low + w_high)
        split = (np.abs(w_high - w_low) > 1e-7 * np.abs(w_mid)) | (w_mid <= 0)
        cut = int(np.argmax(split)) if np.any(split) else probe.size - 1
        tail_start = float(probe[max(cut - 1, 1)])

        values = np.empty_like(radii)
        slopes = np.empty_like(radii)
        curvature = (w0 - w0 ** (2 * p - 1)) / N
        near = radii < self.r_start
        values[near] = w0 + 0.5 * curvature * radii[near] ** 2
        slopes[near] = curvature * radii[near]

        body = (radii >= self.r_start) & (radii <= tail_start)
        state = 0.5 * (sol_low.sol(radii[body]) + sol_high.sol(radii[body]))
        values[body] = state[0]
        slopes[body] = state[1]

        junction = 0.5 * (sol_low.sol(tail_start)[0] + sol_high.sol(tail_start)[0])
        tail = radii > tail_start
        values[tail] = _bessel_tail(radii[tail], tail_start, junction, nu)
        slopes[tail] = _bessel_tail_slope(radii[tail], tail_start, junction, nu)

        weight = sphere_area(N) * radii ** (N - 1)
        norm_sq = float(simpson((slopes ** 2 + values ** 2) * weight, x=radii))
        l2p = float(simpson(values ** (2 * p) * weight, x=radii))

        if values[-1] >= 1e-10:
            self.logger.warning(f"r_max={self.r_max} 에서 ω={values[-1]:.2e} 로 충분히 작지 않습니다")

        return RadialProfile(
            dimension=N, exponent=p, radii=radii, values=values, slopes=slopes,
            norm_sq=norm_sq, l2p_norm_pow=l2p, center_value=float(w0),
            tail_start=tail_start, tail_order=nu,
        )


def solve_radial_ground_state(N: int, p: float, dr: float = 0.01, r_max: float = 40.0) -> RadialProfile:
    """-Δw + w = |w|^{2p-2}w 의 양의 반경해"""
    return GroundStateSolver(dr=dr, r_max=r_max).solve(N, p)


def soliton_1d(x, p: float = 2.0) -> np.ndarray:
    """1차원 닫힌 형태 해 p^{1/(2(p-1))} sech^{1/(p-1)}((p-1)x)"""
    x = np.asarray(x, dtype=float)
    return p ** (1.0 / (2 * (p - 1))) / np.cosh((p - 1) * x) ** (1.0 / (p - 1))


def barrier_exponent(r, mu: float, N: int) -> np.ndarray:
    """h(r) = μ² - (N-1)μ/r"""
    r = np.asarray(r, dtype=float)
    return mu ** 2 - (N - 1) * mu / r


@dataclass
class BarrierCertificate:
    """장벽 비교 w ≤ t e^{-μ|x|} (|x| ≥ ρ) 의 표본 기반 인증"""
    mu: float
    delta: float
    rho: float
    sigma: float
    epsilon: float
    t: float
    envelope_constant: float
    verified_on: Tuple[float, float]
    sample_count: int
    sample_resolution: float
    passed: bool
    first_violation: Optional[Tuple[float, float]] = None
    source_envelope_ok: bool = True
    margin_ok: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise SigmaTooSmallError(f"ε = σ - μ² = {self.epsilon} 는 양수여야 합니다")
        threshold = self.envelope_constant / self.epsilon * math.exp((self.mu - self.delta) * self.rho)
        if not self.t > threshold:
            raise GroundStateError(f"t={self.t} 가 조건 t > {threshold} 를 만족하지 않습니다")

    def passes_with(self, radii, w_samples, t: float) -> bool:
        """다른 배수 t 로 재검증 (t 에 대해 단조)"""
        radii = np.abs(np.asarray(radii, dtype=float))
        w = np.abs(np.asarray(w_samples, dtype=float))
        exterior = radii >= self.rho
        return bool(np.all(w[exterior] <= t * np.exp(-self.mu * radii[exterior])))

    def to_dict(self) -> Dict:
        return {
            'mu': self.mu, 'delta': self.delta, 'rho': self.rho, 'sigma': self.sigma,
            'epsilon': self.epsilon, 't': self.t, 'C': self.envelope_constant,
            'verified_on': list(self.verified_on), 'sample_count': self.sample_count,
            'sample_resolution': self.sample_resolution, 'pass': self.passed,
            'first_violation': list(self.first_violation) if self.first_violation else None,
            'source_envelope_ok': self.source_envelope_ok, 'margin_ok': self.margin_ok,
        }


def barrier_certificate(radii, w_samples, V: Union[Callable, float], f_samples,
                        mu: float, delta: float, rho: float, C: float, N: int = 1) -> BarrierCertificate:
    """-Δw + Vw = f 의 해에 대해 지수 장벽 인증서 구성 및 표본 검증

    C 는 |f| ≤ C e^{-δ|x|} 의 포락 상수로, 표본이 이 포락을 벗어나면 인증은 실패한다.
    """
    if not C > 0:
        raise GroundStateError(f"포락 상수 C={C} 는 양수여야 합니다")
    radii = np.abs(np.asarray(radii, dtype=float))
    w = np.abs(np.asarray(w_samples, dtype=float))
    f = np.abs(np.asarray(f_samples, dtype=float))
    order = np.argsort(radii, kind='stable')
    radii, w, f = radii[order], w[order], f[order]

    exterior = radii >= rho
    if not np.any(exterior):
        raise BoundaryFailsError(f"ρ={rho} 바깥에 표본이 없습니다")
    potential = V(radii[exterior]) if callable(V) else np.full(exterior.sum(), float(V))
    sigma = float(np.min(potential))
    if sigma <= mu ** 2:
        raise SigmaTooSmallError(f"σ={sigma} ≤ μ²={mu ** 2}")
    epsilon = sigma - mu ** 2

    source_ok = bool(np.all(f[exterior] <= C * np.exp(-delta * radii[exterior]) * (1 + 1e-12)))

    if mu * rho > 700 or (mu - delta) * rho > 700:
        raise BoundaryFailsError(f"e^(μρ) 가 부동소수 범위를 넘습니다 (μ={mu}, ρ={rho})")
    w_rho = float(np.interp(rho, radii, w))
    near = np.abs(radii - rho) <= 0.5 * float(np.max(np.diff(radii))) if radii.size > 1 else radii == rho
    if np.any(near):
        w_rho = max(w_rho, float(np.max(w[near])))
    t_required = C / epsilon * math.exp((mu - delta) * rho)
    t_boundary = w_rho * math.exp(mu * rho)
    t = 1.01 * max(t_required, t_boundary)
    if t == 0.0:
        t = 1.0
    if not math.isfinite(t):
        raise BoundaryFailsError(f"허용 가능한 t 가 없습니다 (t={t})")

    barrier = t * np.exp(-mu * radii[exterior])
    violations = np.flatnonzero(w[exterior] > barrier)
    first = None
    if violations.size:
        k = violations[0]
        first = (float(radii[exterior][k]), float(w[exterior][k]))

    positive = radii[exterior] > 0
    margin = potential[positive] - barrier_exponent(radii[exterior][positive], mu, N)
    spacing = float(np.max(np.diff(radii))) if radii.size > 1 else 0.0

    certificate = BarrierCertificate(
        mu=mu, delta=delta, rho=rho, sigma=sigma, epsilon=epsilon, t=t,
        envelope_constant=float(C),
        verified_on=(float(radii[exterior][0]), float(radii[exterior][-1])),
        sample_count=int(exterior.sum()), sample_resolution=spacing,
        passed=first is None and source_ok, first_violation=first,
        source_envelope_ok=source_ok, margin_ok=bool(np.all(margin >= epsilon - 1e-12)),
    )
    if first is not None:
        logger.info(f"장벽 검증 실패: r={first[0]:.4g} 에서 w={first[1]:.4g} > t e^(-μr)")
    if not source_ok:
        logger.info(f"원천항이 포락 C e^(-δr) (C={C:.4g}, δ={delta}) 를 벗어납니다")
    return certificate


@dataclass
class CounterexampleSamples:
    """w = |x|^{-2/3}, c = |x|^{-1/3} - (10/9)|x|^{-7/3} 표본"""
    xs: np.ndarray
    w: np.ndarray
    c: np.ndarray
    w_second: np.ndarray

    def residual(self) -> np.ndarray:
        """-w'' + w - c w^{1/2}"""
        return -self.w_second + self.w - self.c * np.sqrt(self.w)

    def pairs(self):
        return list(zip(self.w.tolist(), self.c.tolist()))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'x': self.xs, 'w': self.w, 'c': self.c, 'residual': self.residual(),
        })


def sublinear_counterexample(xs) -> CounterexampleSamples:
    """지수 감쇠가 실패하는 준선형(p=1/2 형) 1차원 반례"""
    xs = np.asarray(xs, dtype=float)
    r = np.abs(xs)
    if np.any(r <= 1.0):
        bad = float(xs[np.argmax(r <= 1.0)])
        raise SampleInsideUnitBallError(f"표본 x={bad} 가 |x| ≤ 1 입니다")
    w = r ** (-2.0 / 3.0)
    c = r ** (-1.0 / 3.0) - (10.0 / 9.0) * r ** (-7.0 / 3.0)
    w_second = (10.0 / 9.0) * r ** (-8.0 / 3.0)
    return CounterexampleSamples(xs=xs, w=w, c=c, w_second=w_second)
