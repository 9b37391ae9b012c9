"""
실험 실행 스크립트
행렬 검사, 바닥상태, 블록 상수, 격자 풀이, 감쇠 보고서, 에너지 상계, 반례, 시험함수 스윕을
하위 명령으로 실행하고 실행 디렉터리에 CSV/JSON 보고서와 manifest 를 남김
"""

import argparse
import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml

from config.config_manager import ConfigManager
from config.experiment_config import ConfigError, ExperimentConfig
from core.blockopt import (bound_report, competitive_bound, compactness_check, compute_mu, mu_table,
                           subsystem_levels, synchronized_coefficients)
from core.coupling import (BlockDecomposition, CouplingError, CouplingMatrix, NotSymmetricError,
                           check_b3, check_graph_connected, estimate_cstar, validate_block_structure)
from core.groundstate import RadialProfile, barrier_certificate, solve_radial_ground_state, sublinear_counterexample
from core.pde import (BlockCollapseError, DiscreteSystem, EnvelopeSamples, MaxIterationsError, SystemSolver,
                      SystemState, annulus_envelope, decay_chain_holds, fit_decay, overlap_ratio,
                      sliding_decay_rates, tail_norms)
from core.symmetry import SymmetryGroup, test_function_sweep
from utils.run_logger import RunLogger

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

# 반례 방정식 잔차 허용치
COUNTEREXAMPLE_RESIDUAL_TOL = 1e-10

# 반례 음성 대조: 마지막 이동 구간 감쇠율 상한
SLIDING_RATE_CEILING = 0.05

# 반례 장벽 검증: w 가 따라야 할 e^{-μr}, 원천항 포락 C e^{-δr}
COUNTEREXAMPLE_BARRIER = dict(mu=0.5, delta=1.0, rho=2.0, C=1.0)


def _sliding_windows(ra: float, rb: float, geometric: bool = False) -> List[Tuple[float, float]]:
    """[ra, rb] 를 연속된 세 구간으로 분할"""
    edges = np.geomspace(ra, rb, 4) if geometric else np.linspace(ra, rb, 4)
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


class ExperimentRunner:
    def __init__(self, runs_dir: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None):
        self.runs_dir = Path(runs_dir or os.getenv('RUNS_DIR', 'runs'))
        self.overrides = dict(overrides or {})
        self.manager: Optional[ConfigManager] = None
        self.logger = logging.getLogger('ExperimentRunner')
        self.run_dir: Optional[Path] = None
        self.run_logger: Optional[RunLogger] = None
        self.outputs: List[str] = []
        self.config_hash: Optional[str] = None

    # ------------------------------------------------------------------
    # 실행 디렉터리와 보고서
    # ------------------------------------------------------------------

    def _start(self, command: str, directory: Optional[Path] = None) -> Path:
        root = Path(directory) if directory else self.runs_dir
        stamp = datetime.now().strftime('%Y%m%d_%H%M%S_%f')
        self.run_dir = root / f"{command}_{stamp}"
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.run_logger = RunLogger(str(self.run_dir))
        self.outputs = []
        self.config_hash = None
        self.run_logger.log_system('INFO', 'ExperimentRunner', f"{command} 시작", {'run_dir': self.run_dir})
        self.logger.info(f"{command} 시작 - 실행 디렉터리: {self.run_dir}")
        return self.run_dir

    def _write_json(self, name: str, data: Dict) -> Path:
        path = self.run_dir / name
        if self.config_hash is not None:
            data = {'config_hash': self.config_hash, **data}
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False, default=str)
        self.outputs.append(name)
        return path

    def _write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.run_dir / name
        frame.to_csv(path, index=False)
        self.outputs.append(name)
        return path

    def _finish(self, command: str, exit_code: int, message: str = "") -> int:
        manifest = {
            'command': command,
            'exit_code': exit_code,
            'config_hash': self.config_hash,
            'message': message,
            'outputs': list(self.outputs),
            'finished_at': datetime.now().isoformat(),
        }
        with open(self.run_dir / 'manifest.json', 'w', encoding='utf-8') as f:
            json.dump(manifest, f, indent=2, ensure_ascii=False, default=str)
        self.run_logger.log_run(command, exit_code, self.config_hash, self.outputs, message)
        self.run_logger.close()
        level = logging.INFO if exit_code == EXIT_OK else logging.ERROR
        self.logger.log(level, f"{command} 종료 - 종료 코드 {exit_code} {message}".rstrip())
        return exit_code

    def _open_config(self, config_path: str) -> ConfigManager:
        """설정 문서를 읽고 점 표기 덮어쓰기 적용"""
        manager = ConfigManager(config_path)
        if manager.loaded and self.overrides and not manager.update_config(self.overrides):
            manager.last_error = f"설정 덮어쓰기를 적용할 수 없습니다: {sorted(self.overrides)}"
        return manager

    def _output_directory(self, manager: Optional[ConfigManager]) -> Optional[Path]:
        """outputs.directory (상대 경로는 설정 파일 기준)"""
        if manager is None or not manager.loaded:
            return None
        outputs = manager.get_config().get('outputs')
        directory = outputs.get('directory') if isinstance(outputs, dict) else None
        if not directory:
            return None
        path = Path(directory)
        return path if path.is_absolute() else manager.config_file.parent / path

    def _execute(self, command: str, body: Callable[[], Tuple[int, str]],
                 config_path: Optional[str] = None) -> int:
        """본문을 실행하고 예외를 종료 코드로 변환"""
        self.manager = self._open_config(config_path) if config_path else None
        self._start(command, self._output_directory(self.manager))
        try:
            exit_code, message = body()
        except (ConfigError, NotSymmetricError) as e:
            self.run_logger.log_error(e, {'command': command}, 'ExperimentRunner')
            exit_code, message = EXIT_USAGE, str(e)
        except Exception as e:
            self.run_logger.log_error(e, {'command': command}, 'ExperimentRunner')
            self.logger.error(f"{command} 실행 오류: {e}")
            exit_code, message = EXIT_FAILED, f"{type(e).__name__}: {e}"
        return self._finish(command, exit_code, message)

    def _load(self) -> Tuple[ExperimentConfig, CouplingMatrix]:
        config = self.manager.experiment_config()
        self.config_hash = config.config_hash()
        return config, config.build_matrix()

    def _profile(self, config: ExperimentConfig) -> RadialProfile:
        section = config.groundstate
        return solve_radial_ground_state(config.problem.N, float(config.problem.p), section.dr, section.r_max)

    def _hypotheses(self, config: ExperimentConfig, matrix: CouplingMatrix, profile: Optional[RadialProfile],
                    cstar: Optional[float] = None) -> Tuple[Dict, Optional[BlockDecomposition], Optional[str]]:
        """(B1) → (B2) → (B3) 순서로 검사하고 첫 실패 사유를 반환"""
        report: Dict = {}
        try:
            declared = config.build_decomposition(matrix.ell)
            decomposition = validate_block_structure(matrix, declared.boundaries, declared.signs)
        except CouplingError as e:
            report['B1'] = {'pass': False, 'error': type(e).__name__, 'message': str(e)}
            return report, None, f"B1 failed: {e}"
        report['B1'] = {'pass': True, **decomposition.to_dict()}

        connected = {h: check_graph_connected(decomposition, matrix, h) for h in range(1, decomposition.q + 1)}
        report['B2'] = {'pass': all(connected.values()), 'blocks': {str(h): ok for h, ok in connected.items()}}
        if not all(connected.values()):
            first = next(h for h, ok in connected.items() if not ok)
            return report, decomposition, f"B2 failed at block {first}"

        p = float(config.problem.p)
        if cstar is None:
            cstar = config.coupling.cstar
        if cstar is not None:
            provenance = 'user-supplied'
        else:
            estimate = estimate_cstar(p, decomposition.q, decomposition.signs, profile, fold=config.symmetry.fold)
            cstar = estimate.cstar
            provenance = estimate.mode.value
            report['cstar_estimate'] = estimate.to_dict()
        b3 = check_b3(decomposition, matrix, p, cstar, provenance)
        report['B3'] = b3.to_dict()
        return report, decomposition, b3.reason()

    # ------------------------------------------------------------------
    # 하위 명령
    # ------------------------------------------------------------------

    def cmd_check_matrix(self, config_path: str, cstar: Optional[float] = None) -> int:
        """(B1)/(B2)/(B3) 검사와 b3_report.json"""
        def body():
            config, matrix = self._load()
            profile = None
            if cstar is None and config.coupling.cstar is None:
                profile = self._profile(config)
            report, _, reason = self._hypotheses(config, matrix, profile, cstar)
            report['all_pass'] = reason is None
            report['reason'] = reason
            self._write_json('b3_report.json', report)
            self._print_check(report)
            return (EXIT_OK, "") if reason is None else (EXIT_FAILED, reason)

        return self._execute('check-matrix', body, config_path)

    def cmd_ground_state(self, N: int, p: float, out: Optional[str] = None,
                         dr: float = 0.01, r_max: float = 40.0) -> int:
        """바닥상태 ω 표와 메타데이터"""
        def body():
            profile = solve_radial_ground_state(N, p, dr, r_max)
            target = Path(out) if out else self.run_dir / f"ground_state_N{N}_p{p:g}.txt"
            profile.save(target)
            self.outputs.append(str(target))
            self._write_json('ground_state.json', profile.metadata())
            print(f"ω(0) = {profile.center_value:.12g}, ‖ω‖² = {profile.norm_sq:.12g}, "
                  f"Nehari 잔차 = {profile.nehari_residual:.3e}")
            return EXIT_OK, ""

        return self._execute('ground-state', body)

    def cmd_mu(self, config_path: str, restarts: int = 32) -> int:
        """블록별 μ_h 와 다중 시작 표"""
        def body():
            config, matrix = self._load()
            decomposition = config.build_decomposition(matrix.ell)
            p = float(config.problem.p)
            results = [
                compute_mu(matrix.submatrix(decomposition.block_indices(h)), p, restarts=restarts,
                           seed=config.seed, block=h)
                for h in range(1, decomposition.q + 1)
            ]
            self._write_csv('mu_multistart.csv', mu_table(results))
            self._write_json('mu.json', {'p': p, 'blocks': [r.to_dict() for r in results]})
            for r in results:
                print(f"블록 {r.block}: μ = {r.mu:.12g} (다중 시작 편차 {r.multistart_spread:.2e})")
            return EXIT_OK, ""

        return self._execute('mu', body, config_path)

    def cmd_solve(self, config_path: str, force: bool = False) -> int:
        """격자 풀이, 체크포인트, 수렴 기록"""
        def body():
            config, matrix = self._load()
            spec = config.build_spec(matrix)
            profile = self._profile(config)
            report, decomposition, reason = self._hypotheses(config, matrix, profile)
            if decomposition is None:
                raise CouplingError(reason)
            if reason is not None and not (force or config.solver.force):
                self._write_json('b3_report.json', {**report, 'all_pass': False, 'reason': reason})
                return EXIT_FAILED, f"{reason} (--force 로 강제 실행 가능)"

            solver = SystemSolver(config.solver_config(), profile)
            failure = None
            try:
                result = solver.solve(spec, decomposition)
            except (MaxIterationsError, BlockCollapseError) as e:
                failure = e
                result = e.result
                if result is None:
                    raise

            if config.outputs.write_checkpoint:
                path = result.state.save(self.run_dir / 'state.npz', {'p': spec.p})
                self.outputs.append(path.name)
            if config.outputs.write_csv:
                self._write_csv('convergence.csv', result.log)

            summary = result.summary()
            summary['overlap'] = {
                f"{i},{j}": overlap_ratio(result.state, i, j, spec.p)
                for i in range(1, spec.ell + 1) for j in range(1, spec.ell + 1)
                if i != j and decomposition.block_of(i) != decomposition.block_of(j)
            }
            summary['failure'] = None if failure is None else f"{type(failure).__name__}: {failure}"
            self._write_json('solve_summary.json', summary)
            self._print_solve(summary)
            if failure is not None:
                return EXIT_FAILED, summary['failure']
            return EXIT_OK, ""

        return self._execute('solve', body, config_path)

    def cmd_decay_report(self, config_path: str, checkpoint: str) -> int:
        """체크포인트(npz) 또는 포락선 표본(csv) 의 감쇠율 보고서"""
        def body():
            config = self.manager.experiment_config()
            self.config_hash = config.config_hash()
            decay = config.decay
            source = Path(checkpoint)
            if not source.exists():
                raise ConfigError(f"체크포인트를 찾을 수 없습니다: {source}")

            report: Dict = {'source': str(source)}
            if source.suffix == '.npz':
                state = SystemState.load(source)
                spec = config.build_spec()
                windows = decay.windows or decay.window
                fit = fit_decay(state, windows, spec, decay.noise_floor, decay.rel_tol, decay.annulus_width)
                # 절점 반경과 겹치지 않도록 h/4 만큼 이동
                radii = decay.radii or (np.linspace(0.0, 0.75 * state.grid.L, 16) + 0.25 * state.grid.h).tolist()
                tail = tail_norms(state, radii, decay.tail_window)
                self._write_csv('tail_norms.csv', tail.to_frame())
                envelope = annulus_envelope(state, decay.annulus_width)
                sliding = []
                for component in fit.components:
                    frame = sliding_decay_rates(envelope.radii, envelope.values[component.component - 1],
                                                _sliding_windows(*component.window), decay.noise_floor)
                    frame.insert(0, 'component', component.component)
                    sliding.append(frame)
                report['tail_exponent'] = tail.fitted_theta
                report['decay_chain'] = decay_chain_holds(tail, fit) if spec.autonomous else None
            else:
                table = pd.read_csv(source)
                radius_column = 'x' if 'x' in table.columns else table.columns[0]
                value_column = 'w' if 'w' in table.columns else table.columns[1]
                radii = np.abs(table[radius_column].to_numpy())
                values = np.abs(table[value_column].to_numpy())
                fit = fit_decay(EnvelopeSamples(radii, values), decay.window, noise_floor=decay.noise_floor,
                                rel_tol=decay.rel_tol)
                windows = _sliding_windows(float(radii.min()), float(radii.max()), geometric=True)
                sliding = [sliding_decay_rates(radii, values, windows, decay.noise_floor)]

            sliding_frame = pd.concat(sliding, ignore_index=True)
            self._write_csv('decay_fit.csv', fit.to_frame())
            self._write_csv('decay_sliding.csv', sliding_frame)
            report['components'] = fit.to_frame().to_dict(orient='records')
            report['all_pass'] = fit.all_pass
            self._write_json('decay_report.json', report)
            self._print_decay(fit.to_frame(), sliding_frame)
            if not fit.all_pass:
                failed = [c.component for c in fit.components if not c.passed]
                return EXIT_FAILED, f"decay FAIL at components {failed}"
            return EXIT_OK, ""

        return self._execute('decay-report', body, config_path)

    def cmd_bounds(self, config_path: str, mu: Optional[Sequence[float]] = None,
                   omega_norm_sq: Optional[float] = None, checkpoint: Optional[str] = None,
                   c_full: Optional[float] = None, c_sub: Optional[Sequence[float]] = None) -> int:
        """에너지 상계, 경쟁 결합 닫힌 형태, 풀이 상태와의 비교"""
        def body():
            config, matrix = self._load()
            declared = config.build_decomposition(matrix.ell)
            decomposition = validate_block_structure(matrix, declared.boundaries, declared.signs)
            p = float(config.problem.p)
            fold = config.symmetry.fold
            if mu is not None:
                mu_values = [float(v) for v in mu]
                if len(mu_values) != decomposition.q:
                    raise ConfigError(f"μ {len(mu_values)} 개가 블록 {decomposition.q} 개와 맞지 않습니다")
            else:
                mu_values = [compute_mu(matrix.submatrix(decomposition.block_indices(h)), p,
                                        seed=config.seed, block=h).mu
                             for h in range(1, decomposition.q + 1)]
            norm_sq = omega_norm_sq if omega_norm_sq is not None else self._profile(config).norm_sq

            report = bound_report(mu_values, decomposition.signs, norm_sq, fold=fold, p=p)
            out: Dict = {'mu': mu_values, 'report': report.to_dict()}

            if decomposition.q == matrix.ell and decomposition.q > 1:
                closed_form = competitive_bound(np.diag(matrix.entries), p, decomposition.signs, norm_sq, fold)
                out['competitive_bound'] = closed_form
                out['competitive_matches_corollary'] = bool(
                    abs(closed_form - report.corollary) <= 1e-12 * max(1.0, abs(closed_form))
                )

            system = state = None
            if checkpoint is not None:
                state = SystemState.load(checkpoint)
                system = DiscreteSystem(config.build_spec(matrix), state.grid)

            levels = None
            if c_full is not None and c_sub is not None:
                levels = (float(c_full), [float(c) for c in c_sub], 'user-supplied')
            elif system is not None:
                A, B = system.block_quantities(state.fields, decomposition)
                levels = (system.energy(state.fields), subsystem_levels(A, B, p), 'checkpoint')
            if levels is not None:
                level, sub_levels, source = levels
                compactness = compactness_check(level, sub_levels, mu_values, fold, p, norm_sq,
                                                decomposition.signs, config.problem.N)
                out['compactness'] = {**compactness.to_dict(), 'c_sub': sub_levels, 'source': source}

            exit_code, message = EXIT_OK, ""
            if state is not None:
                total = float(np.sum(system.norms(state.fields)))
                out['state'] = {'checkpoint': checkpoint, 'norm_total': total,
                                'margin': report.bound - total, 'within_bound': total <= report.bound}
                if total > report.bound:
                    exit_code = EXIT_FAILED
                    message = f"state norm {total:.6g} exceeds bound {report.bound:.6g}"
                    self.logger.error(f"풀이 상태가 상계를 넘습니다 (최소화 또는 구적 의심): {message}")

            self._write_json('bounds.json', out)
            print(f"상계 = {report.bound:.10g} (후보 {report.argmin}, fold={report.fold})")
            return exit_code, message

        return self._execute('bounds', body, config_path)

    def cmd_counterexample(self, start: float = 1.5, stop: float = 100.0, samples: int = 400,
                           fd_step: float = 1e-3) -> int:
        """w = |x|^{-2/3} 반례 표본, 잔차, 이동 구간 감쇠율"""
        def body():
            xs = np.linspace(start, stop, samples)
            data = sublinear_counterexample(xs)
            frame = data.to_frame()
            self._write_csv('counterexample.csv', frame)

            left = sublinear_counterexample(xs - fd_step).w
            right = sublinear_counterexample(xs + fd_step).w
            fd_second = (left - 2 * data.w + right) / fd_step ** 2
            fd_error = float(np.max(np.abs(fd_second - data.w_second) / data.w_second))

            sliding = sliding_decay_rates(xs, data.w, _sliding_windows(start, stop, geometric=True))
            self._write_csv('sliding_rates.csv', sliding)
            rates = sliding['rate'].to_numpy()
            decreasing = bool(np.all(np.diff(rates) < 0))
            residual = float(np.max(np.abs(data.residual())))
            barrier = barrier_certificate(data.xs, data.w, 1.0, data.c * np.sqrt(data.w), **COUNTEREXAMPLE_BARRIER)
            report = {
                'max_residual': residual,
                'finite_difference_rel_error': fd_error,
                'sliding_rates': rates.tolist(),
                'strictly_decreasing': decreasing,
                'final_rate_below_ceiling': bool(rates[-1] < SLIDING_RATE_CEILING),
                'barrier': barrier.to_dict(),
            }
            self._write_json('counterexample.json', report)
            print(f"최대 잔차 {residual:.3e}, 이동 구간 감쇠율 {np.round(rates, 4).tolist()}")
            ok = (residual < COUNTEREXAMPLE_RESIDUAL_TOL and decreasing and rates[-1] < SLIDING_RATE_CEILING
                  and not barrier.passed)
            return (EXIT_OK, "") if ok else (EXIT_FAILED, "negative control not confirmed")

        return self._execute('counterexample', body)

    def cmd_test_function_sweep(self, config_path: str) -> int:
        """R 에 대한 시험함수 에너지 gap 표"""
        def body():
            config, matrix = self._load()
            decomposition = config.build_decomposition(matrix.ell)
            section = config.symmetry
            p = float(config.problem.p)
            if not 1 <= section.block <= decomposition.q:
                raise ConfigError(f"symmetry.block={section.block} 이 블록 범위를 벗어납니다")
            group = SymmetryGroup(section.fold, config.problem.N)
            profile = self._profile(config)
            block_beta = matrix.submatrix(decomposition.block_indices(section.block))
            tbar = synchronized_coefficients(block_beta, p)
            sweep = test_function_sweep(section.radii, decomposition.signs.kind(section.block), group, profile, p,
                                        tbar, block_beta, block=section.block, step=section.quadrature_step,
                                        samples=section.mc_samples, seed=config.seed)
            self._write_csv('test_function_sweep.csv', sweep.frame)
            self._write_json('test_function_sweep.json', {**sweep.to_dict(), 'exploratory': group.exploratory})
            print(sweep.frame.to_string(index=False))
            return EXIT_OK, ""

        return self._execute('test-function-sweep', body, config_path)

    # ------------------------------------------------------------------
    # 출력
    # ------------------------------------------------------------------

    def _print_check(self, report: Dict):
        print("\n" + "=" * 50)
        print("블록 구조 검사")
        print("=" * 50)
        for key in ('B1', 'B2'):
            if key in report:
                print(f"{key}: {'PASS' if report[key]['pass'] else 'FAIL'}")
        if 'B3' in report:
            for block in report['B3']['blocks']:
                status = 'PASS' if block['pass'] else 'FAIL'
                print(f"B3 블록 {block['block']}: {block['lhs']:.6g} > {block['rhs']:.6g} ? {status}")
        print(f"결과: {'PASS' if report['all_pass'] else report['reason']}")

    def _print_solve(self, summary: Dict):
        print("\n" + "=" * 50)
        print("격자 풀이 결과")
        print("=" * 50)
        print(f"수렴: {summary['converged']} ({summary['iterations']} 회)")
        print(f"에너지 J: {summary['energy']:.10g}")
        print(f"Σ‖u_i‖²: {summary['norm_total']:.10g}")
        for sign in summary['signs']:
            print(f"성분 {sign['component']} ({sign['tag']}): 양수={sign['positive']}, "
                  f"부호 변화={sign['sign_changing']}")

    def _print_decay(self, fit: pd.DataFrame, sliding: pd.DataFrame):
        print("\n" + "=" * 50)
        print("감쇠율 보고서")
        print("=" * 50)
        print(fit[['component', 'rate', 'comparison', 'threshold', 'status']].to_string(index=False))
        print(sliding.to_string(index=False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='블록 구조 연립 Schrödinger 방정식 수치 도구')
    parser.add_argument('--runs-dir', default=None, help='실행 디렉터리 상위 경로 (기본값: $RUNS_DIR 또는 runs)')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='설정값 덮어쓰기 (점 표기, 값은 YAML 로 해석: --set solver.n=399)')
    sub = parser.add_subparsers(dest='command', required=True)

    check = sub.add_parser('check-matrix', help='(B1)/(B2)/(B3) 검사')
    check.add_argument('config')
    check.add_argument('--cstar', type=float, default=None, help='C_* 직접 지정')

    ground = sub.add_parser('ground-state', help='반경 바닥상태 ω 계산')
    ground.add_argument('--N', type=int, required=True)
    ground.add_argument('--p', type=float, required=True)
    ground.add_argument('--out', default=None)
    ground.add_argument('--dr', type=float, default=0.01)
    ground.add_argument('--r-max', type=float, default=40.0)

    mu = sub.add_parser('mu', help='블록 상수 μ_h')
    mu.add_argument('config')
    mu.add_argument('--restarts', type=int, default=32)

    solve = sub.add_parser('solve', help='격자 풀이')
    solve.add_argument('config')
    solve.add_argument('--force', action='store_true', help='가정 검사 실패 시에도 실행')

    decay = sub.add_parser('decay-report', help='감쇠율 보고서')
    decay.add_argument('config')
    decay.add_argument('--checkpoint', required=True, help='state.npz 또는 포락선 CSV')

    bounds = sub.add_parser('bounds', help='에너지 상계')
    bounds.add_argument('config')
    bounds.add_argument('--mu', type=float, nargs='+', default=None)
    bounds.add_argument('--omega-norm-sq', type=float, default=None)
    bounds.add_argument('--checkpoint', default=None)
    bounds.add_argument('--c-full', type=float, default=None)
    bounds.add_argument('--c-sub', type=float, nargs='+', default=None)

    counter = sub.add_parser('counterexample', help='준선형 반례 음성 대조')
    counter.add_argument('--start', type=float, default=1.5)
    counter.add_argument('--stop', type=float, default=100.0)
    counter.add_argument('--samples', type=int, default=400)

    sweep = sub.add_parser('test-function-sweep', help='시험함수 에너지 스윕')
    sweep.add_argument('config')
    return parser


def parse_overrides(items: Sequence[str]) -> Dict[str, Any]:
    """KEY=VALUE 목록을 점 표기 덮어쓰기 사전으로 변환"""
    overrides: Dict[str, Any] = {}
    for item in items:
        key, sep, raw = item.partition('=')
        if not sep or not key.strip():
            raise ConfigError(f"덮어쓰기는 KEY=VALUE 형식이어야 합니다: {item}")
        try:
            overrides[key.strip()] = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"덮어쓰기 값을 해석할 수 없습니다: {item} ({e})")
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        overrides = parse_overrides(args.overrides)
    except ConfigError as e:
        print(f"오류: {e}")
        return EXIT_USAGE

    runner = ExperimentRunner(args.runs_dir, overrides)
    if args.command == 'check-matrix':
        return runner.cmd_check_matrix(args.config, args.cstar)
    if args.command == 'ground-state':
        return runner.cmd_ground_state(args.N, args.p, args.out, args.dr, args.r_max)
    if args.command == 'mu':
        return runner.cmd_mu(args.config, args.restarts)
    if args.command == 'solve':
        return runner.cmd_solve(args.config, args.force)
    if args.command == 'decay-report':
        return runner.cmd_decay_report(args.config, args.checkpoint)
    if args.command == 'bounds':
        return runner.cmd_bounds(args.config, args.mu, args.omega_norm_sq, args.checkpoint,
                                 args.c_full, args.c_sub)
    if args.command == 'counterexample':
        return runner.cmd_counterexample(args.start, args.stop, args.samples)
    return runner.cmd_test_function_sweep(args.config)
