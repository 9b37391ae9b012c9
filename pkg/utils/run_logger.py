"""
실행 로깅 시스템
실행 디렉터리마다 오류 / 실행 / 시스템 로그와 JSON 기록(errors.json, runs.json)을 관리
"""

import json
import logging
import os
import traceback
from datetime import datetime
from typing import Any, Dict, List, Optional

MAX_ERRORS = 1000
MAX_RUNS = 5000


class RunLogger:
    def __init__(self, log_dir: str = "runs"):
        self.log_dir = str(log_dir)
        os.makedirs(self.log_dir, exist_ok=True)

        # 오류 전용 로거 설정
        self.error_logger = self._setup_logger(
            'RunErrorLogger', 'errors.log', logging.ERROR,
            '%(asctime)s - %(levelname)s - [%(module)s:%(funcName)s:%(lineno)d] - %(message)s'
        )

        # 실행 기록 로거 설정
        self.run_logger = self._setup_logger(
            'RunLedgerLogger', 'runs.log', logging.INFO,
            '%(asctime)s - %(levelname)s - %(message)s'
        )

        # 시스템 로거 설정
        self.system_logger = self._setup_logger(
            'RunSystemLogger', 'system.log', logging.DEBUG,
            '%(asctime)s - %(levelname)s - [%(module)s] - %(message)s'
        )

    def _setup_logger(self, name: str, filename: str, level: int, fmt: str) -> logging.Logger:
        logger = logging.getLogger(name)
        logger.setLevel(level)

        # 이전 실행 디렉터리의 핸들러 제거
        for handler in logger.handlers[:]:
            handler.close()
            logger.removeHandler(handler)

        handler = logging.FileHandler(os.path.join(self.log_dir, filename), encoding='utf-8')
        handler.setLevel(level)
        handler.setFormatter(logging.Formatter(fmt))
        logger.addHandler(handler)
        logger.propagate = False  # 중복 로깅 방지
        return logger

    def _append_json(self, filename: str, record: Dict[str, Any], limit: int):
        path = os.path.join(self.log_dir, filename)
        records = []
        if os.path.exists(path):
            with open(path, 'r', encoding='utf-8') as f:
                records = json.load(f)
        records.append(record)
        if len(records) > limit:
            records = records[-limit:]
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(records, f, ensure_ascii=False, indent=2, default=str)

    def _read_json(self, filename: str, limit: int) -> List[Dict[str, Any]]:
        path = os.path.join(self.log_dir, filename)
        try:
            if os.path.exists(path):
                with open(path, 'r', encoding='utf-8') as f:
                    records = json.load(f)
                return records[-limit:]
            return []
        except Exception as e:
            self.system_logger.error(f"{filename} 조회 실패: {e}")
            return []

    def log_error(self, error: Exception, context: Optional[Dict[str, Any]] = None,
                  module: str = "Unknown"):
        """오류 로깅"""
        try:
            error_info = {
                'timestamp': datetime.now().isoformat(),
                'module': module,
                'error_type': type(error).__name__,
                'error_message': str(error),
                'traceback': ''.join(traceback.format_exception(type(error), error, error.__traceback__)),
                'context': context or {},
            }

            self.error_logger.error(f"[{module}] {type(error).__name__}: {error}")
            self.error_logger.error(f"Context: {json.dumps(context or {}, ensure_ascii=False, default=str)}")
            self.error_logger.error(f"Traceback:\n{error_info['traceback']}")

            try:
                self._append_json('errors.json', error_info, MAX_ERRORS)
            except Exception as json_error:
                self.error_logger.error(f"JSON 오류 기록 저장 실패: {json_error}")

        except Exception as log_error:
            # 로깅 자체에서 오류 발생 시 최소한의 로깅
            print(f"오류 로깅 실패: {log_error}")
            print(f"원본 오류: {error}")

    def log_run(self, command: str, exit_code: int, config_hash: Optional[str] = None,
                outputs: Optional[List[str]] = None, message: str = ""):
        """하위 명령 실행 기록"""
        try:
            run_info = {
                'timestamp': datetime.now().isoformat(),
                'command': command,
                'exit_code': exit_code,
                'config_hash': config_hash,
                'outputs': outputs or [],
                'message': message,
            }

            status = "SUCCESS" if exit_code == 0 else f"FAILED({exit_code})"
            log_message = f"[{status}] {command} - config: {config_hash or '-'}, outputs: {len(outputs or [])}"
            if message:
                log_message += f" - {message}"
            self.run_logger.info(log_message)

            try:
                self._append_json('runs.json', run_info, MAX_RUNS)
            except Exception as json_error:
                self.run_logger.error(f"JSON 실행 기록 저장 실패: {json_error}")

        except Exception as log_error:
            print(f"실행 로깅 실패: {log_error}")

    def log_system(self, level: str, module: str, message: str, data: Optional[Dict] = None):
        """시스템 로깅"""
        try:
            log_message = f"[{module}] {message}"
            if data:
                log_message += f" - Data: {json.dumps(data, ensure_ascii=False, default=str)}"
            self.system_logger.log(getattr(logging, level.upper(), logging.INFO), log_message)

        except Exception as log_error:
            print(f"시스템 로깅 실패: {log_error}")

    def get_recent_errors(self, limit: int = 50) -> List[Dict[str, Any]]:
        """최근 오류 조회"""
        return self._read_json('errors.json', limit)

    def get_recent_runs(self, limit: int = 100) -> List[Dict[str, Any]]:
        """최근 실행 조회"""
        return self._read_json('runs.json', limit)

    def close(self):
        for logger in (self.error_logger, self.run_logger, self.system_logger):
            for handler in logger.handlers[:]:
                handler.close()
                logger.removeHandler(handler)
