"""
설정 관리자
실험 설정 문서(JSON/YAML)를 읽고 점 표기법으로 조회/수정한 뒤 백업과 함께 저장
"""

import copy
import logging
import os
import shutil
import threading
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Union

from config.experiment_config import ConfigError, ExperimentConfig, read_document, write_document

DEFAULT_CONFIG_FILE = Path(__file__).resolve().parent / 'experiment_config.json'


class ConfigManager:
    def __init__(self, config_file: Union[str, Path] = DEFAULT_CONFIG_FILE):
        self.config_file = Path(config_file)
        self.config_data: Dict[str, Any] = {}
        self.last_modified = 0.0
        self.last_error: Optional[str] = None
        self.lock = threading.Lock()
        self.logger = logging.getLogger('ConfigManager')

        # 초기 설정 로드
        self.load_config()

    @property
    def loaded(self) -> bool:
        return self.last_error is None and bool(self.config_data)

    def load_config(self) -> bool:
        """설정 파일 로드"""
        try:
            if not self.config_file.exists():
                raise ConfigError(f"설정 파일을 찾을 수 없습니다: {self.config_file}")

            with self.lock:
                data = read_document(self.config_file)
                if not isinstance(data, dict):
                    raise ConfigError("설정 문서의 최상위는 키-값 문서여야 합니다")
                self.config_data = data
                self.last_modified = os.path.getmtime(self.config_file)
                self.last_error = None

            self.logger.info(f"설정 파일 로드 완료: {self.config_file}")
            return True

        except Exception as e:
            self.last_error = str(e)
            self.logger.error(f"설정 파일 로드 실패: {e}")
            return False

    def save_config(self, path: Optional[Union[str, Path]] = None) -> bool:
        """설정 파일 저장 (기존 파일은 *.backup.json 으로 보관)"""
        target = Path(path) if path is not None else self.config_file
        try:
            with self.lock:
                if target.exists():
                    backup_file = target.with_suffix('.backup' + target.suffix)
                    shutil.copyfile(target, backup_file)
                write_document(target, self.config_data)
                self.last_modified = os.path.getmtime(target)

            self.logger.info(f"설정 파일 저장 완료: {target} ({datetime.now().isoformat()})")
            return True

        except Exception as e:
            self.logger.error(f"설정 파일 저장 실패: {e}")
            return False

    def get_config(self, key_path: str = None) -> Any:
        """설정값 조회 (점 표기법 지원: 'solver.n')"""
        with self.lock:
            if key_path is None:
                return copy.deepcopy(self.config_data)

            value = self.config_data
            try:
                for key in key_path.split('.'):
                    value = value[key]
                return value
            except (KeyError, TypeError):
                self.logger.warning(f"설정 키를 찾을 수 없습니다: {key_path}")
                return None

    def _assign(self, key_path: str, value: Any) -> Any:
        keys = key_path.split('.')
        config = self.config_data
        for key in keys[:-1]:
            if key not in config or config[key] is None:
                config[key] = {}
            config = config[key]
        old_value = config.get(keys[-1])
        config[keys[-1]] = value
        self.logger.info(f"설정 변경: {key_path} = {old_value} -> {value}")
        return old_value

    def set_config(self, key_path: str, value: Any, persist: bool = False) -> bool:
        """설정값 업데이트"""
        try:
            with self.lock:
                self._assign(key_path, value)
            if persist:
                return self.save_config()
            return True

        except Exception as e:
            self.logger.error(f"설정 업데이트 실패: {e}")
            return False

    def update_config(self, updates: Dict[str, Any], persist: bool = False) -> bool:
        """여러 설정값을 한 번에 업데이트"""
        try:
            with self.lock:
                for key_path, value in updates.items():
                    self._assign(key_path, value)
            if persist:
                return self.save_config()
            return True

        except Exception as e:
            self.logger.error(f"설정 일괄 업데이트 실패: {e}")
            return False

    def experiment_config(self) -> ExperimentConfig:
        """현재 문서를 ExperimentConfig 로 해석 (실패 시 ConfigError)"""
        if not self.loaded:
            raise ConfigError(self.last_error or f"설정이 비어 있습니다: {self.config_file}")
        return ExperimentConfig.from_dict(self.get_config(), base_dir=self.config_file.parent)
