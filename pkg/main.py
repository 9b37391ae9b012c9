#!/usr/bin/env python3
"""
블록 구조 연립 Schrödinger 방정식 수치 도구
메인 실행 스크립트
"""

import logging
import os
import sys

from dotenv import load_dotenv

# 환경 변수 로드
load_dotenv()

# 프로젝트 루트 경로 추가
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from experiments.runner import main as run_experiment


def setup_logging():
    """로깅 설정"""
    log_level = os.getenv('LOG_LEVEL', 'INFO')
    log_file = os.getenv('LOG_FILE', 'logs/toolkit.log')

    # 로그 디렉토리 생성
    if os.path.dirname(log_file):
        os.makedirs(os.path.dirname(log_file), exist_ok=True)

    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler(sys.stdout)
        ]
    )


def main() -> int:
    """메인 함수"""
    setup_logging()
    return run_experiment(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
