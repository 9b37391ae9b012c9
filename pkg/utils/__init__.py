"""
실행 로깅 도구
"""
