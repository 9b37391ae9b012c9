"""
실험 설정 구조와 설정 관리자
"""
