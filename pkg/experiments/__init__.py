"""
하위 명령 실험 실행기
"""
