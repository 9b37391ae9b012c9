"""
수치 핵심 모듈: 결합 행렬, 바닥상태, 블록 최적화, 대칭군, 격자 PDE
"""
