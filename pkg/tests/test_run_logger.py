import logging

from utils.run_logger import RunLogger


def test_run_records(tmp_path):
    run_logger = RunLogger(str(tmp_path))
    run_logger.log_run('mu', 0, 'abc', ['mu.json'])
    run_logger.log_run('solve', 1, None, [], 'MaxIterationsError')

    runs = run_logger.get_recent_runs()
    assert [r['command'] for r in runs] == ['mu', 'solve']
    assert runs[1]['message'] == 'MaxIterationsError'
    assert run_logger.get_recent_runs(limit=1)[0]['command'] == 'solve'
    run_logger.close()

    text = (tmp_path / 'runs.log').read_text(encoding='utf-8')
    assert '[SUCCESS] mu' in text
    assert '[FAILED(1)] solve' in text


def test_error_records(tmp_path):
    run_logger = RunLogger(str(tmp_path))
    try:
        raise ValueError("행렬이 대칭이 아닙니다")
    except ValueError as e:
        run_logger.log_error(e, {'command': 'check-matrix'}, 'ExperimentRunner')

    errors = run_logger.get_recent_errors()
    assert errors[0]['error_type'] == 'ValueError'
    assert errors[0]['context'] == {'command': 'check-matrix'}
    assert 'Traceback' in errors[0]['traceback']
    run_logger.close()
    assert 'ExperimentRunner' in (tmp_path / 'errors.log').read_text(encoding='utf-8')


def test_system_log_and_close(tmp_path):
    run_logger = RunLogger(str(tmp_path))
    run_logger.log_system('INFO', 'ExperimentRunner', 'solve 시작', {'n': 199})
    run_logger.close()
    assert not logging.getLogger('RunSystemLogger').handlers
    assert '"n": 199' in (tmp_path / 'system.log').read_text(encoding='utf-8')


def test_unreadable_history_is_empty(tmp_path):
    (tmp_path / 'runs.json').write_text("{broken", encoding='utf-8')
    run_logger = RunLogger(str(tmp_path))
    assert run_logger.get_recent_runs() == []
    run_logger.close()
