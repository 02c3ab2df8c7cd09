import threading

import numpy as np
import pytest

from windbo.cases import case_square
from windbo.exchange import (EvaluationTimeout, ExternalEvaluator, ProtocolError, read_request, respond_once,
                             serve, wake_solver, write_response)
from windbo.wake import WindRose


@pytest.fixture
def server(tmp_path):
    case = case_square()
    stop = threading.Event()
    solver = wake_solver(case.turbine, case.wake)
    thread = threading.Thread(target=serve, args=(tmp_path, solver, 0.002, stop.is_set), daemon=True)
    thread.start()
    yield case, tmp_path
    stop.set()
    thread.join(5)


def test_round_trip_bitwise_over_twenty_layouts(server):
    case, directory = server
    ev = ExternalEvaluator(directory, case.rose, poll_interval=0.002, timeout=30)
    for v in case.random_layouts(20, seed=0):
        xy = case.snap(v).xy
        assert ev.aep(xy) == case.aep_wh(case.snap(v))


def test_request_file_format(tmp_path):
    rose = WindRose([0.0, 90.0], [8.0, 9.5], [0.25, 0.75])
    ev = ExternalEvaluator(tmp_path, rose, poll_interval=0.01, timeout=0.05)
    xy = np.array([[0.1, 2.0 / 3.0], [100.0, 200.0]])
    with pytest.raises(EvaluationTimeout):
        ev.aep(xy)
    lines = (tmp_path / "req_1.txt").read_text().splitlines()
    assert lines[0] == "turbines 2" and lines[3] == "states 2"
    got_xy, d, s, f = read_request(tmp_path / "req_1.txt")
    assert np.array_equal(got_xy, xy)
    assert np.array_equal(d, rose.directions) and np.array_equal(f, rose.frequencies)


def test_ids_continue_after_existing_requests(tmp_path):
    (tmp_path / "req_7.txt").write_text("turbines 0\nstates 0\n")
    rose = WindRose([0.0], [8.0], [1.0])
    ev = ExternalEvaluator(tmp_path, rose, poll_interval=0.01, timeout=0.03)
    with pytest.raises(EvaluationTimeout):
        ev.aep(np.zeros((1, 2)))
    assert (tmp_path / "req_8.txt").exists()


def test_malformed_response_rejected(tmp_path):
    rose = WindRose([0.0, 90.0], [8.0, 8.0], [0.5, 0.5])
    (tmp_path / "resp_1.txt").write_text("1 1000.0\n")
    ev = ExternalEvaluator(tmp_path, rose, poll_interval=0.01, timeout=1.0)
    with pytest.raises(ProtocolError):
        ev.aep(np.zeros((1, 2)))


def test_respond_once_answers_pending_only(tmp_path):
    case = case_square()
    rose = case.rose
    solver = wake_solver(case.turbine, case.wake)
    ev = ExternalEvaluator(tmp_path, rose, poll_interval=0.01, timeout=0.03)
    with pytest.raises(EvaluationTimeout):
        ev.aep(case.snap(case.random_layouts(1, seed=1)[0]).xy)
    assert respond_once(tmp_path, solver) == 1
    assert respond_once(tmp_path, solver) == 0


def test_write_response_full_precision(tmp_path):
    totals = np.array([1.0 / 3.0, 2e6 + 1e-7])
    write_response(tmp_path / "resp_1.txt", totals)
    rows = [line.split() for line in (tmp_path / "resp_1.txt").read_text().splitlines()]
    assert [float(r[1]) for r in rows] == totals.tolist()


def test_timeout_must_exceed_poll(tmp_path):
    with pytest.raises(ValueError):
        ExternalEvaluator(tmp_path, WindRose([0.0], [8.0], [1.0]), poll_interval=1.0, timeout=0.5)
