import io
import logging

import numpy as np

from ffsim.exceptions import EXIT_RUNTIME_FAILURE, EXIT_VALIDATION_ERROR, SchemaError, SelectorContractError
from ffsim.services.bkt_tracer import BktParams
from ffsim.utils.error_handler import ErrorHandler, cli_error_handler
from ffsim.utils.performance_monitor import measure_time
from ffsim.utils.random_streams import StudentStreams, derive_stream


def test_streams_depend_only_on_their_key():
    a = derive_stream(1, 2, 3).random(4)
    derive_stream(1, 2, 4).random(100)
    b = derive_stream(1, 2, 3).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, derive_stream(2, 2, 3).random(4))


def test_student_streams_share_theta_across_conditions():
    first = StudentStreams.derive(7, 0, 5)
    second = StudentStreams.derive(7, 3, 5)
    assert first.theta.random() == second.theta.random()
    assert first.response.random() != second.response.random()


def test_schema_error_report():
    stream = io.StringIO()
    error = SchemaError("Duplicate problem id 'p1'", path="pool.json", problem_id="p1")
    assert ErrorHandler.handle_simulation_error(error, "run", stream) == EXIT_VALIDATION_ERROR
    assert stream.getvalue().splitlines() == [
        "error [SCHEMA_ERROR]: Duplicate problem id 'p1'",
        "  path: pool.json",
        "  problem_id: p1",
    ]


def test_runtime_failure_exit_code():
    stream = io.StringIO()
    error = SelectorContractError("nothing to select", selector="mastery_hard")
    assert ErrorHandler.handle_simulation_error(error, "run", stream) == EXIT_RUNTIME_FAILURE


def test_decorated_verb_converts_failures(capsys):
    @cli_error_handler("demo")
    def verb():
        BktParams(p_guess=0.6, p_slip=0.5)

    @cli_error_handler("demo")
    def crash():
        raise KeyError("x")

    assert verb() == EXIT_VALIDATION_ERROR
    assert crash() == EXIT_RUNTIME_FAILURE
    assert "unexpected KeyError in demo" in capsys.readouterr().err


def test_measure_time_warns_when_slow(caplog):
    with caplog.at_level(logging.DEBUG, logger="ffsim.utils.performance_monitor"):
        with measure_time("quick"):
            pass
        with measure_time("slow", threshold_seconds=-1.0):
            pass
    assert [(r.levelno, r.getMessage().split(" took")[0].split(" completed")[0]) for r in caplog.records] == [
        (logging.DEBUG, "Operation quick"),
        (logging.WARNING, "Slow operation: slow"),
    ]
