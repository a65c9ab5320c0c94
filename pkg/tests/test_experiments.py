import os
import runpy

import pytest

from elastogauge import experiments as ex


def test_row_and_line_format():
    row = ex.CheckRow("x/y", 3, 1e-3, 2.0, True)
    assert row.as_tuple() == ("x/y", 3, 1e-3, 2.0, True)
    res = ex.CriterionResult("k", "title", None, "note", runtime=1.23)
    assert res.line() == "[REPORT] k title: note (1.2s)"
    assert ex.CriterionResult("k", "t", False, "s").line().startswith("[FAIL]")


def test_quadrant_claims():
    assert all(ex.quadrant_expectation(n)[0] for n in ex.QUADRANT_PRESETS)
    assert [n for n in ex.QUADRANT_PRESETS if ex.quadrant_expectation(n)[1]] == ["full-riemannian"]
    with pytest.raises(ValueError):
        ex.quadrant_preset("sideways")


def test_scaling_identity_three_dimensional():
    res = ex.run_scaling_identity(3, 8, 1)
    assert res.passed, res.summary
    assert res.runtime > 0


def test_default_collar_four_cells():
    setup = ex.riemannian_setup([64, 96, 128])
    assert setup.collar == pytest.approx(4 / 63)
    cases = ex.gauge_cases(setup)
    assert list(cases) == ["identity", "mu-only", "phi-only", "combined"]


def test_benchmark_runs(capsys):
    path = os.path.join(os.path.dirname(__file__), os.pardir, "benchmarks", "bench_stencil.py")
    bench = runpy.run_path(path)
    bench["main"](["--sizes", "17", "--repeat", "2"])
    out = capsys.readouterr().out.splitlines()
    assert out[0].split()[0] == "nx" and len(out) == 2
    assert float(out[1].split()[-1]) == 0.0
