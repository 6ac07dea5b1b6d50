import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from surffpt.experiments import (
    ConvergenceRow, StudyConfig, StudyResult, default_config_text, estimate_rate, format_convergence, map_starts,
    run_convergence, run_study,
)
from surffpt.sampling import sample_cloud
from surffpt.surfaces import SlicedTorus


def test_rate_examples():
    # values from a manifold-A degree-2 run and a manifold-D degree-6 run
    assert estimate_rate([2.6503e-2, 5.8961e-3], [0.1, 0.05])[0] == pytest.approx(2.168, abs=1e-3)
    assert estimate_rate([2.7306e-4, 2.6141e-6], [0.04, 0.02])[0] == pytest.approx(6.707, abs=1e-3)
    assert estimate_rate([1.0, 1.0, 1.0], [0.1, 0.05, 0.025]) == [0.0, 0.0]
    assert estimate_rate([1.0, 1 / 16], [1.0, 0.5]) == [pytest.approx(4.0)]


@given(st.floats(0.5, 8.0), st.floats(1e-3, 10.0))
def test_rate_recovers_power_laws(p, c):
    hs = np.array([0.1, 0.05, 0.025])
    assert np.allclose(estimate_rate(c * hs**p, hs), p)


def test_rate_input_checks():
    with pytest.raises(ValueError):
        estimate_rate([1.0], [1.0])
    with pytest.raises(ValueError):
        estimate_rate([1.0, 0.0], [1.0, 0.5])
    with pytest.raises(ValueError):
        estimate_rate([1.0, 2.0], [1.0])


def test_convergence_table_two_levels():
    rows = run_convergence("D", degrees=(2,), levels=2)
    assert [r.level for r in rows] == [1, 2]
    assert rows[0].rate is None and rows[1].rate > 1.5
    assert rows[1].n > 3.5 * rows[0].n
    text = format_convergence(rows)
    assert text.splitlines()[0] == ConvergenceRow.HEADER
    assert len(text.splitlines()) == 3


def test_study_config_defaults_and_ordering():
    c = StudyConfig("neck", values=(0.1, 0.8, 0.3))
    assert c.values == (0.8, 0.3, 0.1)
    d = StudyConfig("double-well")
    assert d.values == (0.0, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0)
    assert len(d.starts) == 9 and len(StudyConfig("diffusivity-depth").starts) == 9
    with pytest.raises(ValueError):
        StudyConfig("triple-well")
    with pytest.raises(ValueError):
        StudyConfig.from_mapping({"name": "neck", "colour": 1})


def test_study_config_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("name: diffusivity-extent\nvalues: [0.0, 0.3]\nh: 0.05\n")
    c = StudyConfig.load(p)
    assert c.values == (0.0, 0.3) and c.h == 0.05
    with pytest.raises(ValueError):
        StudyConfig.load(p, "neck")
    assert "boundary_width" in default_config_text()


def test_map_starts_picks_interior_points():
    m = SlicedTorus()
    cloud = sample_cloud(m, 0.08, boundary="edge::1e-9")
    idx, dist = map_starts(cloud, m.sigma(np.array([[math.pi / 2, 0.0], [math.pi, 1.0]])))
    assert not cloud.boundary[idx].any()
    assert dist[1] < 0.08


def test_result_format():
    r = StudyResult("neck", "r0,start,fpt", [(0.5, 0, 1.25)], {"ok": True, "s": [0.5, 0.25]},
                    {"t": ["a,b", "1,2"]})
    assert r.format() == "r0,start,fpt\n0.5,0,1.25\n# t\na,b\n1,2\n# ok=true\n# s=0.5;0.25\n"


def test_small_diffusivity_study():
    res = run_study(StudyConfig("diffusivity-depth", values=(0.0, 0.5, 0.9), h=0.08))
    assert res.diagnostics["nondecreasing"]
    assert len(res.rows) == 27


def test_small_double_well_study():
    res = run_study(StudyConfig("double-well", values=(0.0, 1.0, 2.0), h=0.08))
    assert res.diagnostics["monotone_X0"]
    assert len(res.diagnostics["log_slopes_X0"]) == 2


def test_small_neck_study():
    res = run_study(StudyConfig("neck", values=(0.8, 0.4), h=0.1, starts=(math.pi + 0.05,)))
    assert res.diagnostics["increasing_as_r0_shrinks"]
    assert "# free_energy r0,z,Q" in res.format()
