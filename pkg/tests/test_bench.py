import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from qsdac.bench import (ALL_METHODS, ExperimentSpec, TimingRow, build_chain, fit_loglog_slope, l2_error, linear_rho,
                         loopy_chain, mm1n_queue, parse_rho, preset, queue_const_theta0, queue_linear_theta0,
                         resample_theta, run_experiment, summarize_timing, write_loglog_svg, write_timing_csv)
from qsdac.kernel import validate
from qsdac.trace import CSV_HEADER, Trace


def test_loopy_chain_structure():
    K = loopy_chain(0.25)
    np.testing.assert_allclose(K.entries, 0.25)
    np.testing.assert_allclose(K.exit_mass, 0.25)
    with pytest.raises(ValueError):
        loopy_chain(1.0)


def test_queue_structure():
    N, rho = 6, 1.25
    K = mm1n_queue(N, rho)
    lam, mu = rho / (rho + 1), 1 / (rho + 1)
    np.testing.assert_allclose(K.entries.sum(axis=1)[1:], 1.0)
    assert K.entries[0].sum() == pytest.approx(lam)
    assert K.exit_mass[0] == pytest.approx(mu)
    np.testing.assert_array_equal(K.exit_mass[1:], 0.0)
    assert K.entries[N - 1, N - 2] == 1.0
    assert K.entries[2, 3] == pytest.approx(lam) and K.entries[2, 1] == pytest.approx(mu)
    # one move from each boundary state, two from each interior state
    assert np.count_nonzero(K.entries) == 2 * (N - 2) + 2
    assert validate(K).passed


def test_queue_rejects_bad_arguments():
    with pytest.raises(ValueError):
        mm1n_queue(2, 1.0)
    with pytest.raises(ValueError):
        mm1n_queue(5, lambda i: 1.0 - i)


def test_linear_rho_end_points():
    rho = linear_rho(500)
    assert rho(1) == 2.0
    assert rho(499) == pytest.approx(2.0 - 3.0 * 498 / 996)
    assert parse_rho("linear", 500)(1) == 2.0
    assert parse_rho("const:1.5", 10)(7) == 1.5
    assert parse_rho("0.5", 10)(3) == 0.5


def test_build_chain_dispatch(tmp_path):
    assert build_chain("loopy", eps=0.3).exit_mass[0] == pytest.approx(0.3)
    assert build_chain("mm1n", n_states=12, rho="linear").n_states == 12
    path = tmp_path / "k.txt"
    path.write_text("2\n0.5 0.25\n0.0 0.9\n")
    assert build_chain("file", kernel_file=path).n_states == 2
    with pytest.raises(ValueError):
        build_chain("file")
    with pytest.raises(ValueError):
        build_chain("torus")


def test_queue_initial_logits_have_reported_shape():
    const = queue_const_theta0()
    assert const.shape == (499,)
    assert const[0] == -35.0 and const[-1] == 3.0
    assert const[-2] == pytest.approx(-35.0 + 35.0 * 497 / 498)
    lin = queue_linear_theta0()
    assert lin.shape == (499,)
    assert lin[0] == 8.0 and lin[249] == pytest.approx(8.0 + 35.0 * 249 / 250)
    assert lin[250] == 44.0 and lin[305] == 48.0 and lin[306] == 42.0
    np.testing.assert_array_equal(lin[251:305], 43.0)


def test_resample_theta_keeps_end_points():
    theta = np.arange(499.0)
    small = resample_theta(theta, 50)
    assert small.shape == (49,)
    assert small[0] == 0.0 and small[-1] == 498.0
    assert np.all(np.diff(small) > 0)


@pytest.mark.parametrize("name", ["loopy-01", "loopy-09", "queue-const", "queue-linear"])
def test_presets_are_consistent(name):
    p = preset(name)
    K = p.kernel()
    assert p.theta0.shape == (K.n_states - 1,)
    kw = p.trainer_kwargs()
    assert kw["batch_size"] == p.batch


def test_small_queue_presets():
    p = preset("queue-const", small=True)
    assert p.kernel().n_states == 50 and p.theta0.shape == (49,)
    assert p.anchor_state == 0
    with pytest.raises(KeyError):
        preset("queue-huge")


def test_l2_error():
    assert l2_error([1, 0], [0, 1]) == pytest.approx(np.sqrt(2))
    with pytest.raises(ValueError):
        l2_error([1, 0], [1, 0, 0])


def test_loglog_slope_recovers_power_law():
    its = np.arange(1, 10_001)
    errs = 3.0 * its ** -0.5
    assert fit_loglog_slope(its, errs, window=(100, 10_000)) == pytest.approx(-0.5, abs=1e-12)
    with pytest.raises(ValueError):
        fit_loglog_slope(its[:5], errs[:5])


def test_summarize_timing_takes_medians():
    rows = [TimingRow("ac", 0.1, s, it, e) for s, it, e in [(1.0, 10, 0.3), (3.0, 30, 0.1), (2.0, 20, 0.2)]]
    s = summarize_timing(rows)
    assert (s.seconds, s.iterations, s.final_error) == (2.0, 20, 0.2)
    rows.append(TimingRow("ac", 0.1, None, 40, 0.4))
    assert summarize_timing(rows).seconds is None


def test_timing_csv_layout(tmp_path):
    path = tmp_path / "timing.csv"
    write_timing_csv(path, [TimingRow("vanilla", 0.2, 1.5, 7, 0.125), TimingRow("ac", 0.2, None, 9, None)])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["method", "accuracy_threshold", "wall_seconds", "iterations", "final_l2_error"]
    assert rows[1] == ["vanilla", "0.2", "1.5000", "7", "0.125"]
    assert rows[2] == ["ac", "0.2", "", "9", ""]


def test_svg_is_well_formed(tmp_path):
    tr = Trace()
    for i in range(1, 50):
        tr.append(i, 1.0 / i)
    path = tmp_path / "plot.svg"
    write_loglog_svg(path, [tr, tr], title="demo")
    root = ET.parse(path).getroot()
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2


def test_run_experiment_writes_one_csv_per_seed(tmp_path):
    K = loopy_chain(0.1)
    for method in ALL_METHODS:
        spec = ExperimentSpec(K, method, seeds=(0, 1), iters=50, out_dir=str(tmp_path), theta0=np.array([-1.0, 1.0]),
                              threshold=0.5, svg=True, label="t_")
        out = run_experiment(spec)
        assert [p.name for p in out["paths"]] == [f"t_{method}_seed0.csv", f"t_{method}_seed1.csv", f"t_{method}.svg"]
        with open(out["paths"][0]) as fh:
            header = next(csv.reader(fh))
        assert tuple(header) == CSV_HEADER
        assert len(out["timing"]) == 2


def test_trace_round_trip(tmp_path):
    tr = Trace()
    tr.append(1, 0.5, -0.25, 3.0)
    tr.append(2, None, None, None)
    tr.write_csv(tmp_path / "t.csv", wall_clock=True)
    back = Trace.read_csv(tmp_path / "t.csv")
    assert back == tr
    tr.write_csv(tmp_path / "u.csv")
    assert Trace.read_csv(tmp_path / "u.csv").wall_ms == [None, None]
    assert tr.first_below(0.6) == 0 and tr.first_below(0.1) is None
