import math

import pytest

from actgap.curves import (CSV_HEADER, CurveWriter, LearningCurve, curve_auc, curve_to_csv,
                           final_mean_return, parse_curve, read_curve, steps_to_threshold,
                           write_curve)


def _curve(steps, returns):
    c = LearningCurve()
    for s, r in zip(steps, returns):
        c.append(s, r)
    return c


def test_constant_curve_above_threshold():
    c = _curve(range(10, 110, 10), [5.0] * 10)
    assert steps_to_threshold(c, 1.0, 4) == c.steps[3]


def test_never_reaching_threshold():
    assert steps_to_threshold(_curve([1, 2, 3], [0.0, 0.0, 0.0]), 1.0, 2) is None


def test_crossing_once_by_hand():
    returns = [0, 0, 1, 2, 3, 4, 5, 6, 7, 8]
    c = _curve([10 * (i + 1) for i in range(10)], returns)
    # window 3 means: 1/3, 1, 2, 3, 4 ... first >= 3.5 is (3+4+5)/3 = 4 at episode 6
    assert steps_to_threshold(c, 3.5, 3) == 70


def test_window_must_be_positive():
    with pytest.raises(ValueError):
        steps_to_threshold(_curve([1], [1.0]), 0.0, 0)


def test_auc_constant():
    assert curve_auc(_curve([30, 70, 100], [4.0, 4.0, 4.0]), 100) == 4.0


def test_auc_half_and_half():
    assert curve_auc(_curve([50, 100], [0.0, 1.0]), 100) == 0.5


def test_auc_three_episodes_by_hand():
    c = _curve([20, 50, 60], [1.0, 3.0, -2.0])
    # (20*1 + 30*3 + 10*-2 + 40*-2) / 100
    assert curve_auc(c, 100) == pytest.approx(0.1, abs=1e-15)


def test_auc_truncates_at_budget():
    assert curve_auc(_curve([10, 20], [1.0, 9.0]), 10) == 1.0


def test_auc_empty_and_bad_budget():
    assert math.isnan(curve_auc(LearningCurve(), 10))
    with pytest.raises(ValueError):
        curve_auc(LearningCurve(), 0)


def test_steps_must_increase():
    c = _curve([5], [1.0])
    with pytest.raises(ValueError):
        c.append(5, 2.0)


def test_csv_roundtrip(tmp_path):
    c = LearningCurve()
    c.append(17, 17.0, 0.9, None)
    c.append(40, -3.25, 0.1 + 0.2, 1e-300)
    path = tmp_path / "run.csv"
    write_curve(c, path)
    text = path.read_bytes().decode()
    assert text.startswith(CSV_HEADER + "\n") and "\r" not in text
    assert read_curve(path) == c


def test_csv_rejects_bad_input():
    with pytest.raises(ValueError):
        parse_curve("a,b,c\n")
    with pytest.raises(ValueError, match=":2:"):
        parse_curve(CSV_HEADER + "\n0,1,2\n")
    with pytest.raises(ValueError, match="out of sequence"):
        parse_curve(CSV_HEADER + "\n1,10,1.0,0.5,\n")


def test_writer_flushes_every_row(tmp_path):
    path = tmp_path / "live.csv"
    c = LearningCurve()
    w = CurveWriter(path)
    c.append(3, 1.0, 0.5, None)
    w.write_episode(c)
    # readable while still open
    assert read_curve(path) == c
    w.close()


def test_final_mean_return():
    assert final_mean_return(_curve([1, 2, 3], [1.0, 2.0, 6.0]), 2) == 4.0
    assert math.isnan(final_mean_return(LearningCurve(), 2))


def test_curve_to_csv_empty():
    assert curve_to_csv(LearningCurve()) == CSV_HEADER + "\n"
