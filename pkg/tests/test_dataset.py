import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transched.dataset import (
    Decomposition,
    PSEUDO_INPUT,
    TARGET_OUTPUT,
    TimeSeriesSet,
    build_regressor,
    decompose,
    detrend_mean,
    load_csv,
    segment,
    signal_power,
    write_csv,
)
from transched.errors import DataError

SCHEMA3 = {"a": PSEUDO_INPUT, "b": PSEUDO_INPUT, "f": TARGET_OUTPUT}


def _ts(data, roles=None, names=None, **kw):
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    names = names or tuple(f"ch{i}" for i in range(n))
    roles = roles or tuple([PSEUDO_INPUT] * n)
    return TimeSeriesSet(sample_rate=10.0, names=names, roles=roles, data=data, **kw)


# ---------------------------------------------------------------- load_csv


def test_load_csv_basic(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,f\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n")
    ts = load_csv(p, SCHEMA3, sample_rate=10.0)
    assert ts.n_samples == 4
    assert ts.pseudo_input_names == ("a", "b")
    assert ts.target_name == "f"
    np.testing.assert_array_equal(ts.channel("a"), [1, 4, 7, 10])
    np.testing.assert_array_equal(ts.target(), [3, 6, 9, 12])


def test_load_csv_extra_columns_ignored(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("time,a,b,f,true_label\n0.0,1,2,3,C1\n0.1,4,5,6,C1\n")
    ts = load_csv(p, SCHEMA3)
    assert ts.names == ("a", "b", "f")
    np.testing.assert_array_equal(ts.channel("b"), [2, 5])


def test_load_csv_ragged_row_names_line(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,f\n1,2,3\n4,5\n")
    with pytest.raises(DataError, match="line 3"):
        load_csv(p, SCHEMA3)


def test_load_csv_empty_data(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,f\n")
    with pytest.raises(DataError, match="no samples"):
        load_csv(p, SCHEMA3)


def test_load_csv_non_numeric_cell(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,f\n1,oops,3\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_csv(p, SCHEMA3)


def test_load_csv_unknown_channel(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="unknown channel"):
        load_csv(p, SCHEMA3)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "absent.csv", SCHEMA3)


def test_csv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    ts = _ts(rng.normal(size=(3, 17)), roles=(PSEUDO_INPUT, PSEUDO_INPUT, TARGET_OUTPUT),
             names=("a", "b", "f"))
    p = tmp_path / "d.csv"
    write_csv(ts, p)
    back = load_csv(p, SCHEMA3, sample_rate=10.0)
    np.testing.assert_array_equal(back.data, ts.data)
    write_csv(back, tmp_path / "d2.csv")
    assert (tmp_path / "d.csv").read_bytes() == (tmp_path / "d2.csv").read_bytes()


# ------------------------------------------------------------ detrend_mean


def test_detrend_constant_channel():
    out = detrend_mean(_ts([[1.0, 1.0, 1.0]]))
    np.testing.assert_array_equal(out.data, [[0.0, 0.0, 0.0]])


def test_detrend_arithmetic():
    out = detrend_mean(_ts([[1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(out.data, [[-1.0, 0.0, 1.0]])


def test_detrend_zero_mean_unchanged():
    x = np.array([[1.0, -2.0, 1.0]])
    out = detrend_mean(_ts(x))
    np.testing.assert_allclose(out.data, x, atol=1e-12)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_detrend_idempotent(values):
    once = detrend_mean(_ts([values]))
    twice = detrend_mean(once)
    scale = max(1.0, float(np.max(np.abs(once.data))))
    np.testing.assert_allclose(twice.data, once.data, atol=1e-12 * scale)
    assert abs(float(once.data.mean())) <= 1e-12 * max(1.0, max(map(abs, values)))


# --------------------------------------------------------- build_regressor


def test_regressor_scalar_order_one():
    m = build_regressor([1.0, 2.0, 3.0, 4.0], [10.0, 20.0, 30.0, 40.0], 1)
    np.testing.assert_array_equal(m.phi, [[2, 1], [3, 2], [4, 3]])
    np.testing.assert_array_equal(m.y, [20, 30, 40])
    assert m.n_rows == 3 and m.n_params == 2


def test_regressor_order_zero():
    y_i = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    m = build_regressor(y_i, [0.0, 0.0, 0.0], 0)
    np.testing.assert_array_equal(m.phi, y_i.T)


def test_regressor_column_count_seven_inputs_order_fifty():
    # n_I * (n + 1) columns: 7 inputs at order 50 give 357
    rng = np.random.default_rng(0)
    y_i = rng.normal(size=(7, 60))
    m = build_regressor(y_i, rng.normal(size=60), 50)
    assert m.phi.shape == (10, 357)
    assert m.n_params == 7 * 51


def test_regressor_insufficient_samples():
    with pytest.raises(DataError, match="insufficient samples"):
        build_regressor([1.0, 2.0], [1.0, 2.0], 2)


def test_regressor_lag_blocks_recover_shifted_channels():
    rng = np.random.default_rng(1)
    n_i, m_len, order = 3, 40, 4
    y_i = rng.normal(size=(n_i, m_len))
    m = build_regressor(y_i, rng.normal(size=m_len), order)
    for lag in range(order + 1):
        block = m.phi[:, lag * n_i : (lag + 1) * n_i]
        np.testing.assert_array_equal(block, y_i[:, order - lag : m_len - lag].T)


# --------------------------------------------------------------- decompose


def test_decompose_selects_channel():
    ts = _ts(np.arange(12.0).reshape(3, 4), names=("a", "b", "c"))
    y_i1, y_i2 = decompose(ts, Decomposition(aux_output_index=2))
    np.testing.assert_array_equal(y_i2, ts.channel("c"))
    np.testing.assert_array_equal(y_i1, ts.channels(("a", "b")))


def test_decompose_two_channels():
    ts = _ts(np.arange(8.0).reshape(2, 4), names=("a", "b"))
    y_i1, y_i2 = decompose(ts, Decomposition(aux_output_index=1))
    assert y_i1.shape == (1, 4)
    np.testing.assert_array_equal(y_i1[0], ts.channel("a"))


def test_decompose_single_channel_impossible():
    ts = _ts(np.arange(4.0).reshape(1, 4))
    with pytest.raises(DataError, match="at least 2 pseudo-input"):
        decompose(ts, Decomposition(aux_output_index=0))


def test_decompose_index_out_of_range():
    ts = _ts(np.arange(8.0).reshape(2, 4))
    with pytest.raises(DataError, match="out of range"):
        decompose(ts, Decomposition(aux_output_index=5))


# ----------------------------------------------------------------- segment


def test_segment_even_partition():
    ts = _ts([np.arange(160.0)])
    wins = segment(ts, 20)
    assert len(wins) == 8
    assert all(not w.short for w in wins)
    assert [(w.start, w.stop) for w in wins] == [(20 * k, 20 * (k + 1)) for k in range(8)]


def test_segment_remainder_flagged():
    wins = segment(_ts([np.arange(10.0)]), 4)
    assert [(w.stop - w.start) for w in wins] == [4, 4, 2]
    assert [w.short for w in wins] == [False, False, True]


def test_segment_degenerate_single_short_window():
    wins = segment(_ts([np.arange(5.0)]), 10)
    assert len(wins) == 1 and wins[0].short


def test_segment_invalid_window():
    with pytest.raises(DataError, match="positive"):
        segment(_ts([np.arange(5.0)]), 0)


@given(st.integers(1, 97), st.integers(1, 30))
@settings(max_examples=40)
def test_segment_is_partition(m_len, window):
    data = np.arange(float(m_len))[None, :]
    wins = segment(_ts(data), window)
    glued = np.concatenate([w.ts.data[0] for w in wins])
    np.testing.assert_array_equal(glued, data[0])
    assert all(not w.short for w in wins[:-1])


# ------------------------------------------------------------ other pieces


def test_signal_power():
    ts = _ts([[1.0, -1.0, 1.0, -1.0], [2.0, 2.0, 2.0, 2.0]], names=("u", "v"))
    powers = signal_power(ts)
    assert powers == {"u": 1.0, "v": 4.0}


def test_timeseries_invariants():
    with pytest.raises(DataError, match="sample_rate"):
        _ts([[1.0]]).__class__(sample_rate=0.0, names=("a",), roles=(PSEUDO_INPUT,),
                               data=np.ones((1, 1)))
    with pytest.raises(DataError, match="unique"):
        TimeSeriesSet(sample_rate=1.0, names=("a", "a"),
                      roles=(PSEUDO_INPUT, PSEUDO_INPUT), data=np.ones((2, 3)))
    with pytest.raises(DataError, match="target_output"):
        TimeSeriesSet(sample_rate=1.0, names=("a", "b"),
                      roles=(TARGET_OUTPUT, TARGET_OUTPUT), data=np.ones((2, 3)))


def test_timeseries_data_read_only():
    ts = _ts([[1.0, 2.0]])
    with pytest.raises(ValueError):
        ts.data[0, 0] = 5.0
