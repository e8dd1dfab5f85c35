import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlp_factor.errors import (
    CalendarError,
    DegenerateColumnError,
    EmptyFactorSetError,
    EmptyUniverseError,
    ParseError,
    SchemaError,
)
from mlp_factor.panel import (
    DateRange,
    Panel,
    UniverseFilterSpec,
    add_months,
    filter_factors,
    filter_universe,
    fit_column_stats,
    impute_and_standardize,
    load_panel,
    month_span,
    panel_to_csv_text,
)


def write(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def make_panel(values, start="2020-01", kind="returns", prefix="S"):
    values = np.asarray(values, dtype=float)
    months = month_span(start, add_months(start, values.shape[0] - 1))
    cols = [f"{prefix}{j}" for j in range(values.shape[1])]
    return Panel(months, cols, values, kind)


class TestMonths:
    def test_add_months_crosses_years(self):
        assert add_months("2019-11", 3) == "2020-02"
        assert add_months("2020-01", -1) == "2019-12"

    def test_date_range_length(self):
        assert len(DateRange("1957-01", "2003-01")) == 553

    def test_reversed_range_rejected(self):
        with pytest.raises(ValueError):
            DateRange("2020-02", "2020-01")


class TestLoadPanel:
    def test_well_formed(self, tmp_path):
        p = load_panel(write(tmp_path, "date,a,b\n2020-01,1,2\n2020-02,3,4\n2020-03,5,6\n"))
        assert p.dates == ("2020-01", "2020-02", "2020-03")
        assert p.values.shape == (3, 2)
        assert not np.isnan(p.values).any()

    def test_gap_is_calendar_error(self, tmp_path):
        with pytest.raises(CalendarError):
            load_panel(write(tmp_path, "date,a\n2020-01,1\n2020-03,2\n"))

    def test_bad_cell_reports_row_and_column(self, tmp_path):
        path = write(tmp_path, "date,a,b\n2020-01,1,abc\n2020-02,3,4\n")
        with pytest.raises(ParseError) as info:
            load_panel(path)
        assert info.value.row == 2
        assert info.value.column == "b"
        assert str(path) in str(info.value)

    def test_blank_is_missing(self, tmp_path):
        p = load_panel(write(tmp_path, "date,a\n2020-01,\n2020-02,0.5\n"))
        assert np.isnan(p.values[0, 0]) and p.values[1, 0] == 0.5

    def test_unsorted_rows_are_sorted(self, tmp_path):
        p = load_panel(write(tmp_path, "date,a\n2020-02,2\n2020-01,1\n"))
        assert p.dates == ("2020-01", "2020-02")
        assert list(p.values[:, 0]) == [1.0, 2.0]

    def test_duplicate_date(self, tmp_path):
        with pytest.raises(CalendarError):
            load_panel(write(tmp_path, "date,a\n2020-01,1\n2020-01,2\n"))

    def test_duplicate_column(self, tmp_path):
        with pytest.raises(SchemaError):
            load_panel(write(tmp_path, "date,a,a\n2020-01,1,2\n"))

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ParseError, match="nope.csv"):
            load_panel(tmp_path / "nope.csv")

    def test_nonpositive_marketcap_reports_line(self, tmp_path):
        with pytest.raises(SchemaError) as info:
            load_panel(write(tmp_path, "date,a\n2020-01,5\n2020-02,0\n"), "marketcap")
        assert info.value.row == 3

    def test_malformed_date(self, tmp_path):
        with pytest.raises(ParseError) as info:
            load_panel(write(tmp_path, "date,a\n2020-1,1\n"))
        assert info.value.column == "date"

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.lists(st.one_of(st.none(), st.floats(-1e6, 1e6, allow_nan=False)),
                             min_size=3, max_size=3), min_size=1, max_size=12))
    def test_round_trip(self, tmp_path_factory, rows):
        values = np.array([[np.nan if v is None else v for v in r] for r in rows])
        panel = make_panel(values, "1999-11")
        path = tmp_path_factory.mktemp("rt") / "p.csv"
        path.write_text(panel_to_csv_text(panel))
        assert load_panel(path).equals(panel)


class TestFilters:
    train = DateRange("2020-01", "2020-10")
    test = DateRange("2020-11", "2020-12")

    def base(self):
        return np.full((12, 3), 0.01)

    def test_missing_test_month_dropped(self):
        v = self.base()
        v[11, 0] = np.nan
        out = filter_universe(make_panel(v), self.train, self.test)
        assert out.columns == ("S1", "S2")

    def test_sixty_percent_missing_train_dropped(self):
        v = self.base()
        v[:6, 1] = np.nan
        out = filter_universe(make_panel(v), self.train, self.test)
        assert out.columns == ("S0", "S2")

    def test_half_missing_is_not_below_threshold(self):
        v = self.base()
        v[:5, 1] = np.nan
        out = filter_universe(make_panel(v), self.train, self.test)
        assert "S1" not in out.columns

    def test_fully_observed_kept(self):
        out = filter_universe(make_panel(self.base()), self.train, self.test)
        assert out.columns == ("S0", "S1", "S2")

    def test_empty_universe(self):
        v = self.base()
        v[11] = np.nan
        with pytest.raises(EmptyUniverseError):
            filter_universe(make_panel(v), self.train, self.test)

    def test_overlap_rejected(self):
        from mlp_factor.errors import PanelError
        with pytest.raises(PanelError):
            filter_universe(make_panel(self.base()), self.train, DateRange("2020-10", "2020-12"))

    def test_factor_availability(self):
        v = np.ones((10, 3))
        v[:3, 0] = np.nan  # 70% observed
        v[:5, 1] = np.nan  # 50% observed
        out = filter_factors(make_panel(v, kind="factors", prefix="F"),
                             DateRange("2020-01", "2020-10"))
        assert out.columns == ("F0", "F2")

    def test_no_factor_survives(self):
        v = np.full((10, 1), np.nan)
        v[0] = 1.0
        with pytest.raises(EmptyFactorSetError):
            filter_factors(make_panel(v, kind="factors"), DateRange("2020-01", "2020-10"))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_universe_filter_idempotent(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(12, 6))
        v[rng.random(v.shape) < 0.3] = np.nan
        v[11, 0] = 0.0  # keep at least a chance of survivors
        v[:, 5] = 0.01
        once = filter_universe(make_panel(v), self.train, self.test)
        twice = filter_universe(once, self.train, self.test)
        assert twice.equals(once)

    def test_filter_ignores_months_outside_ranges(self):
        v = np.full((14, 3), 0.01)
        poisoned = v.copy()
        poisoned[0] = np.nan  # before train
        poisoned[13] = np.nan  # after test
        train, test = DateRange("2020-02", "2020-11"), DateRange("2020-12", "2021-01")
        a = filter_universe(make_panel(v), train, test)
        b = filter_universe(make_panel(poisoned), train, test)
        assert a.columns == b.columns


class TestStandardize:
    def test_simple_column(self):
        p = make_panel([[1.0], [2.0], [3.0]], kind="factors")
        out, stats = impute_and_standardize(p, p.span)
        assert out.values[:, 0].mean() == pytest.approx(0.0, abs=1e-15)
        assert out.values[:, 0].std(ddof=1) == pytest.approx(1.0, abs=1e-15)

    def test_missing_cell_takes_fit_mean(self):
        # observed 0, 1, 0.5 -> mean 0.5; the blank becomes 0.5 and then 0
        p = make_panel([[0.0], [1.0], [np.nan], [0.5]], kind="factors")
        out, stats = impute_and_standardize(p, p.span)
        assert stats.mean[0] == 0.5
        filled = np.array([0.0, 1.0, 0.5, 0.5])
        assert stats.std[0] == pytest.approx(filled.std(ddof=1), abs=1e-15)
        assert out.values[2, 0] == 0.0

    def test_constant_column(self):
        with pytest.raises(DegenerateColumnError):
            fit_column_stats(np.ones((4, 1)), ["c"])

    def test_all_missing_column(self):
        with pytest.raises(DegenerateColumnError):
            fit_column_stats(np.full((4, 1), np.nan), ["c"])

    def test_only_fit_range_informs_statistics(self):
        v = np.arange(12.0)[:, None] * np.array([[1.0, -2.0]])
        poisoned = v.copy()
        poisoned[8:] = 1e9
        fit = DateRange("2020-01", "2020-08")
        _, a = impute_and_standardize(make_panel(v, kind="factors"), fit)
        _, b = impute_and_standardize(make_panel(poisoned, kind="factors"), fit)
        assert np.array_equal(a.mean, b.mean) and np.array_equal(a.std, b.std)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(3, 40), st.integers(1, 5))
    def test_fit_range_is_standardized(self, seed, T, P):
        rng = np.random.default_rng(seed)
        v = rng.normal(3.0, 2.0, size=(T, P))
        v[rng.random(v.shape) < 0.2] = np.nan
        v[:2] = rng.normal(size=(2, P))  # every column has observations that differ
        p = make_panel(v, kind="factors")
        out, _ = impute_and_standardize(p, p.span)
        assert np.all(np.abs(out.values.mean(axis=0)) < 1e-12)
        assert np.all(np.abs(out.values.std(axis=0, ddof=1) - 1.0) < 1e-12)


def test_panel_is_read_only():
    p = make_panel([[1.0]])
    with pytest.raises(ValueError):
        p.values[0, 0] = 2.0


def test_spec_thresholds_validated():
    with pytest.raises(ValueError):
        UniverseFilterSpec(max_train_missing_frac=1.5)
