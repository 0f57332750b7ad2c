import math

import numpy as np
import pytest

from hmreg.errors import EmptyInput, MalformedRow
from hmreg.wind import (BlockSplit, ParseStats, WindRecord, evaluate_wind, fixture_path, geodesic_errors,
                        normalized_times, parse_isd, wind_dataset)

HEADER = '"STATION","DATE","WND"\n'


def row(date, wnd):
    return f'"1","{date}","{wnd}"\n'


def test_degrees_to_radians_on_circle():
    text = HEADER + row("2023-06-01T00:00:00", "350,1,N,0040,1") + row("2023-06-01T01:00:00", "010,1,N,0040,1")
    recs = parse_isd(text)
    data = wind_dataset(recs)
    assert data.points[0, 0] == pytest.approx(350 * math.pi / 180)
    assert data.manifold.dist(data.points[0], data.points[1]) == pytest.approx(math.radians(20))


def test_calm_missing_and_malformed_are_dropped():
    text = (HEADER
            + row("2023-06-01T00:00:00", "999,9,C,0000,1")
            + row("2023-06-01T01:00:00", "999,1,9,0040,9")
            + row("2023-06-01T02:00:00", "xyz,1,N,0040,1")
            + row("not a date", "100,1,N,0040,1")
            + row("2023-06-01T03:00:00", "calm")
            + row("2023-06-01T04:00:00", "120,1,N,0040,1"))
    stats = ParseStats()
    recs = parse_isd(text, stats=stats)
    assert [r.direction_deg for r in recs] == [120.0]
    assert (stats.calm, stats.missing, stats.malformed) == (2, 1, 2)


def test_first_record_per_hour_kept():
    text = HEADER + row("2023-06-01T00:51:00", "100,1,N,1,1") + row("2023-06-01T00:10:00", "200,1,N,1,1")
    recs = parse_isd(text)
    assert len(recs) == 1 and recs[0].direction_deg == 200.0


def test_360_is_north_and_plain_numeric_column():
    text = "time,dir\n0,360\n3600,90\n"
    recs = parse_isd(text, time_column="time", direction_column="dir")
    assert [r.direction_deg for r in recs] == [0.0, 90.0]


def test_month_filter_and_empty():
    text = HEADER + row("2023-05-31T23:00:00", "100,1,N,1,1") + row("2023-06-01T00:00:00", "110,1,N,1,1")
    assert len(parse_isd(text, month=6)) == 1
    with pytest.raises(EmptyInput):
        parse_isd(text, month=7)
    with pytest.raises(MalformedRow):
        parse_isd(text, direction_column="DIR")


def test_times_normalized_to_unit_interval():
    recs = [WindRecord(100.0, 1.0), WindRecord(200.0, 2.0), WindRecord(400.0, 3.0)]
    np.testing.assert_allclose(normalized_times(recs), [0, 1 / 3, 1])


def test_geodesic_error_is_intrinsic():
    err = geodesic_errors(np.radians([350.0]), np.radians([10.0]))
    assert err[0] == pytest.approx(20 * math.pi / 180)


class TestBlockSplit:
    def test_structure(self):
        t = np.linspace(0, 1, 1000)
        s = BlockSplit.from_times(t)
        assert s.test_fraction == pytest.approx(0.2, abs=0.01)
        assert set(np.unique(s.blocks[s.test])) == {4, 9, 14, 19}
        # training blocks dealt round robin: each fold holds four non-adjacent blocks
        for f in range(4):
            blocks = np.unique(s.blocks[~s.test & (s.fold == f)])
            assert len(blocks) == 4 and np.all(np.diff(blocks) > 1)
        assert np.all(s.fold[s.test] == -1)

    def test_deterministic(self):
        t = np.random.Generator(np.random.Philox(0)).uniform(0, 1, 100)
        a, b = BlockSplit.from_times(t), BlockSplit.from_times(t)
        assert np.array_equal(a.blocks, b.blocks) and np.array_equal(a.fold, b.fold)


def test_perfect_predictor_has_zero_error():
    y = np.radians([10.0, 350.0])
    assert np.all(geodesic_errors(y, y) == 0)


def test_fixture_all_methods_finite():
    stats = ParseStats()
    recs = parse_isd(str(fixture_path()), stats=stats)
    assert stats.rows == 50 and stats.malformed == 1 and stats.calm == 1 and stats.duplicates == 1
    rows = evaluate_wind(recs)
    assert [r["method"] for r in rows] == ["proposed", "extrinsic", "tv", "frechet", "geodesic"]
    for r in rows:
        assert np.isfinite(r["msge"]) and r["rmge_deg"] == pytest.approx(math.degrees(math.sqrt(r["msge"])))
    by = {r["method"]: r["msge"] for r in rows}
    assert by["proposed"] <= by["extrinsic"]


def test_subset_of_methods():
    recs = parse_isd(str(fixture_path()))
    rows = evaluate_wind(recs, ("frechet",))
    assert [r["method"] for r in rows] == ["frechet"]
