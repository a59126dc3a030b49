import json

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from lmpower.core import Observations, SegmentKey
from lmpower.ingestion import (DatasetManifest, Filters, IngestionError, load_dataset,
                               load_grouped_csv, load_manifest, segmentize)

COLS = {"wage": "w", "tenure": "ten", "censored": "cens", "weight": "wt", "sector": "sec",
        "education": "edu", "age": "age", "hours": "hrs"}


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def manifest(path, **kw):
    return DatasetManifest(source_path=path, column_map=kw.pop("column_map", COLS), **kw)


def test_hours_filter_example(tmp_path):
    path = write(tmp_path, "w,ten,cens,wt,sec,edu,age,hrs\n"
                           "1000,2.5,0,1,agri,prim,30,40\n"
                           "1200,1.0,1,1,agri,prim,30,20\n"
                           "900,4.0,0,1,agri,prim,30,35\n")
    obs, rep = load_dataset(manifest(path), return_report=True)
    assert len(obs) == 2
    assert rep.dropped == {"hours_filter": 1}
    assert rep.rows_in == 3 and rep.rows_out == 2
    assert obs.keys[0] == SegmentKey("agri", "prim", "21-30", year=0)


def test_each_drop_reason_is_counted(tmp_path):
    path = write(tmp_path, "w,ten,cens,wt,sec,edu,age,hrs,inf\n"
                           "-5,1,0,1,a,p,30,40,0\n"       # invalid_wage
                           "100,x,0,1,a,p,30,40,0\n"      # invalid_tenure
                           "100,1,0,0,a,p,30,40,0\n"      # invalid_weight
                           "100,1,maybe,1,a,p,30,40,0\n"  # invalid_censor_flag
                           "100,1,0,1,a,p,70,40,0\n"      # age_filter
                           "100,1,0,1,a,p,30,10,0\n"      # hours_filter
                           "100,1,0,1,a,p,30,40,1\n"      # exclusion_filter
                           "100,1,0,1,,p,30,40,0\n"       # missing_segment
                           "100,1,0,1,zz,p,30,40,0\n"     # unknown_category
                           "100,1,0,1,a,p,30,40,0\n")
    m = manifest(path, schema={"sector": ["a", "b"]},
                 filters=Filters(exclude=({"column": "inf", "values": [1]},)))
    obs, rep = load_dataset(m, return_report=True)
    assert len(obs) == 1
    assert rep.dropped == {r: 1 for r in ("invalid_wage", "invalid_tenure", "invalid_weight",
                                          "invalid_censor_flag", "age_filter", "hours_filter",
                                          "exclusion_filter", "missing_segment",
                                          "unknown_category")}
    assert json.loads(rep.to_json())["rows_in"] == 10


def test_status_filter(tmp_path):
    path = write(tmp_path, "w,ten,st\n100,1,employee\n100,1,self-employed\n")
    m = manifest(path, column_map={"wage": "w", "tenure": "ten", "status": "st"},
                 filters=Filters(status_keep=["employee"]))
    obs, rep = load_dataset(m, return_report=True)
    assert len(obs) == 1 and rep.dropped == {"status_filter": 1}


def test_missing_censor_column_marks_all_censored(tmp_path):
    path = write(tmp_path, "w,ten\n100,1\n200,30\n")
    obs = load_dataset(manifest(path, column_map={"wage": "w", "tenure": "ten"}))
    assert obs.censored.all()


def test_censor_level_remarks_short_spells(tmp_path):
    path = write(tmp_path, "w,ten\n100,1\n200,30\n")
    obs = load_dataset(manifest(path, column_map={"wage": "w", "tenure": "ten"},
                                censor_level=20))
    np.testing.assert_array_equal(obs.censored, [False, True])


def test_missing_mapped_column_is_an_error(tmp_path):
    path = write(tmp_path, "w,ten\n100,1\n")
    with pytest.raises(IngestionError, match="cens"):
        load_dataset(manifest(path, column_map={"wage": "w", "tenure": "ten",
                                                "censored": "cens"}))


def test_unreadable_and_empty(tmp_path):
    with pytest.raises(IngestionError):
        load_dataset(manifest(str(tmp_path / "nope.csv")))
    path = write(tmp_path, "w,ten\n-1,1\n")
    with pytest.raises(IngestionError, match="no rows"):
        load_dataset(manifest(path, column_map={"wage": "w", "tenure": "ten"}))


def test_malformed_manifests():
    with pytest.raises(IngestionError):
        DatasetManifest("x.csv", {"wage": "w"})
    with pytest.raises(IngestionError):
        DatasetManifest("x.csv", {"wage": "w", "tenure": "t", "shoe_size": "s"})
    with pytest.raises(IngestionError):
        Filters(age_min=50, age_max=20)
    with pytest.raises(IngestionError):
        Filters(exclude=({"column": "x"},))


def test_manifest_file_resolves_relative_source(tmp_path):
    write(tmp_path, "wage,tenure,year\n100,1,2014\n120,2,2016\n")
    (tmp_path / "m.yaml").write_text(yaml.safe_dump(
        {"source_path": "data.csv", "columns": {"wage": "wage", "tenure": "tenure",
                                                 "year": "year"},
         "filters": {"age_min": 15}}))
    obs = load_dataset(str(tmp_path / "m.yaml"))
    assert [k.year for k in obs.keys] == [2014, 2016]
    (tmp_path / "m.json").write_text(json.dumps(load_manifest(tmp_path / "m.yaml").to_dict()))
    assert load_dataset(str(tmp_path / "m.json")) == obs


def test_grouped_csv(tmp_path):
    path = write(tmp_path, "lower_bound,frequency\n5,199\n0,856\n2,876\n15,56\n", "g.csv")
    g = load_grouped_csv(path)
    assert g.boundaries == (0, 2, 5, 15) and g.frequencies == (856, 876, 199, 56)
    with pytest.raises(IngestionError):
        load_grouped_csv(write(tmp_path, "lb,freq\n0,1\n", "bad.csv"))


class TestSegmentize:
    def test_threshold_example(self):
        key = SegmentKey("a", "b", "c", year=2018)
        obs = Observations(np.full(29, 100.0), np.ones(29), keys=key)
        segs, skipped = segmentize(obs, min_size=30)
        assert segs == {}
        assert skipped == [{"segment": key.as_dict(), "n": 29}]

    def test_sorted_and_partitioned(self):
        rng = np.random.default_rng(0)
        keys = [SegmentKey(s, "e", "a", year=y) for s, y in
                zip(rng.choice(["x", "y", "z"], 300), rng.choice([2010, 2012], 300))]
        obs = Observations(rng.uniform(1, 2, 300), rng.uniform(0, 1, 300), keys=keys)
        segs, skipped = segmentize(obs, min_size=1)
        assert list(segs) == sorted(segs)
        assert sum(len(v) for v in segs.values()) == 300 and not skipped
        for key, sub in segs.items():
            assert set(sub.keys) == {key}


row = st.tuples(st.sampled_from(["100", "-1", "", "abc", "2500.5"]),
                st.sampled_from(["1", "-2", "", "0"]),
                st.sampled_from(["0", "1", "x"]),
                st.sampled_from(["10", "40", ""]),
                st.sampled_from(["16", "40", "90"]))


@given(st.lists(row, min_size=1, max_size=40))
@settings(max_examples=60, deadline=None)
def test_row_conservation(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("cons")
    text = "w,ten,cens,hrs,age\n" + "".join(",".join(r) + "\n" for r in rows)
    path = write(d, text)
    m = manifest(path, column_map={"wage": "w", "tenure": "ten", "censored": "cens",
                                   "hours": "hrs", "age": "age"})
    try:
        obs, rep = load_dataset(m, return_report=True)
    except IngestionError:
        return
    assert rep.rows_in == len(rows) == rep.rows_out + sum(rep.dropped.values())
    assert len(obs) == rep.rows_out
