import csv
import io
import json
import math

import numpy as np
import pytest

from sgdesign.completion import SolverOptions
from sgdesign.designs import RngSeed, coil_point_cloud
from sgdesign.errors import DomainError, InputError
from sgdesign.experiments import (
    CSV_FIELDS,
    DataModel,
    JitterGeometry,
    RelocationGeometry,
    SweepRecord,
    design_comparison,
    density_sweep,
    interval_for_missing,
    jitter_sweep,
    jitter_trend,
    records_to_csv,
    records_to_json,
    relocation_sweep,
    spearman,
    write_outputs,
)

from oracles import spearman_exact

FAST = SolverOptions(stage_tol=1e-3, tol=1e-6, max_iter=400)


def test_spearman_examples():
    xs = [0.3, 1.2, -4.0, 7.5]
    assert spearman(xs, xs) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


def test_spearman_matches_exact_midranks():
    rng = np.random.default_rng(0)
    for _ in range(30):
        xs = rng.integers(0, 5, 9).tolist()
        ys = rng.integers(0, 5, 9).tolist()
        if len(set(xs)) == 1 or len(set(ys)) == 1:
            continue
        assert spearman(xs, ys) == pytest.approx(spearman_exact(xs, ys), abs=1e-12)


def test_spearman_errors():
    with pytest.raises(InputError):
        spearman([1, 2, 3], [1, 2])
    with pytest.raises(InputError):
        spearman([1, 2], [1, 2])
    with pytest.raises(DomainError, match="undefined correlation"):
        spearman([1, 1, 1], [1, 2, 3])


def test_relocation_sweep_small():
    geo = RelocationGeometry(2, 12, 3)
    res = relocation_sweep(geo, DataModel(rank=2), [0.0, 0.5, 1.0], trials=3, solver=FAST)
    assert [r.param_name for r in res.records] == ["p"] * 3
    assert len(res.pooled) == 9 and all(r.param_name == "p_pooled" for r in res.pooled)
    sgs = [r.mean_sg_ratio for r in res.records]
    assert sgs == sorted(sgs, reverse=True)
    p0 = next(r for r in res.records if r.param_value == 0.0)
    assert p0.std_sg_ratio == 0.0
    assert all(r.sampling_pct == pytest.approx(p0.sampling_pct) for r in res.records)
    meta = res.metadata
    assert meta["reference_anchors"]["points"][0] == {"sg_ratio": 0.9828, "snr_db": 3.5}
    assert "spearman_sg_snr" in meta["correlation"]


def test_relocation_sg_only_and_errors():
    geo = RelocationGeometry(2, 8, 3)
    res = relocation_sweep(geo, None, [0.0, 1.0], trials=2)
    assert all(r.mean_snr_db is None for r in res.records)
    with pytest.raises(InputError):
        relocation_sweep(geo, None, [1.5])
    with pytest.raises(DomainError):
        RelocationGeometry(0, 8, 3)


def test_interval_for_missing():
    assert [interval_for_missing(f) for f in (0.8, 0.9, 0.95)] == [5, 10, 20]
    with pytest.raises(InputError):
        interval_for_missing(0.7)


def test_jitter_sweep_grid_and_determinism():
    geo = JitterGeometry(4, 10)
    a = jitter_sweep(geo, [0.2, 0.6, 1.0], [0.8, 0.9], trials=1, base_seed=3)
    b = jitter_sweep(geo, [0.2, 0.6, 1.0], [0.8, 0.9], trials=1, base_seed=3)
    assert len(a.records) == 6
    assert records_to_csv(a.records) == records_to_csv(b.records)
    assert a.records[0].param_name == "rho@missing=0.8"
    assert all(r.mean_snr_db is None for r in a.records)
    assert set(a.metadata["trend"]) == {"rho@missing=0.8", "rho@missing=0.9"}


def test_jitter_sweep_shared_array_layout():
    geo = JitterGeometry(2, 10, per_source=False)
    res = jitter_sweep(geo, [1.0], [0.8], trials=2)
    assert res.records[0].sampling_pct == pytest.approx(0.2)


def test_jitter_trend_rules():
    def rec(v, mean, std):
        return SweepRecord("g", v, 5, mean, std, None, None, 0.0, 0.2)

    ok = jitter_trend([rec(0.2, 0.9, 0.01), rec(0.6, 0.5, 0.01), rec(1.0, 0.3, 0.01)])
    assert ok["g"]["passes"]
    small = jitter_trend([rec(0.2, 0.5, 0.05), rec(0.6, 0.52, 0.05), rec(1.0, 0.3, 0.05)])
    assert small["g"]["passes"] and len(small["g"]["inversions"]) == 1
    big = jitter_trend([rec(0.2, 0.5, 0.01), rec(0.6, 0.6, 0.01), rec(1.0, 0.3, 0.01)])
    assert not big["g"]["passes"]
    not_min = jitter_trend([rec(0.2, 0.5, 0.1), rec(0.6, 0.3, 0.1), rec(1.0, 0.31, 0.1)])
    assert not not_min["g"]["passes"]


def test_design_comparison_small():
    res = design_comparison((12, 13), 3, DataModel(rank=1, noise=0.0), trials=2, solver=FAST)
    per, jit = res.records
    assert (per.param_value, jit.param_value) == ("periodic", "jittered")
    assert per.sampling_pct == pytest.approx(jit.sampling_pct, abs=0.01)
    assert per.std_sg_ratio == 0.0
    assert res.metadata["conventions"]["trim_empty"] is True
    with pytest.raises(DomainError):
        design_comparison((1, 13), 3)


def test_density_sweep_duplicates_and_ranking():
    pts = coil_point_cloud(RngSeed(0))
    res = density_sweep(pts, [(200.0, 200.0), (400.0, 400.0), (200.0, 200.0)], bounds=((0, 0), (10_000, 10_000)))
    r0, r1, r2 = res.records
    assert r0 == r2
    assert r0.param_value == "200x200"
    assert len(res.metadata["ranking"]) == 3
    assert res.metadata["reference_table"]["rows"][1]["sg_ratio"] == 0.4


def test_density_sweep_empty_mask_flagged():
    pts = np.array([[0.0, 0.0], [1.0, 1.0]])
    res = density_sweep(pts, [(1.0, 1.0)], bounds=((100.0, 100.0), (200.0, 200.0)))
    rec = res.records[0]
    assert rec.excluded_trials == 1 and math.isnan(rec.mean_sg_ratio)
    assert res.metadata["ranking"] == []


def test_density_sweep_errors():
    with pytest.raises(InputError):
        density_sweep(np.empty((0, 2)), [(1.0, 1.0)])
    with pytest.raises(InputError):
        density_sweep(np.ones((3, 2)), [])


def test_csv_and_json_layout(tmp_path):
    recs = [
        SweepRecord("p", 0.5, 2, 1 / 3, 0.0, 12.3456789, 0.5, 4.0, 0.25, 1),
        SweepRecord("p", 1.0, 2, 0.25, 0.0, None, None, 3.0, 0.25, 0),
    ]
    text = records_to_csv(recs)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_FIELDS
    assert rows[1] == ["p", "0.500000", "2", "0.333333", "0.000000", "12.345679", "0.500000", "4.000000", "0.250000", "1"]
    assert rows[2][5] == "" and rows[2][6] == ""
    data = json.loads(records_to_json(recs))
    assert tuple(data[0]) == CSV_FIELDS
    assert data[0]["mean_sg_ratio"] == 1 / 3


def test_write_outputs(tmp_path):
    res = relocation_sweep(RelocationGeometry(2, 8, 3), None, [0.0, 1.0], trials=2)
    paths = write_outputs(res, str(tmp_path / "out"))
    meta = json.loads(open(paths["meta"]).read())
    assert meta["base_seed"] == 0 and "matricization" in meta["conventions"]
    assert open(paths["csv"]).read().startswith(",".join(CSV_FIELDS))


def test_threads_do_not_change_results():
    geo = RelocationGeometry(2, 10, 3)
    a = relocation_sweep(geo, DataModel(rank=2), [0.0, 0.5, 1.0], trials=2, solver=FAST, threads=1)
    b = relocation_sweep(geo, DataModel(rank=2), [0.0, 0.5, 1.0], trials=2, solver=FAST, threads=4)
    assert records_to_csv(a.rows()) == records_to_csv(b.rows())
    assert records_to_json(a.rows()) == records_to_json(b.rows())


def test_data_model_validation():
    with pytest.raises(InputError):
        DataModel(rank=0)
    with pytest.raises(InputError):
        DataModel(noise=-1)
