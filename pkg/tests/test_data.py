import json

import numpy as np
import pytest

from stl_shiftconf.data import (
    LabeledDataset,
    LabeledSample,
    Role,
    Trajectory,
    concat,
    load_csv,
    load_dataset,
    load_jsonl,
    save_csv,
    save_jsonl,
)
from stl_shiftconf.errors import DataError, LabelError, ScenarioError, SchemaError, ShapeError
from stl_shiftconf.scenarios import (
    GROUND_TRUTH,
    ShiftScenario,
    density_ratio,
    generate_scenario,
    log_density_ratio,
    sample_role,
)
from stl_shiftconf.stl import classify_batch
from stl_shiftconf.weights import embed_batch


def _ds(n=3, T=4, d=2, role="train", seed=0):
    rng = np.random.default_rng(seed)
    return LabeledDataset([f"t{i}" for i in range(n)], rng.normal(size=(n, T + 1, d)),
                          rng.choice([-1, 1], size=n), role)


def _write(path, rows, header="traj_id,t,x0,x1,label"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")


# ---------------------------------------------------------------- data model

def test_trajectory_validation_and_immutability():
    tr = Trajectory([[1.0, 2.0], [3.0, 4.0]], "a")
    assert (tr.T, tr.d) == (1, 2)
    with pytest.raises(ValueError):
        tr.states[0, 0] = 5.0
    with pytest.raises(DataError):
        Trajectory([[np.nan]], "b")
    with pytest.raises(ShapeError):
        Trajectory(np.zeros((0, 2)), "c")


def test_dataset_invariants():
    with pytest.raises(DataError):
        LabeledDataset([], np.zeros((0, 2, 1)), [])
    with pytest.raises(LabelError):
        LabeledDataset(["a"], np.zeros((1, 2, 1)), [0])
    with pytest.raises(DataError):
        LabeledDataset(["a", "a"], np.zeros((2, 2, 1)), [1, -1])
    with pytest.raises(ShapeError):
        LabeledDataset(["a"], np.zeros((2, 2, 1)), [1])


def test_from_samples_requires_common_shape():
    s1 = LabeledSample(Trajectory(np.zeros((3, 1)), "a"), 1)
    s2 = LabeledSample(Trajectory(np.zeros((4, 1)), "b"), -1)
    with pytest.raises(ShapeError):
        LabeledDataset.from_samples([s1, s2])
    ds = LabeledDataset.from_samples([s1], role=Role.CAL)
    assert ds.role is Role.CAL and ds.samples[0] == s1


def test_subset_and_concat():
    ds = _ds(5)
    sub = ds.subset([0, 2])
    assert sub.ids == ("t0", "t2")
    both = concat([ds.subset([0]), ds.subset([1])], "dep")
    assert both.ids == ("t0", "t1") and both.role is Role.DEP


# ------------------------------------------------------------------- csv io

def test_csv_round_trip_exact(tmp_path):
    ds = _ds(4, T=6, d=3, role="cal")
    path = tmp_path / "d.csv"
    save_csv(ds, path)
    header = path.read_text().splitlines()[0]
    assert header == "traj_id,t,x0,x1,x2,label"
    assert load_csv(path, role="cal") == ds


def test_csv_ragged_is_shape_error(tmp_path):
    rows = [f"a,{t},0,0,1" for t in range(3)] + [f"b,{t},0,0,1" for t in range(4)]
    p = tmp_path / "r.csv"
    _write(p, rows)
    with pytest.raises(ShapeError):
        load_csv(p)


def test_csv_noncontiguous_time_is_shape_error(tmp_path):
    p = tmp_path / "g.csv"
    _write(p, ["a,0,0,0,1", "a,2,0,0,1"])
    with pytest.raises(ShapeError):
        load_csv(p)


def test_csv_bad_label_is_value_error(tmp_path):
    p = tmp_path / "l.csv"
    _write(p, ["a,0,0,0,0", "a,1,0,0,0"])
    with pytest.raises(ValueError):
        load_csv(p)


def test_csv_missing_column_is_schema_error(tmp_path):
    p = tmp_path / "m.csv"
    _write(p, ["a,0,0,0"], header="traj_id,t,x0,x1")
    with pytest.raises(SchemaError):
        load_csv(p)


def test_csv_schema_remap_and_row_order(tmp_path):
    p = tmp_path / "s.csv"
    _write(p, ["b,1,5,-1", "a,0,1,1", "b,0,4,-1", "a,1,2,1"], header="id,time,pos,y")
    ds = load_csv(p, schema={"traj_id": "id", "t": "time", "label": "y", "x": ["pos"]})
    assert ds.ids == ("b", "a")
    assert ds.states[0, :, 0].tolist() == [4.0, 5.0]
    assert ds.labels.tolist() == [-1, 1]


def test_save_empty_dataset_rejected(tmp_path):
    class Empty:
        ids, states, labels = (), np.zeros((0, 1, 1)), np.zeros(0)

        def __len__(self):
            return 0
    with pytest.raises(DataError):
        save_csv(Empty(), tmp_path / "e.csv")


def test_jsonl_round_trip(tmp_path):
    ds = _ds(3)
    p = tmp_path / "d.jsonl"
    save_jsonl(ds, p)
    first = json.loads(p.read_text().splitlines()[0])
    assert set(first) == {"id", "states", "label"}
    assert load_jsonl(p) == ds
    assert load_dataset(p) == ds


# ---------------------------------------------------------------- scenarios

def test_builtin_scenario_balance_seed7():
    for ds in generate_scenario(ShiftScenario.builtin("naval", seed=7)):
        assert 0.2 <= ds.positive_fraction() <= 0.8


def test_scenario_sizes_roles_and_disjoint_ids():
    splits = generate_scenario(ShiftScenario.builtin("naval", seed=7))
    assert [len(s) for s in splits] == [200, 100, 200, 500]
    assert [s.role.value for s in splits] == ["train", "dep", "cal", "test"]
    ids = [i for s in splits for i in s.ids]
    assert len(ids) == len(set(ids))
    assert all(s.T == 60 and s.d == 2 for s in splits)


def test_scenario_deterministic(tmp_path):
    a = generate_scenario(ShiftScenario.builtin("naval", seed=3))
    b = generate_scenario(ShiftScenario.builtin("naval", seed=3))
    for x, y, name in zip(a, b, "abcd"):
        save_csv(x, tmp_path / f"{name}1.csv")
        save_csv(y, tmp_path / f"{name}2.csv")
        assert (tmp_path / f"{name}1.csv").read_bytes() == (tmp_path / f"{name}2.csv").read_bytes()


def test_labels_follow_ground_truth():
    for ds in generate_scenario(ShiftScenario.builtin("naval", seed=1)):
        assert np.array_equal(classify_batch(GROUND_TRUTH, ds.states), ds.labels)


def test_shift_realism_in_embedding():
    tr, dep, cal, _ = generate_scenario(ShiftScenario.builtin("naval", seed=7))
    mean = lambda ds: embed_batch(ds.states).mean(axis=0)
    assert np.linalg.norm(mean(tr) - mean(dep)) > np.linalg.norm(mean(tr) - mean(cal))


def test_degenerate_scenario_raises():
    sc = ShiftScenario.from_dict({"name": "gaussian",
                                  "source": {"goal_x_modes": [80.0, 80.0], "goal_x_sd": 0.0}})
    with pytest.raises(ScenarioError, match="all negative"):
        generate_scenario(sc)


def test_short_horizon_rejected():
    with pytest.raises(ScenarioError):
        generate_scenario(ShiftScenario.builtin("naval", T=30))


def test_scenario_dict_round_trip():
    sc = ShiftScenario.builtin("gaussian", seed=11)
    assert ShiftScenario.from_dict(sc.to_dict()) == sc


def test_exact_density_ratio_matches_monte_carlo():
    sc = ShiftScenario.builtin("gaussian")
    rng = np.random.default_rng(0)
    src = sample_role(sc, "train", 20000, rng)
    # E_src[w] = 1 and E_src[w f] = E_dep[f] for the true ratio.
    w = density_ratio(sc, src.states)
    assert np.mean(w) == pytest.approx(1.0, abs=0.05)
    dep = sample_role(sc, "dep", 20000, rng)
    f_src = np.mean(w * (src.labels == 1))
    assert f_src == pytest.approx(np.mean(dep.labels == 1), abs=0.03)


def test_density_ratio_requires_noise_free():
    sc = ShiftScenario.builtin("naval")
    with pytest.raises(ScenarioError):
        log_density_ratio(sc, np.zeros((1, 61, 2)))
