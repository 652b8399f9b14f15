import json

import numpy as np
import pytest

import optosync.sweep as sweep_mod
from optosync.config import ConfigError, preset
from optosync.dynamics import DivergenceError, SimPlan
from optosync.sweep import (
    Axis,
    CheckpointMismatch,
    SweepResult,
    SweepSpec,
    completed_points,
    load_result,
    phase_diagram,
    run_sweep,
    sweep_spec_from_mapping,
    sweep_spec_to_mapping,
)

SHORT = SimPlan(t_total=500, dt=0.01, sample_stride=5)


def small_spec(**kw):
    args = dict(
        base=preset("fig2b"),
        axes=(Axis("J", 0.0, 0.11, 2), Axis("theta", 0.4, 0.5, 2, True)),
        plan=SHORT,
        outputs=("classification", "peaks", "spectrogram"),
    )
    args.update(kw)
    return SweepSpec(**args)


@pytest.fixture(scope="module")
def reference():
    return run_sweep(small_spec())


def test_grid_is_row_major(reference):
    spec = reference.spec
    assert len(reference) == 4
    assert [r["grid"] for r in reference.records] == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert reference.records[1]["coords"] == {"J": 0.0, "theta_pi": 0.5}
    assert spec.setup_at(3).env.J == pytest.approx(0.11)
    assert spec.setup_at(3).env.theta == pytest.approx(0.5 * np.pi)
    assert reference.states().shape == (2, 2)


def test_spectrogram_columns(reference):
    f, p = reference.spectrogram()
    assert f.size <= 4096 and f[-1] <= 2.5
    assert p.shape == (2, 2, f.size, 3)


def test_worker_count_invariance(reference):
    other = run_sweep(small_spec(), workers=2)
    assert other.records == reference.records


def test_resume_is_bit_identical(tmp_path, reference):
    out = tmp_path / "sw"
    with pytest.raises(RuntimeError):
        run_sweep(small_spec(), out_dir=out, max_points=3)
    assert completed_points(out) == 3
    seen = []
    res = run_sweep(small_spec(), out_dir=out, progress=lambda d, t: seen.append(d))
    assert seen == [4]  # only the missing point was computed
    assert res.records == reference.records
    assert load_result(out).records == reference.records
    lines = (out / "checkpoint.log").read_text().split()
    assert lines[0] == "spec" and sorted(map(int, lines[2:])) == [0, 1, 2, 3]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["spec_hash"] == small_spec().spec_hash()
    assert (out / "points.csv").read_text().count("\n") == 5


def test_checkpoint_refuses_other_spec(tmp_path):
    out = tmp_path / "sw"
    with pytest.raises(RuntimeError):
        run_sweep(small_spec(), out_dir=out, max_points=1)
    with pytest.raises(CheckpointMismatch):
        run_sweep(small_spec(seed=3), out_dir=out)


def test_mapping_round_trip():
    spec = small_spec(seed=5)
    back = sweep_spec_from_mapping(sweep_spec_to_mapping(spec))
    assert back.spec_hash() == spec.spec_hash()
    assert back.axes == spec.axes and back.seed == 5


def test_spec_validation():
    with pytest.raises(ConfigError):
        Axis("J", 0, 1, 1)
    with pytest.raises(ConfigError):
        Axis("gain", 0, 1, 3)
    with pytest.raises(ConfigError):
        Axis("J", 0, 1, 3, pi_units=True)
    with pytest.raises(ConfigError):
        small_spec(axes=(Axis("J", 0, 1, 2), Axis("J", 0, 1, 2)))
    with pytest.raises(ConfigError):
        small_spec(outputs=("movie",))
    with pytest.raises(ConfigError) as exc:
        small_spec(plan=SimPlan(t_total=50, dt=0.01, sample_stride=5))
    assert exc.value.key == "t_total"
    assert Axis.parse("theta_pi, -1, 1, 21") == Axis("theta", -1.0, 1.0, 21, True)


def test_diverged_point_is_recorded(monkeypatch):
    real = sweep_mod.integrate

    def flaky(plan, config, K, **kw):
        if abs(K.entry(1, 2)) > 0.1:
            raise DivergenceError("blew up", 12.0)
        return real(plan, config, K, **kw)

    monkeypatch.setattr(sweep_mod, "integrate", flaky)
    res = run_sweep(small_spec(outputs=("classification",)))
    pd = phase_diagram(res)
    assert res.states()[1, 1] == "Diverged"
    assert pd.labels[1, 1] == "diverged"
    assert pd.labels[0, 0] == ("sync" if res.states()[0, 0] == "Synchronized" else "unsync")


def test_phase_diagram_labels_and_errors(tmp_path):
    spec = small_spec()
    recs = tuple({"index": i, "state": "Synchronized"} for i in range(4))
    pd = phase_diagram(SweepResult(spec, recs))
    assert pd.counts()["sync"] == 4
    pd.write_csv(tmp_path / "pd.csv")
    assert (tmp_path / "pd.csv").read_text().count("sync") == 4
    one = SweepSpec(preset("fig2b"), (Axis("J", 0, 1, 2),), SHORT)
    with pytest.raises(ValueError):
        phase_diagram(SweepResult(one, ({"index": 0, "state": "Synchronized"}, {"index": 1, "state": "Synchronized"})))
    with pytest.raises(ValueError):
        SweepResult(spec, recs[:3])


def test_coupling_scan_from_independent_to_synchronized():
    spec = SweepSpec(
        preset("fig3a"),
        (Axis("J", 0.0, 0.11, 12),),
        SimPlan(),
        outputs=("classification", "peaks"),
    )
    states = list(run_sweep(spec).states())
    assert states[0] == "Independent"
    assert states[-1] == "Synchronized"
    assert "Unsynchronized" in states[1:-1]
