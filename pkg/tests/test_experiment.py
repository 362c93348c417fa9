import math
from pathlib import Path

import numpy as np
import pytest

from groupmv import analysis
from groupmv.analysis import AnalysisError, mitigate_readout
from groupmv.experiment import (CSV_COLUMNS, ConfigError, ExperimentConfig, ResultRow, SweepPoint, TopologySpec,
                                csv_text, derive_seed, emit_csv, emit_plot, load_config, loads_config, plot_svg,
                                read_csv, run_partition_demo, run_point, run_sweep, seed_int, sweep_points,
                                write_outputs)
from groupmv.sim import NoiseModel
from groupmv.synth import Method
from groupmv.topology import Kind

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
[experiment]
topologies = grid
n_values = 6
methods = unitary, group_mv
l_values = 1
k = 3
shots = 200
repetitions = 2
master_seed = 5

[noise]
enabled = false
"""


def test_noisy_config_parses():
    cfg = load_config(CONFIGS / "noisy.ini")
    assert [t.kind for t in cfg.topologies] == [Kind.HEAVY_HEX, Kind.GRID]
    assert cfg.n_values == [30, 40, 50, 60] and cfg.l_values == [1, 3]
    assert cfg.noise == NoiseModel(1e-4, 1e-4, 0.05)
    assert cfg.output_dir == CONFIGS.parent / "results" / "noisy"
    assert cfg.defaults_applied == []


@pytest.mark.parametrize("name", ["noiseless.ini", "ring.ini"])
def test_shipped_configs_parse(name):
    load_config(CONFIGS / name)


def test_l2_rejected():
    with pytest.raises(ConfigError, match="L=2 disallowed"):
        loads_config(MINIMAL.replace("l_values = 1", "l_values = 1, 2"))


def test_even_l_rejected():
    with pytest.raises(ConfigError, match="L=4"):
        loads_config(MINIMAL.replace("l_values = 1", "l_values = 4"))


def test_default_shots_recorded():
    cfg = loads_config(MINIMAL.replace("shots = 200\n", ""))
    assert cfg.shots == 10_000 and cfg.defaults_applied == ["shots=10000"]


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match=r"unknown key experiment.qubits \(line 4\)"):
        loads_config("\n[experiment]\ntopologies = grid\nqubits = 4\nn_values = 4\n")


def test_unknown_section_and_bad_values():
    with pytest.raises(ConfigError, match="unknown section"):
        loads_config(MINIMAL + "\n[plots]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown kind"):
        loads_config(MINIMAL.replace("topologies = grid", "topologies = torus"))
    with pytest.raises(ConfigError, match="missing required"):
        loads_config("[experiment]\ntopologies = grid\n")
    with pytest.raises(ConfigError, match="boolean"):
        loads_config(MINIMAL.replace("enabled = false", "enabled = maybe"))


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")


def test_topology_spec():
    assert TopologySpec.parse("grid:5x8").dims == (5, 8)
    assert TopologySpec.parse("heavy-hex").kind is Kind.HEAVY_HEX
    assert TopologySpec.parse("ring:auto").dims is None
    assert str(TopologySpec.parse("ring:40")) == "ring:40"
    assert TopologySpec.parse("grid").graph(30).node_count >= 30


def test_sweep_points_expand_l_only_for_group_mv():
    cfg = loads_config(MINIMAL.replace("l_values = 1", "l_values = 1, 3"))
    pts = sweep_points(cfg)
    assert [(p.method, p.l) for p in pts] == [(Method.UNITARY, 1), (Method.GROUP_MV, 1), (Method.GROUP_MV, 3)]


def test_seeds_stable_and_distinct():
    a = seed_int(derive_seed(1, "sim", "grid", 30, 0))
    assert a == seed_int(derive_seed(1, "sim", "grid", 30, 0))
    assert a != seed_int(derive_seed(1, "sim", "grid", 30, 1))


def test_small_sweep_noiseless():
    cfg = loads_config(MINIMAL)
    rows = run_sweep(cfg)
    assert len(rows) == 2
    for r in rows:
        assert r.error == "" and r.w_mean == pytest.approx(1.0)
        assert r.w_std == 0.0 and r.lattice


def test_failed_point_is_isolated():
    cfg = loads_config(MINIMAL.replace("topologies = grid", "topologies = ring:5"))
    rows = run_sweep(cfg)
    assert all(r.error for r in rows)
    assert all(math.isnan(r.w_mean) for r in rows)


def test_csv_header_only_and_rows(tmp_path):
    assert csv_text([]).strip().split(",") == CSV_COLUMNS
    cfg = loads_config(MINIMAL)
    rows = run_sweep(cfg)
    text = csv_text(rows[:1])
    assert len(text.splitlines()) == 2
    p = emit_csv(rows, tmp_path / "out" / "r.csv")
    back = read_csv(p)
    assert back[0]["method"] == "unitary" and back[1]["degraded"] in ("0", "1")


def test_csv_byte_identical_reruns(tmp_path):
    cfg = loads_config(MINIMAL.replace("enabled = false", "p_2q = 0.01\np_ro = 0.02"))
    a = csv_text(run_sweep(cfg))
    b = csv_text(run_sweep(cfg))
    assert a == b


def test_common_random_numbers_across_methods():
    # identical circuits from two methods see identical shot records
    cfg = loads_config(MINIMAL.replace("enabled = false", "p_ro = 0.05").replace("k = 3", "k = 6"))
    rows = run_sweep(cfg)
    assert rows[0].w_mean == rows[1].w_mean


def test_svg_structure(tmp_path):
    rows = [ResultRow("grid", n, m, l, 1, w, 0.01, None, None, 4, 8, n - 1, 0, False, 0)
            for n, w in ((30, 0.4), (60, 0.2)) for m, l in (("unitary", 1), ("group_mv", 3))]
    svg = plot_svg(rows, "t")
    assert svg.startswith("<svg") and svg.count('class="series"') == 2
    assert svg.count('class="point"') == 4 and svg.count('class="errorbar"') == 4
    paths = emit_plot(rows + [ResultRow("ring", 40, "group_mv", 3, 1, 0.9, 0, None, None, 1, 1, 1, 1, True, 0)],
                      tmp_path)
    assert [p.name for p in paths] == ["witness_grid.svg", "witness_ring.svg"]


def test_plot_empty_rejected():
    with pytest.raises(ValueError):
        plot_svg([])


def test_write_outputs_dumps(tmp_path):
    cfg = loads_config(MINIMAL + "\n[output]\nsvg = true\ndump_circuits = true\ndump_plans = true\n")
    cfg.output_dir = tmp_path
    kept = {}
    rows = run_sweep(cfg, kept)
    names = sorted(p.relative_to(tmp_path).as_posix() for p in write_outputs(cfg, rows, kept))
    assert "results.csv" in names and "witness_grid.svg" in names
    assert "circuits/grid_n6_group_mv_L1.txt" in names and "plans/grid_n6_unitary_L1.json" in names


def test_fidelity_column():
    cfg = loads_config(MINIMAL.replace("repetitions = 2", "repetitions = 1\nfidelity_elements = 10\n"
                                       "fidelity_shots = 8") + "\n[output]\nrun_fidelity = true\n")
    row = run_point(cfg, SweepPoint(TopologySpec.parse("grid"), 6, Method.GROUP_MV, 1))
    assert row.f_mean == pytest.approx(1.0)


def test_partition_demo_small():
    demo = run_partition_demo("heavy_hex", 100, 10, 3, seed=0)
    assert len(demo.plan.groups) == 10
    text = demo.report()
    assert "groups: 10" in text and "wall time" in text


def test_mitigation_density_guard(monkeypatch):
    monkeypatch.setattr(analysis, "MAX_NONZEROS", 10)
    bits = np.random.default_rng(0).integers(0, 2, size=(500, 6), dtype=np.uint8)
    with pytest.raises(AnalysisError, match="too dense"):
        mitigate_readout(bits, 0.05)
