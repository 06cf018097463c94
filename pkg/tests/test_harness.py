import importlib.resources as res

from abdrl.graph import build_graph
from abdrl.harness import (
    ExperimentConfig,
    MetricsRow,
    export_dot,
    final_window_means,
    metrics_csv,
    run_experiment,
    window_average,
)
from abdrl.ilp import encode
from abdrl.logic import parse_knowledge_base, parse_observation
from abdrl.solver import solve


def _data(name):
    return (res.files("abdrl") / "data" / name).read_text()


def row(mode, trial, episode, value):
    return MetricsRow(mode, trial, episode, value, 0, 0, 0, 0)


def test_window_average_constant_series():
    rows = [row("A", 0, e, 2.5) for e in range(10, 101, 10)]
    curve = window_average(rows, 50)
    assert all(v == 2.5 for _, _, v in curve)


def test_window_of_one_returns_the_raw_curve():
    rows = [row("A", 0, e, float(e)) for e in range(10, 51, 10)]
    curve = window_average(rows, 1)
    assert [(e, v) for _, e, v in curve] == [(e, float(e)) for e in range(10, 51, 10)]


def test_window_average_step_function_ramp():
    # returns jump from 0 to 1 at episode 60; trailing window of 30 episodes
    rows = [row("A", 0, e, 0.0 if e < 60 else 1.0) for e in range(10, 101, 10)]
    curve = {e: v for _, e, v in window_average(rows, 30)}
    assert curve[50] == 0.0
    assert curve[60] == 1.0 / 3.0  # {40, 50, 60}
    assert curve[70] == 2.0 / 3.0
    assert curve[80] == 1.0
    assert curve[100] == 1.0


def test_window_average_averages_across_trials_first():
    rows = [row("A", 0, 10, 1.0), row("A", 1, 10, 3.0)]
    curve = window_average(rows, 10)
    assert curve == [("A", 10, 2.0)]


def test_window_wider_than_history_uses_what_exists():
    rows = [row("A", 0, 10, 4.0), row("A", 0, 20, 0.0)]
    curve = {e: v for _, e, v in window_average(rows, 10_000)}
    assert curve[20] == 2.0


def test_final_window_means_selects_last_value():
    rows = [row("A", 0, e, float(e == 50)) for e in (10, 20, 30, 40, 50)]
    assert final_window_means(rows, 10) == {"A": 1.0}


def tiny_config(**overrides):
    base = dict(
        kb_text=_data("crafting.kb"),
        domain_text=_data("crafting.domain"),
        episodes=20,
        trials=1,
        test_every=10,
        sliding_window=20,
        modes=("NO-PLANNER", "FIXED-GOAL", "ABDUCTIVE"),
        master_seed=3,
        depth_limit=6,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_metrics_csv_is_byte_identical_across_runs(tmp_path):
    rows_a, _ = run_experiment(tiny_config(), out_dir=tmp_path / "a")
    rows_b, _ = run_experiment(tiny_config(), out_dir=tmp_path / "b")
    csv_a = (tmp_path / "a" / "metrics.csv").read_bytes()
    csv_b = (tmp_path / "b" / "metrics.csv").read_bytes()
    assert csv_a == csv_b
    assert rows_a == rows_b


def test_parallel_workers_produce_identical_output(tmp_path):
    rows_serial, _ = run_experiment(tiny_config(workers=1))
    rows_parallel, _ = run_experiment(tiny_config(workers=2))
    assert metrics_csv(rows_serial) == metrics_csv(rows_parallel)


def test_no_planner_rows_report_zero_solver_effort():
    rows, _ = run_experiment(tiny_config(modes=("NO-PLANNER",)))
    assert rows
    assert all(r.solver_ms == 0 and r.plans_requested == 0 and r.cache_hits == 0 for r in rows)


def test_run_writes_expected_artifacts(tmp_path):
    run_experiment(tiny_config(episodes=10), out_dir=tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"metrics.csv", "summary.csv", "run_config.json", "proof_0.dot", "proof_1.dot"} <= names
    header = (tmp_path / "metrics.csv").read_text().splitlines()
    assert header[0].startswith("# abdrl-metrics-v1")
    assert header[1] == "mode,trial,episode,test_return,steps,plans_requested,cache_hits,solver_ms"


def test_export_dot_depth_zero_shows_gray_observations_only():
    kb = parse_knowledge_base("rule r1 { a(x) => b(x) }")
    obs = parse_observation("init: p(A); goal: q(B)")
    g = build_graph(kb, obs, 0)
    h = solve(encode(g, kb, False))
    dot = export_dot(h, g)
    assert dot.count("fillcolor") == 2
    assert "->" not in dot.replace("dir=none", "")


def test_export_dot_grocery_conventions():
    kb = parse_knowledge_base(_data("grocery.kb"))
    obs = parse_observation(_data("grocery.obs"))
    g = build_graph(kb, obs, 3)
    h = solve(encode(g, kb, True))
    dot = export_dot(h, g)
    assert "M=u1" in dot
    assert "cluster_init" in dot and "cluster_goal" in dot
    assert "style=dotted" in dot  # unification edges
    assert "cluster_c" in dot  # conjunctive tail group


def test_task_parity_worlds_identical_per_episode_index():
    from abdrl.world import generate_episode, parse_domain_config

    domain = parse_domain_config(_data("crafting.domain"))
    for index in (0, 5, 12):
        a = generate_episode(index, domain)
        b = generate_episode(index, domain)
        assert a.objects == b.objects and a.player_pos == b.player_pos
