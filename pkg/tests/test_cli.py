import pytest

from walklab.chain import read_chain
from walklab.cli import main


def run_cli(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out.read_text()


def data_rows(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def test_ht_exact_record(tmp_path):
    code, text = run_cli(tmp_path, "ht.csv", "ht", "--torus", "8",
                         "--mark", "0")
    assert code == 0
    rows = data_rows(text)
    assert rows[0] == "quantity,value,error_bound,method,seed"
    quantity, value, _, method, _ = rows[1].split(",")
    assert quantity == "ht" and method == "exact-solve"
    assert abs(float(value) - 123.30087590591785) < 1e-9


def test_ht_monte_carlo_record(tmp_path):
    code, text = run_cli(tmp_path, "mc.csv", "ht", "--torus", "6",
                         "--mark", "3", "--samples", "5000", "--seed", "42")
    assert code == 0
    row = data_rows(text)[1].split(",")
    assert row[3] == "monte-carlo" and row[4] == "42"
    assert float(row[2]) > 0.0


def test_config_comment_present(tmp_path):
    _, text = run_cli(tmp_path, "x.csv", "ht", "--torus", "4", "--mark", "0")
    first = text.splitlines()[0]
    assert first.startswith("# config") and "seed=0" in first


def test_empty_marked_is_validation_error(tmp_path):
    code, text = run_cli(tmp_path, "bad.csv", "ht", "--torus", "4",
                         "--mark", "")
    assert code == 1
    assert data_rows(text)[0].startswith("error,ValueError")


def test_missing_graph_is_error(tmp_path):
    code, text = run_cli(tmp_path, "bad2.csv", "ht")
    assert code == 1
    assert "error," in text


def test_ht_plus_routes_agree(tmp_path):
    _, eig = run_cli(tmp_path, "a.csv", "ht-plus", "--torus", "12",
                     "--d1", "1", "--k1", "5", "--d", "3")
    _, closed = run_cli(tmp_path, "b.csv", "ht-plus", "--torus", "12",
                        "--d1", "1", "--k1", "5", "--d", "3", "--closed-form")
    v1 = float(data_rows(eig)[1].split(",")[1])
    v2 = float(data_rows(closed)[1].split(",")[1])
    assert abs(v1 - v2) / v2 < 1e-9
    assert "torus-closed-form" in closed


def test_ht_bound_below_ht_plus(tmp_path):
    _, bound = run_cli(tmp_path, "c.csv", "ht-bound", "--torus", "12",
                       "--d1", "1", "--k1", "5", "--d", "3")
    _, closed = run_cli(tmp_path, "d.csv", "ht-plus", "--torus", "12",
                        "--d1", "1", "--k1", "5", "--d", "3", "--closed-form")
    assert (float(data_rows(bound)[1].split(",")[1])
            <= float(data_rows(closed)[1].split(",")[1]))


def test_qsweep_schema_and_markers(tmp_path):
    code, text = run_cli(tmp_path, "sweep.csv", "qsweep", "--torus", "4",
                         "--mark", "0", "--t-max", "12",
                         "--r-per-decade", "4")
    assert code == 0
    rows = data_rows(text)
    assert rows[0] == "r,s,q,tau,t_max"
    points = rows[1:-2]
    assert points, "no sweep points emitted"
    for row in points:
        fields = row.split(",")
        assert float(fields[0]) >= 1.0
        assert 0.0 <= float(fields[2]) <= 1.0
        assert 0 <= int(fields[3]) <= 12
    assert rows[-2].startswith("r1,")
    assert rows[-1].startswith("r2,")


def test_ff_success_profile(tmp_path):
    code, text = run_cli(tmp_path, "ff.csv", "ff-success", "--torus", "4",
                         "--mark", "0", "--r", "4", "--t-max", "6")
    assert code == 0
    rows = data_rows(text)
    assert rows[0] == "s,t,value"
    assert float(rows[1].split(",")[2]) == 0.0  # t = 0 has no marked support
    assert len(rows) == 8


def test_lemma5_grid_schema(tmp_path):
    code, text = run_cli(tmp_path, "l5.csv", "lemma5-grid", "--t-values", "2",
                         "--p-points", "7", "--samples", "2000")
    assert code == 0
    rows = data_rows(text)
    assert rows[0] == "t,p,exact_prob,empirical_prob,n_samples"
    assert len(rows) == 1 + 2 * 7
    for row in rows[1:]:
        fields = row.split(",")
        assert float(fields[2]) >= 7.0 / 16.0 - 1e-12


def test_lemma4_scan_small(tmp_path):
    code, text = run_cli(tmp_path, "l4.csv", "lemma4-scan", "--T", "2",
                         "--samples", "20000")
    assert code == 0
    row = data_rows(text)[1].split(",")
    assert row[0] == "2" and row[5] == "0"  # zero violations


def test_traj_sim_deterministic(tmp_path):
    _, a = run_cli(tmp_path, "t1.csv", "traj-sim", "--torus", "5",
                   "--steps", "40", "--seed", "7")
    _, b = run_cli(tmp_path, "t2.csv", "traj-sim", "--torus", "5",
                   "--steps", "40", "--seed", "7")
    assert a == b
    _, c = run_cli(tmp_path, "t3.csv", "traj-sim", "--torus", "5",
                   "--steps", "40", "--seed", "8")
    assert a != c


def test_serialize_round_trips(tmp_path):
    out = tmp_path / "chain.txt"
    code = main(["serialize", "--star", "2", "--out", str(out)])
    assert code == 0
    chain, s = read_chain(out)
    assert s is None and chain.n == 9


def test_serialized_chain_reusable(tmp_path):
    out = tmp_path / "chain.txt"
    main(["serialize", "--torus", "4", "--out", str(out)])
    code, text = run_cli(tmp_path, "ht.csv", "ht", "--chain-file", str(out),
                         "--mark", "0")
    assert code == 0
    direct = run_cli(tmp_path, "ht2.csv", "ht", "--torus", "4", "--mark", "0")
    assert (data_rows(text)[1].split(",")[1]
            == data_rows(direct[1])[1].split(",")[1])


@pytest.mark.parametrize("argv", [
    ("ht", "--torus", "8", "--mark", "0,9", "--samples", "20000"),
    ("cor2-estimate", "--torus", "6", "--mark", "0", "--samples", "3000",
     "--t-multiplier", "2"),
    ("lemma5-grid", "--t-values", "1", "--p-points", "5",
     "--samples", "3000"),
    ("qsweep", "--torus", "4", "--mark", "0", "--t-max", "10",
     "--r-per-decade", "4"),
])
def test_thread_count_invariance(tmp_path, argv):
    _, one = run_cli(tmp_path, "one.csv", *argv, "--seed", "3",
                     "--threads", "1")
    _, four = run_cli(tmp_path, "four.csv", *argv, "--seed", "3",
                      "--threads", "4")
    assert one == four  # byte identical, config echo included


def test_repeat_run_byte_identical(tmp_path):
    argv = ("cor3-check", "--torus", "6", "--mark", "0",
            "--t-multiplier", "3")
    _, a = run_cli(tmp_path, "r1.csv", *argv)
    _, b = run_cli(tmp_path, "r2.csv", *argv)
    assert a == b


def test_lemma3_check_passes(tmp_path):
    code, text = run_cli(tmp_path, "l3.csv", "lemma3-check", "--t-max", "6")
    assert code == 0
    rows = data_rows(text)
    assert rows[-1].endswith("true")
    deviations = [float(r.split(",")[4]) for r in rows[1:-1]]
    assert max(deviations) <= 1e-8


def test_example31_preset_reduced_scale(tmp_path):
    code, text = run_cli(tmp_path, "e31.csv", "example31", "--scale", "2",
                         "--samples", "20000", "--r-per-decade", "4")
    assert code == 0
    rows = data_rows(text)
    record = {r.split(",")[1]: r.split(",") for r in rows[1:]
              if r.startswith("quantity,")}
    assert abs(float(record["ht_plus"][2]) - 920.0261) < 0.01
    assert float(record["ht_bound"][2]) <= float(record["ht_plus"][2])
    mc = float(record["ht"][2])
    assert abs(mc - 21.49) < 3 * float(record["ht"][3])
    assert any(r.startswith("sweep,") for r in rows)
    assert any(r.startswith("marker,r1") for r in rows)


def test_run_quantity_alias(tmp_path):
    _, direct = run_cli(tmp_path, "direct.csv", "ht", "--torus", "4",
                        "--mark", "0")
    _, alias = run_cli(tmp_path, "alias.csv", "run", "--quantity", "ht",
                       "--torus", "4", "--mark", "0")
    assert data_rows(direct) == data_rows(alias)


def test_example32_preset_small_star(tmp_path):
    code, text = run_cli(tmp_path, "e32.csv", "example32", "--k", "3",
                         "--r-per-decade", "8")
    assert code == 0
    rows = data_rows(text)
    record = {r.split(",")[1]: r.split(",") for r in rows[1:]
              if r.startswith("quantity,")}
    assert abs(float(record["ht"][2]) - 178.75675675675672) < 1e-6
    best = record["q_best"]
    assert 0.0 < float(best[2]) <= 1.0
    sweep_rows = [r for r in rows if r.startswith("sweep,")]
    assert len(sweep_rows) >= 8
