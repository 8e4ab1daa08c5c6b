import csv
import subprocess
import sys

import pytest

from bddbenders import cli, smwds


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def example_file(tmp_path):
    path = tmp_path / "five.txt"
    smwds.save_instance(smwds.example_instance(), path)
    return path


@pytest.fixture
def small_file(tmp_path):
    path = tmp_path / "six.txt"
    assert cli.main(["generate", "--n", "6", "--density", "0.5", "--seed", "3", "--out", str(path)]) == 0
    return path


def solve(path, out, *extra):
    return cli.main(["solve", "--instance", str(path), "--out", str(out), *extra])


# -------------------------------------------------------------- generate


def test_generate_writes_the_requested_edge_count(tmp_path):
    out = tmp_path / "g.txt"
    assert cli.main(["generate", "--n", "5", "--density", "0.6", "--seed", "1", "--out", str(out)]) == 0
    inst = smwds.load_instance(out)
    assert inst.graph.num_edges == 6


def test_generate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for p in (a, b):
        cli.main(["generate", "--n", "12", "--density", "0.3", "--seed", "8", "--out", str(p)])
    assert a.read_bytes() == b.read_bytes()


def test_generate_rejects_zero_density(tmp_path):
    assert cli.main(["generate", "--n", "5", "--density", "0", "--out", str(tmp_path / "x")]) == 4


def test_generate_to_stdout(capsys):
    assert cli.main(["generate", "--n", "4", "--density", "1"]) == 0
    assert capsys.readouterr().out.startswith("smwds-instance 1\n")


# ----------------------------------------------------------------- solve


def test_worked_example_objective(example_file, tmp_path):
    out = tmp_path / "r.csv"
    assert solve(example_file, out, "--method", "bdd-cost", "--scenarios", "1") == 0
    (row,) = read_csv(out)
    assert row["objective"] == "2" and row["status"] == "optimal"
    assert list(row) == cli.REPORT_FIELDS


def test_methods_agree(small_file, tmp_path):
    out = tmp_path / "r.csv"
    for m in ("bdd-cap", "lshaped", "bdd-cost"):
        assert solve(small_file, out, "--method", m, "--scenarios", "4", "--scenario-seed", "5") == 0
    rows = read_csv(out)
    assert len(rows) == 3
    assert len({r["objective"] for r in rows}) == 1
    assert [r["method"] for r in rows] == ["bdd-cap", "lshaped", "bdd-cost"]


def test_zero_lambda_matches_plain_run(small_file, tmp_path):
    out = tmp_path / "r.csv"
    solve(small_file, out, "--scenarios", "4")
    solve(small_file, out, "--scenarios", "4", "--cvar", "--lambda", "0", "--alpha", "0.9")
    plain, risk = read_csv(out)
    assert plain["objective"] == risk["objective"]
    assert risk["cvar"] == "1" and plain["cvar"] == "0"


def test_reports_are_reproducible(small_file, tmp_path):
    out = tmp_path / "r.csv"
    for _ in range(2):
        solve(small_file, out, "--scenarios", "3", "--method", "bdd-cap", "--pure-benders")
    a, b = read_csv(out)
    for k in cli.REPORT_FIELDS:
        if k not in cli.TIMING:
            assert a[k] == b[k], k


def test_cvar_flags_need_each_other(small_file, tmp_path):
    out = tmp_path / "r.csv"
    assert solve(small_file, out, "--scenarios", "2", "--cvar", "--lambda", "1") == 4
    assert solve(small_file, out, "--scenarios", "2", "--lambda", "1", "--alpha", "0.5") == 4
    assert solve(small_file, out, "--scenarios", "2", "--cvar", "--lambda", "1", "--alpha", "1") == 4


def test_node_budget_overrun_is_a_resource_outcome(small_file, tmp_path):
    out = tmp_path / "r.csv"
    code = solve(small_file, out, "--scenarios", "2", "--method", "bdd-cap", "--node-budget", "3")
    assert code == 5
    assert read_csv(out)[0]["status"] == "memory-limit"


def test_memory_budget_from_environment(small_file, tmp_path, monkeypatch):
    monkeypatch.setenv("BDDBENDERS_MEMORY_BUDGET", "100")
    out = tmp_path / "r.csv"
    assert solve(small_file, out, "--scenarios", "2", "--method", "bdd-cap") == 5
    # an explicit flag wins over the environment
    assert solve(small_file, out, "--scenarios", "2", "--method", "bdd-cap", "--memory-budget", "100000000") == 0


def test_bad_environment_value(small_file, tmp_path, monkeypatch):
    monkeypatch.setenv("BDDBENDERS_TIME_LIMIT", "soon")
    assert solve(small_file, tmp_path / "r.csv", "--scenarios", "2") == 4


def test_dump_bdd(example_file, tmp_path):
    dump = tmp_path / "bdd.txt"
    assert solve(example_file, tmp_path / "r.csv", "--scenarios", "1", "--method", "bdd-cap",
                 "--dump-bdd", str(dump)) == 0
    text = dump.read_text()
    assert text.startswith("# scenario 0\nbdd cap vars 5 nodes 19 ")
    assert solve(example_file, tmp_path / "r.csv", "--scenarios", "1", "--method", "lshaped",
                 "--dump-bdd", str(dump)) == 4


def test_missing_instance_and_unknown_method(tmp_path):
    assert solve(tmp_path / "nope.txt", tmp_path / "r.csv", "--scenarios", "1") == 4
    assert cli.main(["solve", "--instance", "x", "--scenarios", "1", "--method", "simplex"]) == 4
    assert cli.main([]) == 4


# --------------------------------------------------------------- compare


def test_compare_three_by_three(tmp_path):
    folder = tmp_path / "inst"
    folder.mkdir()
    for seed in range(3):
        cli.main(["generate", "--n", "5", "--density", "0.6", "--seed", str(seed),
                  "--out", str(folder / f"g{seed}.txt")])
    out = tmp_path / "runs.csv"
    assert cli.main(["compare", "--instances", str(folder), "--scenarios", "3", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 9
    for inst in {r["instance"] for r in rows}:
        objs = {r["objective"] for r in rows if r["instance"] == inst}
        assert len(objs) == 1


def test_compare_records_failures_and_goes_on(tmp_path):
    folder = tmp_path / "inst"
    folder.mkdir()
    (folder / "broken.txt").write_text("not an instance\n")
    smwds.save_instance(smwds.example_instance(), folder / "five.txt")
    out = tmp_path / "runs.csv"
    assert cli.main(["compare", "--instances", str(folder), "--methods", "bdd-cost",
                     "--scenarios", "1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0]["status"].startswith("error")
    assert rows[1]["objective"] == "2"


def test_compare_parallel_matches_serial(tmp_path):
    folder = tmp_path / "inst"
    folder.mkdir()
    for seed in range(2):
        cli.main(["generate", "--n", "5", "--density", "0.6", "--seed", str(seed),
                  "--out", str(folder / f"g{seed}.txt")])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["compare", "--instances", str(folder), "--scenarios", "2", "--out", str(a)])
    cli.main(["compare", "--instances", str(folder), "--scenarios", "2", "--out", str(b), "--jobs", "2"])
    assert [r["objective"] for r in read_csv(a)] == [r["objective"] for r in read_csv(b)]


def test_compare_empty_folder_gives_header_only(tmp_path):
    folder = tmp_path / "empty"
    folder.mkdir()
    out = tmp_path / "runs.csv"
    assert cli.main(["compare", "--instances", str(folder), "--out", str(out)]) == 0
    assert out.read_text().strip() == ",".join(cli.REPORT_FIELDS)


def test_compare_rejects_unknown_methods(tmp_path):
    assert cli.main(["compare", "--instances", str(tmp_path), "--methods", "bdd-cap,magic"]) == 4


# ------------------------------------------------------------------- saa


def test_saa_table_has_one_row_per_count(small_file, tmp_path):
    out = tmp_path / "saa.csv"
    assert cli.main(["saa", "--instance", str(small_file), "--counts", "5,10", "--reps", "3",
                     "--eval", "100", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [r["scenarios"] for r in rows] == ["5", "10"]
    assert list(rows[0]) == smwds.SAA_FIELDS


def test_saa_on_training_sample_has_no_gap(small_file, tmp_path):
    out = tmp_path / "saa.csv"
    assert cli.main(["saa", "--instance", str(small_file), "--counts", "4", "--reps", "1",
                     "--eval", "train", "--out", str(out)]) == 0
    assert float(read_csv(out)[0]["worst_gap_pct"]) == 0


def test_saa_rejects_bad_counts(small_file):
    assert cli.main(["saa", "--instance", str(small_file), "--counts", "5,x"]) == 4
    assert cli.main(["saa", "--instance", str(small_file), "--counts", "0"]) == 4


def test_module_entry_point(example_file):
    res = subprocess.run([sys.executable, "-m", "bddbenders", "solve", "--instance", str(example_file),
                          "--scenarios", "1"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == ",".join(cli.REPORT_FIELDS)
