import json

import pytest

from oodbounds.cli import fmt, main, read_config, ConfigError
from oodbounds.examples import BernoulliExperiment, bernoulli_joint, bernoulli_reference


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def csv_rows(text):
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    return header, [dict(zip(header, line.split(","))) for line in lines[1:]]


class TestFormatting:
    def test_fmt(self):
        assert fmt(None) == "na"
        assert fmt(float("inf")) == "inf"
        assert fmt(1 / 3) == "0.333333333333"
        assert fmt(0.34) == "0.34"


class TestSweep:
    def test_bernoulli_sweep_columns_and_soundness(self, capsys):
        code, out, _ = run(capsys, "sweep", "--example", "bernoulli", "--p", "0.3", "--p-test", "0.1", "--n", "1..100",
                           "--bounds", "tv,f_kl,f_h2,f_js,f_lecam,f_chi2")
        assert code == 0
        header, rows = csv_rows(out)
        assert header == ["n", "true_gap", "tv", "f_kl", "f_h2", "f_js", "f_lecam", "f_chi2"]
        assert len(rows) == 100
        assert rows[0]["true_gap"] == "0.34" and rows[1]["true_gap"] == "0.13"
        for r in rows:
            assert all(float(r[b]) >= float(r["true_gap"]) - 1e-9 for b in header[2:])

    def test_gaussian_variance_shift_sweep(self, capsys):
        code, out, _ = run(capsys, "sweep", "--example", "gaussian", "--sigma2-test", "2", "--n", "2..100", "--bounds", "kl_sg,chi2")
        assert code == 0
        header, rows = csv_rows(out)
        assert header == ["n", "true_gap", "kl_sg", "chi2"]
        assert [int(r["n"]) for r in rows] == list(range(2, 101))
        assert float(rows[0]["true_gap"]) == pytest.approx(2.0)

    def test_empty_bounds(self, capsys):
        code, out, _ = run(capsys, "sweep", "--example", "bernoulli", "--n", "1..3", "--bounds=")
        assert code == 0
        assert out.splitlines()[0] == "n,true_gap"
        assert len(out.splitlines()) == 4

    def test_inapplicable_bounds_print_na(self, capsys):
        _, out, _ = run(capsys, "sweep", "--example", "gaussian", "--n", "3", "--bounds", "tv,kl_sg")
        assert out.splitlines()[1].split(",")[2] == "na"

    def test_gaussian_n1_needs_flag(self, capsys):
        code, _, err = run(capsys, "sweep", "--example", "gaussian", "--n", "1..3")
        assert code == 2 and "include-n1" in err
        code, out, _ = run(capsys, "sweep", "--example", "gaussian", "--n", "1..3", "--bounds", "kl_sg", "--include-n1")
        assert code == 0
        assert out.splitlines()[1] == "1,2,inf"

    def test_default_ranges(self, capsys):
        _, out, _ = run(capsys, "sweep", "--example", "gaussian", "--bounds=")
        _, rows = csv_rows(out)
        assert rows[0]["n"] == "2" and rows[-1]["n"] == "100"

    @pytest.mark.parametrize(
        "argv",
        [
            ["sweep", "--example", "bernoulli", "--bounds", "tv,nope"],
            ["sweep", "--example", "poisson"],
            ["sweep"],
            ["sweep", "--example", "bernoulli", "--p", "1.5"],
            ["sweep", "--example", "bernoulli", "--n", "5..2"],
            ["sweep", "--example", "bernoulli", "--theta", "1.0"],
            ["sweep", "--config", "/nonexistent/config.txt"],
        ],
    )
    def test_invalid_input_exits_2(self, capsys, argv):
        assert run(capsys, *argv)[0] == 2

    def test_repeatable_and_parallel_identical(self, capsys, tmp_path):
        argv = ["sweep", "--example", "bernoulli", "--n", "1..30"]
        outs = []
        for extra in ([], [], ["--jobs", "3"]):
            path = tmp_path / f"out{len(outs)}.csv"
            assert main(argv + extra + ["--out", str(path)]) == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_jsonl(self, capsys):
        _, out, _ = run(capsys, "sweep", "--example", "bernoulli", "--n", "2", "--bounds", "tv,pp_kl", "--format", "jsonl")
        row = json.loads(out)
        assert row["n"] == 2 and row["true_gap"] == "0.13"
        assert set(row) == {"n", "true_gap", "pp_gap", "tv", "pp_kl"}

    def test_config_with_flag_override(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# near-singular test marginal\nexample = bernoulli\np = 0.6\np_test = 0.01\nn_min = 10\nn_max = 11\nbounds = [tv, f_kl]\n")
        _, out, _ = run(capsys, "sweep", "--config", str(cfg))
        header, rows = csv_rows(out)
        assert header == ["n", "true_gap", "tv", "f_kl"] and len(rows) == 2
        assert float(rows[0]["f_kl"]) > 1.0
        _, out2, _ = run(capsys, "sweep", "--config", str(cfg), "--p", "0.3", "--p-test", "0.1", "--n", "2")
        assert csv_rows(out2)[1][0]["true_gap"] == "0.13"

    def test_config_errors(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("colour = blue\n")
        with pytest.raises(ConfigError):
            read_config(bad)
        bad.write_text("just words\n")
        with pytest.raises(ConfigError):
            read_config(bad)


class TestBound:
    def test_pp_on_inline_bernoullis(self, capsys):
        code, out, _ = run(capsys, "bound", "--nu", "bern:0.3", "--mu", "bern:0.1", "--bounds", "pp_sg,pp_h2")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "bound,value"
        # sqrt(2 (1/2)^2 KL) with KL(Bern(.3)||Bern(.1)) = 0.153663586...
        assert float(lines[1].split(",")[1]) == pytest.approx((0.25 * 2 * 0.15366358680) ** 0.5, rel=1e-9)

    def test_identical_marginals_give_zeros(self, capsys):
        _, out, _ = run(capsys, "bound", "--nu", "bern:0.4", "--mu", "bern:0.4")
        values = [line.split(",")[1] for line in out.splitlines()[1:]]
        assert len(values) == 9 and all(float(v) == 0.0 for v in values)

    def test_joint_files(self, capsys, tmp_path):
        exp = BernoulliExperiment(0.3, 0.1)
        pj, qj = tmp_path / "p.json", tmp_path / "q.json"
        pj.write_text(json.dumps(bernoulli_joint(exp, 2).to_json()))
        qj.write_text(json.dumps(bernoulli_reference(exp, 2).to_json()))
        code, out, _ = run(capsys, "bound", "--p-joint", str(pj), "--q-joint", str(qj), "--format", "jsonl")
        assert code == 0
        row = json.loads(out)
        assert float(row["tv"]) == pytest.approx(0.298)
        assert float(row["interp"]) == pytest.approx(0.212, abs=1e-3)
        assert all(float(v) >= 0.13 for k, v in row.items() if not k.startswith("pp_"))

    def test_matches_sweep(self, capsys, tmp_path):
        exp = BernoulliExperiment(0.3, 0.1)
        pj = json.dumps(bernoulli_joint(exp, 5).to_json())
        qj = json.dumps(bernoulli_reference(exp, 5).to_json())
        bounds = "tv,wass,kl_sg,chi2,f_kl,f_h2,f_js,f_lecam,pp_kl,interp"
        _, out, _ = run(capsys, "bound", "--p-joint", pj, "--q-joint", qj, "--bounds", bounds)
        single = dict(line.split(",") for line in out.splitlines()[1:])
        _, out, _ = run(capsys, "sweep", "--example", "bernoulli", "--n", "5", "--bounds", bounds)
        row = csv_rows(out)[1][0]
        for name in bounds.split(","):
            assert float(single[name]) == pytest.approx(float(row[name]), rel=1e-9), name

    @pytest.mark.parametrize(
        "argv",
        [
            ["bound"],
            ["bound", "--nu", "{not json", "--mu", "bern:0.1"],
            ["bound", "--nu", "/nonexistent.json", "--mu", "bern:0.1"],
            ["bound", "--nu", "bern:0.3", "--mu", "bern:0.1", "--bounds", "bogus"],
            ["bound", "--p-joint", "/nonexistent.json", "--q-joint", "/nonexistent.json"],
        ],
    )
    def test_parse_errors_exit_2(self, capsys, argv):
        assert run(capsys, *argv)[0] == 2


class TestVerify:
    def test_quick_passes(self, capsys):
        code, out, _ = run(capsys, "verify", "--quick")
        assert code == 0
        rows = [json.loads(line) for line in out.splitlines()]
        assert rows and all(r["passed"] for r in rows)
        assert any(r["check"].startswith("variational:") for r in rows)

    def test_failure_exit_code(self, capsys, monkeypatch):
        from oodbounds import cli
        from oodbounds.verify import OracleReport

        monkeypatch.setattr(cli, "run_suite", lambda seed, quick: [OracleReport("x", 1, -1.0, "", False, 0.0)])
        assert run(capsys, "verify")[0] == 1
