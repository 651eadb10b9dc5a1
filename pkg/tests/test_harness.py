import copy
import csv
import io
import json
import math

import pytest

from cpdormancy.errors import ConfigInvalid
from cpdormancy.harness import defaults, load, run_experiment, summarize, sweep, validate
from cpdormancy.harness.cli import SUBCOMMANDS, main
from cpdormancy.harness.experiments import collect
from small_configs import SMALL


def write_config(tmp_path, name, raw):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(raw))
    return str(p)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def outputs(out_dir, kind):
    return {f: (out_dir / f).read_bytes() for f in (f"{kind}.csv", f"{kind}_summary.json")}


class TestConfig:
    def test_missing_alpha(self):
        with pytest.raises(ConfigInvalid) as exc:
            validate({"kind": "dl", "t": 100, "replicas": 10})
        assert exc.value.path == "alpha"

    def test_unknown_field(self):
        with pytest.raises(ConfigInvalid) as exc:
            validate({**SMALL["dl-check"], "alhpa": 0.5})
        assert exc.value.path == "alhpa"

    def test_type_errors(self):
        with pytest.raises(ConfigInvalid) as exc:
            validate({**SMALL["dl-check"], "t": "long"})
        assert exc.value.path == "t"
        with pytest.raises(ConfigInvalid):
            validate({**SMALL["survival"], "times": [10, 5]})
        with pytest.raises(ConfigInvalid):
            validate({**SMALL["dl-check"], "replicas": 0})
        with pytest.raises(ConfigInvalid) as exc:
            validate({**SMALL["simulate"], "wake_law": {"kind": "pareto", "alpha": 1.5}})
        assert exc.value.path.startswith("wake_law")

    @pytest.mark.parametrize("sub,field,value", [("dl-check", "alpha", 1.5), ("gap-check", "eps", 0.0),
                                                 ("percolate", "p", 1.0), ("recursion", "V_size", 0),
                                                 ("simulate", "horizon", -1.0)])
    def test_ranges(self, sub, field, value):
        with pytest.raises(ConfigInvalid) as exc:
            validate({**SMALL[sub], field: value})
        assert exc.value.path == field

    def test_unknown_kind(self):
        with pytest.raises(ConfigInvalid):
            validate({"kind": "weather", "replicas": 1})

    def test_roundtrip(self, tmp_path):
        for raw in SMALL.values():
            cfg = validate(copy.deepcopy(raw))
            again = load(write_config(tmp_path, "c", cfg.to_dict()))
            assert again == cfg

    @pytest.mark.parametrize("kind", sorted(set(SUBCOMMANDS.values())))
    def test_defaults_validate(self, kind):
        assert validate(defaults(kind)).kind == kind

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigInvalid):
            load(str(p))


class TestRunExperiment:
    @pytest.mark.parametrize("sub", list(SMALL))
    def test_rerun_byte_identical(self, tmp_path, sub):
        cfg = write_config(tmp_path, sub, SMALL[sub])
        kind = SUBCOMMANDS[sub]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main([sub, "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
        assert main([sub, "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
        assert outputs(a, kind) == outputs(b, kind)
        summary = json.loads((a / f"{kind}_summary.json").read_text())
        assert summary["seed"] == 3 and summary["config"]["kind"] == kind
        assert "runtime_s" in json.loads((a / f"{kind}_timing.json").read_text())

    def test_seed_changes_output(self, tmp_path):
        cfg = write_config(tmp_path, "dl", SMALL["dl-check"])
        main(["dl-check", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
        main(["dl-check", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
        assert outputs(tmp_path / "a", "dl") != outputs(tmp_path / "b", "dl")

    def test_growth_columns(self, tmp_path):
        rep = run_experiment(validate(SMALL["simulate"]), out_dir=str(tmp_path))
        rows = read_rows(rep.paths["growth.csv"])
        assert rows[0] == ["replica", "t", "infected", "r_t", "boundary_hit"]
        assert len(rows) == 1 + 2 * 2

    def test_kind_mismatch(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "dl", SMALL["dl-check"])
        assert main(["survival", "--config", cfg, "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_field_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, "dl", {"kind": "dl", "t": 100, "replicas": 10})
        assert main(["dl-check", "--config", cfg, "--out", str(tmp_path)]) == 2

    @pytest.mark.parametrize("sub", ["survival", "dl-check", "percolate", "recursion"])
    def test_more_replicas_keep_prefix(self, sub):
        small = validate(SMALL[sub])
        big = small.with_overrides(replicas=small.replicas + 4)
        a, b = collect(small), collect(big)
        head = [r for r in b if r[0] < small.replicas]
        assert head == a

    def test_dl_prefix_across_blocks(self):
        cfg = validate({**SMALL["dl-check"], "replicas": 5000})
        more = cfg.with_overrides(replicas=9000)
        assert collect(more)[:5000] == collect(cfg)

    def test_summary_mean_full_precision(self):
        cfg = validate(SMALL["simulate"])
        rows = collect(cfg)
        stats = {s["name"]: s["value"] for s in summarize(cfg, rows)["statistics"]}
        vals = [r[2] for r in rows if r[1] == 3.0]
        assert stats["mean_infected@3"] == math.fsum(vals) / len(vals)

        cfg = validate(SMALL["percolate"])
        rows = collect(cfg)
        stats = {s["name"]: s["value"] for s in summarize(cfg, rows)["statistics"]}
        vals = [r[2] for r in rows if r[1] == 30]
        assert stats["mean_R@30"] == math.fsum(vals) / len(vals)

    def test_workers_do_not_change_output(self):
        cfg = validate(SMALL["survival"])
        assert collect(cfg, workers=2) == collect(cfg, workers=1)


class TestSweep:
    def test_survival_grid(self, tmp_path):
        base = {**SMALL["survival"], "times": [10], "seed": 5}
        header, rows = sweep(base, {"topology.n": [2, 3, 4, 5, 6]}, out_dir=str(tmp_path))
        assert header == ["point", "topology.n", "statistic", "value", "lo", "hi"]
        assert len(rows) == 5
        assert [r[1] for r in rows] == [2, 3, 4, 5, 6]
        assert all(r[2] == "p_hat@10" and r[4] <= r[3] <= r[5] for r in rows)
        summary = json.loads((tmp_path / "sweep_summary.json").read_text())
        assert [p["seed"] for p in summary["points"]] == [5 ^ i for i in range(5)]
        assert len(read_rows(tmp_path / "sweep.csv")) == 6

    def test_dl_grid(self, tmp_path):
        _, rows = sweep(SMALL["dl-check"], {"alpha": [0.3, 0.5, 0.8]}, out_dir=str(tmp_path))
        sup = [r for r in rows if r[2] == "sup_distance"]
        assert len(sup) == 3

    def test_point_matches_single_run(self, tmp_path):
        base = {**SMALL["dl-check"], "seed": 12}
        _, rows = sweep(base, {"alpha": [0.3, 0.5]}, out_dir=str(tmp_path))
        single = run_experiment(validate({**base, "alpha": 0.5, "seed": 12 ^ 1}), write=False)
        want = {s["name"]: s["value"] for s in single.summary["statistics"]}
        got = {r[2]: r[3] for r in rows if r[0] == 1}
        assert got == want

    def test_empty_grid(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            sweep(SMALL["dl-check"], {}, out_dir=str(tmp_path))
        with pytest.raises(ConfigInvalid):
            sweep(SMALL["dl-check"], {"alpha": []}, out_dir=str(tmp_path))

    def test_invalid_point(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            sweep(SMALL["dl-check"], {"alpha": [0.5, 1.5]}, out_dir=str(tmp_path))

    def test_cli(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "dl", SMALL["dl-check"])
        argv = ["sweep", "--config", cfg, "--grid", '{"alpha": [0.5, 0.8]}', "--out"]
        assert main([*argv, str(tmp_path / "a")]) == 0
        assert main([*argv, str(tmp_path / "b")]) == 0
        for f in ("sweep.csv", "sweep_summary.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "point,alpha,statistic,value,lo,hi"
        rows = list(csv.reader(io.StringIO((tmp_path / "a" / "sweep.csv").read_text())))
        assert len(rows) > 1
