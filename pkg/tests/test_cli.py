import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tbchern.cli import (EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, EXIT_PARTIAL, ResultRecord,
                         RunConfig, derive_seed, main, parse_config, parse_number, run_single,
                         splitmix64)

HALDANE = ["haldane", "--lx", "4", "--ly", "4", "--t2", "0.5", "--phi", "pi/2"]
KM = ["kane-mele", "--lx", "4", "--ly", "4", "--lso", "0.3", "--lr", "0.1"]

COMMANDS = {
    "tbc-link": HALDANE + ["--method", "tbc-link", "--grid", "5", "5"],
    "tbc-link-boundary": HALDANE + ["--method", "tbc-link", "--grid", "5", "5", "--gauge", "boundary"],
    "tbc-fd": HALDANE + ["--method", "tbc-fd", "--grid", "5", "5"],
    "flatness": HALDANE + ["--method", "flatness", "--grid", "5", "5"],
    "noncomm": HALDANE + ["--method", "noncomm"],
    "noncomm-hi": HALDANE + ["--method", "noncomm-hi", "--q", "3"],
    "bott": HALDANE + ["--method", "bott"],
    "oracle": HALDANE + ["--method", "oracle", "--kgrid", "20"],
    "spin-split": KM + ["--method", "spin-split"],
    "spin-split-noncomm": KM + ["--method", "spin-split", "--route", "noncomm"],
    "spin-generalized": KM + ["--method", "spin-generalized", "--route", "noncomm-hi", "--q", "2"],
    "chern-matrix": KM + ["--method", "chern-matrix"],
    "spin-tbc": KM + ["--method", "spin-tbc", "--grid", "4", "4"],
    "km-oracle": KM + ["--method", "oracle", "--grid", "4", "4"],
    "sweep": HALDANE + ["--method", "bott", "--sweep", "phi=-pi/2:pi/2:3",
                        "--sweep2", "delta=0:4:3"],
    "sweep-json": HALDANE + ["--method", "noncomm", "--sweep", "l=4:6:3", "--format", "json"],
    "disorder": HALDANE + ["--method", "bott", "--disorder-w", "0,1", "--realizations", "3",
                           "--seed", "9"],
    "obc": ["haldane", "--lx", "10", "--ly", "10", "--t2", "0.2", "--phi", "pi/2",
            "--method", "bott", "--obc", "--margin", "2", "--sweep", "delta=0:3:3"],
}


def run_to(tmp_path, name, args):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out.read_bytes()


def rows(data: bytes):
    return list(csv.DictReader(data.decode().splitlines()))


def test_splitmix64_reference_value():
    # first output of the reference SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(1) != splitmix64(0)


def test_derived_seeds_distinct_and_stable():
    seeds = {derive_seed(7, i, r) for i in range(5) for r in range(50)}
    assert len(seeds) == 250
    assert derive_seed(7, 2, 3) == derive_seed(7, 2, 3)
    assert all(0 <= s < 2**64 for s in seeds)


def test_parse_number():
    assert parse_number("pi/2") == math.pi / 2
    assert parse_number("-3*pi/4") == -3 * math.pi / 4
    assert parse_number("0.25") == 0.25
    for bad in ("pie", "1/0", "__import__('os')", "2**1000"):
        with pytest.raises(Exception):
            parse_number(bad)


finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=50)
@given(value=st.one_of(st.none(), finite), gap=st.one_of(st.none(), finite),
       integer=st.one_of(st.none(), st.integers(-5, 5)), status=st.text(max_size=20),
       axes=st.dictionaries(st.sampled_from(["phi", "delta", "l"]), finite))
def test_record_round_trip(value, gap, integer, status, axes):
    rec = ResultRecord({"model": "haldane", "lx": 4, "grid": [3, 3]}, axes, "bott", value,
                       integer, gap=gap, status=status, extra={"matrix": [[1.0, 0.0], [0.0, -1.0]]})
    back = ResultRecord.from_json(rec.to_json())
    assert back == rec
    assert ResultRecord.from_dict(rec.to_dict()) == rec


def test_single_bott_reference():
    rec = run_single(RunConfig(lx=11, ly=11, t2=0.5, phi=math.pi / 2, method="bott"))
    assert rec.ok and rec.value == 1.0 and rec.integer == 1
    assert rec.min_singular > 0.1
    assert rec.inputs["t2"] == 0.5


@pytest.mark.parametrize("name", sorted(COMMANDS))
def test_reruns_are_byte_identical(tmp_path, name):
    code1, a = run_to(tmp_path, "a", COMMANDS[name])
    code2, b = run_to(tmp_path, "b", COMMANDS[name])
    assert code1 == code2 == EXIT_OK
    assert a == b
    if name.endswith("json"):
        recs = [ResultRecord.from_dict(d) for d in json.loads(a)]
        assert all(r.ok for r in recs)
    else:
        assert all(r["status"] == "ok" for r in rows(a))


@pytest.mark.parametrize("name", ["sweep", "disorder"])
def test_parallel_equals_serial(tmp_path, name):
    _, serial = run_to(tmp_path, "s", COMMANDS[name])
    _, parallel = run_to(tmp_path, "p", COMMANDS[name] + ["--workers", "2"])
    assert serial == parallel


def test_sweep_order_and_values(tmp_path):
    _, data = run_to(tmp_path, "s", COMMANDS["sweep"])
    r = rows(data)
    assert list(r[0]) == ["phi", "delta", "value", "integer", "gap", "flatness",
                          "min_singular", "residue", "status", "seconds"]
    got = [(float(x["phi"]), float(x["delta"])) for x in r]
    want = [(p, d) for p in (-math.pi / 2, 0.0, math.pi / 2) for d in (0.0, 2.0, 4.0)]
    assert np.allclose(got, want, rtol=0, atol=1e-11)
    ints = [int(x["integer"]) for x in r]
    assert ints[0] == -1 and ints[6] == 1 and ints[3] == 0
    # 12 significant digits
    assert r[0]["phi"] == "-1.57079632679"


def test_disorder_aggregates(tmp_path):
    _, data = run_to(tmp_path, "d", COMMANDS["disorder"])
    r = rows(data)
    assert len(r) == 2 * (3 + 1)
    clean = r[:3]
    assert len({x["seed"] for x in clean}) == 3
    agg = r[3]
    assert agg["realization"] == "mean" and agg["value"] == "1" and agg["std"] == "0"
    assert r[7]["realization"] == "mean"


def test_timing_column_opt_in(tmp_path):
    _, plain = run_to(tmp_path, "a", COMMANDS["bott"])
    _, timed = run_to(tmp_path, "b", COMMANDS["bott"] + ["--timing"])
    assert rows(plain)[0]["seconds"] == ""
    assert float(rows(timed)[0]["seconds"]) >= 0


def test_config_file_with_flag_override(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# reference point\nmodel = haldane\nlx = 5\nly = 5\nt2 = 0.5\n"
                       "phi = pi/2\nmethod = bott\ngrid = 6 6\nsweep = delta=0:1:2\n"
                       f"out = {tmp_path / 'x.csv'}\n")
    cfg = parse_config(["--config", str(cfgfile), "--lx", "6"])
    assert cfg.lx == 6 and cfg.ly == 5 and cfg.t2 == 0.5 and cfg.grid == (6, 6)
    assert cfg.sweeps[0].name == "delta" and cfg.sweeps[0].count == 2
    assert main(["--config", str(cfgfile)]) == EXIT_OK
    assert len(rows((tmp_path / "x.csv").read_bytes())) == 2


@pytest.mark.parametrize("args", [
    HALDANE + ["--method", "bott", "--sweep", "foo=0:1:2"],
    HALDANE + ["--method", "spin-split"],
    HALDANE + ["--method", "warp-drive"],
    HALDANE + ["--method", "tbc-link", "--obc"],
    HALDANE + ["--method", "bott", "--sweep", "lx=2:4:3"],
    HALDANE + ["--method", "bott", "--obc", "--margin", "2"],
    ["haldane", "--method", "bott"],
])
def test_config_errors(tmp_path, args):
    if "--out" not in args and args != ["haldane", "--method", "bott"]:
        args = args + ["--out", str(tmp_path / "o.csv")]
    assert main(args) == EXIT_CONFIG


def test_bad_config_file_key(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("colour = blue\n")
    assert main(["--config", str(f)]) == EXIT_CONFIG


def test_domain_error_single_run(tmp_path):
    # graphene point: Dirac cones sit on the 60x60 momentum mesh
    code, data = run_to(tmp_path, "o", ["haldane", "--t2", "0", "--method", "oracle"])
    assert code == EXIT_DOMAIN
    assert rows(data)[0]["status"].startswith("error: DegeneracyError")


def test_partial_sweep_failure(tmp_path):
    code, data = run_to(tmp_path, "o", ["haldane", "--t2", "0", "--method", "oracle",
                                        "--sweep", "delta=-1:1:3"])
    assert code == EXIT_PARTIAL
    status = [r["status"] for r in rows(data)]
    assert status[0] == status[2] == "ok" and status[1].startswith("error")


def test_obc_defaults():
    cfg = RunConfig(obc=True)
    assert cfg.effective_margin == 3 and cfg.effective_filling == "below:0"
    assert RunConfig().effective_filling == "half"
    rec = run_single(RunConfig(lx=10, ly=10, t2=0.2, phi=math.pi / 2, obc=True, margin=2,
                               method="bott"))
    assert rec.inputs["boundary"] == "OBC" and rec.value == 1.0
