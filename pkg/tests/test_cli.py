from __future__ import annotations

import json
import re

import numpy as np
import pytest

from gdmsdim.cli import main, read_config_file, run
from gdmsdim.errors import ConfigError, PositivityError, VerificationFailure
from gdmsdim.figure import emit_figure
from gdmsdim.record import decode_vector, encode_vector, read_record, verify_record, write_record
from gdmsdim.systems import apollonian_system, build_system, schottky2d_system

PAIR = {"system": "similitude", "mesh_h": 0.02, "width_goal": 2e-3,
        "system_params": {"ratios": [0.5, 0.5], "centers": [[0.5, 0.0], [-0.5, 0.0]]}}


@pytest.fixture(scope="module")
def pair_record(tmp_path_factory):
    path = tmp_path_factory.mktemp("rec") / "pair.json"
    rec = run(dict(PAIR, record=str(path)))
    return path, rec


def test_vector_codec_roundtrip():
    v = np.random.default_rng(0).random(1000)
    assert np.array_equal(decode_vector(encode_vector(v)), v)


def test_record_contents(pair_record):
    path, rec = pair_record
    assert rec["interval"]["t_lo"] <= 1.0 <= rec["interval"]["t_hi"]
    again = read_record(path)
    assert again["interval"] == rec["interval"]
    assert again["evidence_lo"]["lo"] == rec["evidence_lo"]["lo"]


def test_fresh_record_verifies(pair_record):
    path, _ = pair_record
    assert verify_record(path)


def test_shifted_t_lo_fails(pair_record, tmp_path):
    _, rec = pair_record
    bad = json.loads(json.dumps(rec))
    bad["interval"]["t_lo"] = 1.01
    with pytest.raises(VerificationFailure):
        verify_record(bad)
    assert verify_record(bad, raise_on_failure=False) is False


def test_tampered_witness_sign(pair_record):
    _, rec = pair_record
    bad = json.loads(json.dumps(rec))
    w = decode_vector(bad["evidence_hi"]["witness"])
    w[3] = -w[3]
    bad["evidence_hi"]["witness"] = encode_vector(w)
    with pytest.raises(PositivityError):
        verify_record(bad)


def test_cli_verify_exit_codes(pair_record, tmp_path, capsys):
    path, rec = pair_record
    assert main(["verify", str(path)]) == 0
    bad = json.loads(json.dumps(rec))
    bad["interval"]["t_hi"] = 0.99
    p2 = tmp_path / "bad.json"
    write_record(bad, p2)
    assert main(["verify", str(p2)]) == 2


def test_unknown_system_lists_catalog(capsys):
    assert main(["run", "--system", "nope"]) == 3
    err = capsys.readouterr().err
    assert "cf2-4gen" in err and "apollonian-12" in err


def test_err_too_large_hint(capsys):
    assert main(["run", "--system", "cf2-lattice", "--h", "0.02"]) == 3
    assert re.search(r"reduce mesh_h below [0-9.]+", capsys.readouterr().err)


def test_catalog_command(capsys):
    assert main(["catalog"]) == 0
    out = capsys.readouterr().out
    assert len(out.strip().splitlines()) == 11


def test_config_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[system]\nname = similitude\nratios = [0.3, 0.3]\n"
                   "centers = [[0.5, 0], [-0.5, 0]]\n[mesh]\nh = 0.02\n"
                   "[solver]\nwidth_goal = 0.01\n[output]\nrecord = out.json\n")
    cfg = read_config_file(ini)
    assert cfg["system"] == "similitude" and cfg["mesh_h"] == 0.02
    assert cfg["system_params"]["ratios"] == [0.3, 0.3]
    bad = tmp_path / "bad.ini"
    bad.write_text("[mesh]\nsize = 3\n")
    with pytest.raises(ConfigError):
        read_config_file(bad)


def test_cli_run_end_to_end(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    out = tmp_path / "r.json"
    ini.write_text("[system]\nname = similitude\nratios = [0.3, 0.3]\n"
                   "centers = [[0.5, 0], [-0.5, 0]]\n[mesh]\nh = 0.02\n"
                   f"[solver]\nwidth_goal = 0.01\n[output]\nrecord = {out}\n")
    assert main(["run", "--config", str(ini)]) == 0
    assert "dimension" in capsys.readouterr().out
    assert main(["verify", str(out)]) == 0


def test_cf4_coarse_contains_table_value():
    rec = run({"system": "cf2-4gen", "mesh_h": 2e-3})
    assert rec["interval"]["t_lo"] <= 1.149576 <= rec["interval"]["t_hi"]
    assert verify_record(rec)


def test_abc_coarse_contains_table_value():
    rec = run({"system": "abc", "mesh_h": 1e-3})
    assert rec["interval"]["t_lo"] <= 0.631822790 <= rec["interval"]["t_hi"]


def _count(svg, tag):
    return len(re.findall(f"<{tag} ", svg))


def test_figure_schottky(tmp_path):
    p = tmp_path / "s.svg"
    emit_figure(schottky2d_system(), 1, p)
    assert _count(p.read_text(), "circle") == 3 + 6
    emit_figure(schottky2d_system(), 0, p)
    assert _count(p.read_text(), "circle") == 3


def test_figure_apollonian(tmp_path):
    p = tmp_path / "a.svg"
    emit_figure(apollonian_system(range(1, 7), "all", 20), 1, p)
    assert _count(p.read_text(), "circle") == 1 + 120
    with pytest.raises(ValueError):
        emit_figure(apollonian_system(range(1, 7), "all", 20), 5, p)


def test_figure_3d_and_quadratic(tmp_path):
    p = tmp_path / "x.svg"
    assert emit_figure(build_system("schottky3d"), 1, p) == 4 + 12
    assert emit_figure(build_system("abc"), 2, p) == 1 + 3 + 9
