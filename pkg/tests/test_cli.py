import dataclasses
import json
from pathlib import Path

import pytest
import yaml

from ghostsig.cli import (
    ACCEPT,
    BOB_REJECT,
    CHANNEL_ABORT,
    VALIDATION_ERROR,
    _manifest,
    main,
)
from ghostsig.scenario import (
    RecordFileError,
    ScenarioError,
    dump_scenario,
    load_scenario,
    reference_scenario,
    read_records,
    scenario_from_dict,
)

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def short_yaml(tmp_path):
    d = yaml.safe_load((ROOT / "scenarios" / "reference_honest.yaml").read_text())
    d["source"]["duration"] = 0.5
    path = tmp_path / "short.yaml"
    path.write_text(yaml.safe_dump(d))
    return path, d


def _tree(path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_shipped_scenarios_validate():
    for path in sorted((ROOT / "scenarios").glob("*.yaml")):
        load_scenario(path)


def test_dump_roundtrip():
    sc = reference_scenario()
    assert scenario_from_dict(yaml.safe_load(dump_scenario(sc))) == sc


@pytest.mark.parametrize("missing", ["encoding", "source", "chi", "e_ref", "thresholds", "disclose_fraction"])
def test_missing_physical_field_is_an_error(short_yaml, missing):
    _, d = short_yaml
    d.pop(missing)
    with pytest.raises(ScenarioError, match=missing):
        scenario_from_dict(d)


def test_missing_source_field_named(short_yaml):
    _, d = short_yaml
    d["source"].pop("jitter_sigma")
    with pytest.raises(ScenarioError, match="source.jitter_sigma"):
        scenario_from_dict(d)


@pytest.mark.parametrize("msg", ["0000000000", "1111111111", "10101", "10x0101010"])
def test_bad_messages_rejected(short_yaml, tmp_path, msg):
    path, _ = short_yaml
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o"), "--message", msg]) == VALIDATION_ERROR


def test_bad_thresholds_rejected(short_yaml):
    _, d = short_yaml
    d["thresholds"] = {"Th_B": 0.4, "Th_C": 0.2}
    with pytest.raises(ScenarioError):
        scenario_from_dict(d)


def test_manifest_covers_every_parameter():
    sc = reference_scenario()
    base = json.dumps(_manifest(sc, None), sort_keys=True)

    def bumped(v):
        if v is None:
            return "1000000000"
        if isinstance(v, bool):
            return not v
        if isinstance(v, int):
            return v + 1
        if isinstance(v, float):
            return v * 0.5 + 0.01
        if isinstance(v, tuple):
            return v[:-1]
        return v

    variants = []
    for f in dataclasses.fields(sc):
        v = getattr(sc, f.name)
        if dataclasses.is_dataclass(v):
            for g in dataclasses.fields(v):
                if (f.name, g.name) == ("source", "seed"):
                    continue
                variants.append(dataclasses.replace(sc, **{f.name: dataclasses.replace(v, **{g.name: bumped(getattr(v, g.name))})}))
        elif f.name == "message":
            variants.append(dataclasses.replace(sc, message="0101010101"))
        elif f.name == "mode":
            variants.append(dataclasses.replace(sc, mode="forge"))
        elif f.name == "thresholds":
            variants.append(dataclasses.replace(sc, thresholds=None))
            variants.append(dataclasses.replace(sc, thresholds=(0.15, 0.35)))
        else:
            variants.append(dataclasses.replace(sc, **{f.name: bumped(v)}))
    assert len(variants) > 20
    for var in variants:
        assert json.dumps(_manifest(var, None), sort_keys=True) != base, var


def test_run_accepts_and_writes_reports(short_yaml, tmp_path):
    path, _ = short_yaml
    out = tmp_path / "run"
    assert main(["run", "--scenario", str(path), "--out", str(out)]) == ACCEPT
    names = set(_tree(out))
    assert {"manifest.json", "transcript.jsonl", "security.json", "result.json",
            "slot_histogram.tsv", "image_bob_own.tsv", "image_charlie_received.tsv"} <= names
    result = json.loads((out / "result.json").read_text())
    assert result["bob"]["accept"] and result["charlie"]["accept"]
    sec = json.loads((out / "security.json").read_text())
    assert sec["union_bound"]["n_slots"] == 10
    steps = [json.loads(s)["step"] for s in (out / "transcript.jsonl").read_text().splitlines()]
    assert steps[-2:] == ["6", "7"]


def test_run_is_byte_reproducible_and_replayable(short_yaml, tmp_path):
    path, _ = short_yaml
    rec = tmp_path / "rec.txt"
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "a"), "--export-records", str(rec)]) == 0
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "b")]) == 0
    assert main(["replay", "--records", str(rec), "--scenario", str(path), "--out", str(tmp_path / "c")]) == 0
    a, b, c = (_tree(tmp_path / k) for k in "abc")
    assert a == b == c


def test_replay_with_new_message_changes_only_messaging(short_yaml, tmp_path):
    path, _ = short_yaml
    rec = tmp_path / "rec.txt"
    main(["run", "--scenario", str(path), "--out", str(tmp_path / "a"), "--export-records", str(rec)])
    main(["replay", "--records", str(rec), "--scenario", str(path), "--out", str(tmp_path / "b"),
          "--message", "1000000000"])
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a["signature.tsv"] != b["signature.tsv"]
    assert a["distribution.json"] == b["distribution.json"]
    assert a["slot_histogram.tsv"] == b["slot_histogram.tsv"]


def test_different_seed_changes_reports(short_yaml, tmp_path):
    path, _ = short_yaml
    main(["run", "--scenario", str(path), "--out", str(tmp_path / "a")])
    main(["run", "--scenario", str(path), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert _tree(tmp_path / "a")["signature.tsv"] != _tree(tmp_path / "b")["signature.tsv"]


def _write_rec(tmp_path, body: str) -> Path:
    p = tmp_path / "r.txt"
    p.write_text(body)
    return p


HEADER = ("# ghostsig-records v1\n# bin_width=20\n# bins_per_slot=15\n# slots_per_frame=10\n"
          "# seed=4\nparty frame slot bin\n")


def test_record_file_parses(tmp_path):
    p = _write_rec(tmp_path, HEADER + "alice 3 1 2\nbob 3 1 2\nalice 1 0 0\n# end count=3\n")
    rec, seed = read_records(p)
    assert seed == 4
    assert rec.frames["alice"].tolist() == [1, 3]
    assert rec.count("charlie") == 0


@pytest.mark.parametrize(
    "body, line",
    [
        ("alice 3 1 2\nbob 3 1 2\n", 9),
        ("alice 3 1 2\nbob 3 1\n# end count=2\n", 8),
        ("alice 3 10 2\n# end count=1\n", 7),
        ("eve 3 1 2\n# end count=1\n", 7),
        ("alice 3 1 x\n# end count=1\n", 7),
        ("alice 3 1 2\n# end count=5\n", 8),
    ],
)
def test_record_file_errors_carry_line_numbers(tmp_path, body, line):
    p = _write_rec(tmp_path, HEADER + body)
    with pytest.raises(RecordFileError) as err:
        read_records(p)
    assert err.value.line == line


def test_truncated_record_file_exit_status(short_yaml, tmp_path):
    path, _ = short_yaml
    p = _write_rec(tmp_path, HEADER + "alice 3 1 2\n")
    assert main(["replay", "--records", str(p), "--scenario", str(path), "--out", str(tmp_path / "o")]) == VALIDATION_ERROR


def test_security_command(tmp_path, capsys):
    assert main(["security", "--e", "0.0378", "--P-e", "0.447", "--epsilon", "1e-4", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "security.json").read_text())
    assert rep["required_L"] == pytest.approx(939, rel=0.02)
    assert rep["Th_B"] == pytest.approx(0.1410, abs=0.002)
    assert rep["Th_C"] == pytest.approx(0.3474, abs=0.002)
    header = (tmp_path / "epsilon_vs_L.tsv").read_text().splitlines()[0]
    assert header == "L\tTh_B\tTh_C\tepsilon"
    assert "L=" in capsys.readouterr().out


def test_security_only_mode(tmp_path):
    assert main(["run", "--scenario", str(ROOT / "scenarios" / "security_only.yaml"), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "security.json").read_text())["required_L"] == pytest.approx(939, rel=0.02)


def test_eavesdropping_aborts(short_yaml, tmp_path):
    path, d = short_yaml
    for chan in ("X", "Y"):
        d["perturbation"][chan]["eavesdrop_fraction"] = 0.5
    path.write_text(yaml.safe_dump(d))
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == CHANNEL_ABORT


def test_weak_eavesdropping_bound_aborts(short_yaml, tmp_path):
    path, d = short_yaml
    d["chi"] = {"X": 0.7, "Y": 0.7}
    path.write_text(yaml.safe_dump(d))
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == CHANNEL_ABORT


def test_tight_threshold_rejects_at_bob(short_yaml, tmp_path):
    path, d = short_yaml
    d["thresholds"] = {"Th_B": 0.001, "Th_C": 0.3474}
    path.write_text(yaml.safe_dump(d))
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == BOB_REJECT


def test_attack_command_needs_attack_mode(short_yaml, tmp_path):
    path, _ = short_yaml
    assert main(["attack", "--scenario", str(path), "--out", str(tmp_path)]) == VALIDATION_ERROR


def test_batch_isolates_outputs(short_yaml, tmp_path):
    path, d = short_yaml
    other = tmp_path / "other.yaml"
    d["seed"] = 9
    other.write_text(yaml.safe_dump(d))
    assert main(["batch", "--scenario", str(path), "--scenario", str(other), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "short" / "manifest.json").exists()
    assert (tmp_path / "b" / "other" / "manifest.json").exists()
    assert "short\t0" in (tmp_path / "b" / "batch.tsv").read_text()
