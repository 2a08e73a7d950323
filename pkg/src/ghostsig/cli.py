"""Command-line front end: scenario runs, replay, security reports, attack sweeps and batches.

Exit statuses
-------------
0 accept (or a completed report-only mode), 10 Bob rejects, 11 Charlie
rejects, 20 channel abort (estimated error or eavesdropping bound over its
limit), 30 validation error, 40 degenerate run (empty blocks).
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .adversary import (
    eavesdrop_attack,
    forge_attack,
    outcome_table,
    repudiation_attack,
    selective_attack_probe,
)
from .imaging import Message, image_table
from .operating import _sub, simulate_detections
from .parties import (
    Channel,
    DistributionFailure,
    DistributionResult,
    EncodedRecords,
    SigningError,
    abort_envelope,
    distribute_records,
    encode_detections,
    recipient_decide,
    sign,
)
from .scenario import (
    RecordFileError,
    Scenario,
    ScenarioError,
    load_scenario,
    read_records,
    records_digest,
    write_records,
)
from .security import (
    InfeasibleSecurity,
    SecurityParams,
    columns,
    effective_guess_failure,
    epsilon_curve,
    epsilon_surface,
    message_forge_bound,
    optimize_thresholds,
    required_L,
    security_level,
)

ACCEPT = 0
BOB_REJECT = 10
CHARLIE_REJECT = 11
CHANNEL_ABORT = 20
VALIDATION_ERROR = 30
DEGENERATE = 40

K_NOTE = (
    "Bounds are per slot test. A message is judged on all M slots in two images, "
    "so a union bound multiplies each by the number of tests; union_bound uses M. "
    "p_forge assumes every wrong slot guess is a mismatch, which holds only for "
    "messages with M-1 ones; message_forge applies P_e*k/(M-1) for k ones."
)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _versions() -> dict:
    return {
        "ghostsig": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
        "python": platform.python_version(),
    }


def _manifest(sc: Scenario, digest: str | None) -> dict:
    return {"artifact": "ghostsig", "versions": _versions(), "scenario": sc.to_dict(), "records_sha256": digest}


class _Writer:
    def __init__(self, out):
        self.root = Path(out)
        self.root.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, body: str) -> None:
        (self.root / name).write_text(body)

    def json(self, name: str, obj) -> None:
        self.text(name, _json(obj))


# -- security ----------------------------------------------------------------------


def security_outputs(w: _Writer, e: float, P_e: float, epsilon_target: float, n_slots: int,
                     surface_L: float | None = None) -> dict:
    L = required_L(e, P_e, epsilon_target)
    th_b, th_c, eps = optimize_thresholds(e, P_e, L)
    rep = security_level(SecurityParams(e, P_e, L, th_b, th_c))
    out = {"epsilon_target": epsilon_target, "required_L": L, **rep.as_dict(n_slots), "note": K_NOTE}
    w.json("security.json", out)
    Ls = np.linspace(100, 2000, 96)
    w.text("epsilon_vs_L.tsv", columns(["L", "Th_B", "Th_C", "epsilon"], epsilon_curve(e, P_e, Ls)))
    B, C, E = epsilon_surface(e, P_e, surface_L if surface_L is not None else L, n=100)
    w.text("epsilon_surface.tsv", columns(["Th_B", "Th_C", "epsilon"], zip(B, C, E)))
    return out


# -- protocol --------------------------------------------------------------------


def _records_for(sc: Scenario) -> EncodedRecords:
    d = simulate_detections(sc.operating_point(), sc.seed)
    return encode_detections(d, sc.encoding)


def _distribute(sc: Scenario, rec: EncodedRecords) -> DistributionResult:
    return distribute_records(rec, sc.disclose_fraction, _sub(sc.seed, 3), {"X": sc.chi_x, "Y": sc.chi_y})


def _distribution_report(sc: Scenario, dist: DistributionResult) -> dict:
    est = {}
    for c, e in dist.estimates.items():
        est[c] = {
            "e_hat": e.e_hat,
            "sample_size": e.sample_size,
            "envelope": abort_envelope(sc.e_ref, e.sample_size, sc.abort_sigmas),
            "chi_bound": e.chi_bound,
        }
    sizes = {
        "alice_x": len(dist.alice.x), "alice_y": len(dist.alice.y),
        "bob_keep": len(dist.bob.keep), "bob_forward": len(dist.bob.sent),
        "charlie_keep": len(dist.charlie.keep), "charlie_forward": len(dist.charlie.sent),
    }
    return {"estimates": est, "block_sizes": sizes, "L": dist.L,
            "per_slot_mean_bob_keep": dist.bob.keep.per_slot_mean}


def _histograms(dist: DistributionResult) -> str:
    blocks = {
        "bob_keep": dist.bob.keep, "bob_received": dist.bob.received,
        "charlie_keep": dist.charlie.keep, "charlie_received": dist.charlie.received,
    }
    hists = {k: b.slot_histogram() for k, b in blocks.items()}
    rows = [[s, *(int(h[s]) for h in hists.values())] for s in range(dist.params.slots_per_frame)]
    return columns(["slot", *hists], rows)


def _channel_abort(sc: Scenario, dist: DistributionResult, th_c: float) -> str | None:
    for c, e in sorted(dist.estimates.items()):
        env = abort_envelope(sc.e_ref, e.sample_size, sc.abort_sigmas)
        if e.e_hat > env:
            return f"channel {c}: e_hat {e.e_hat:.5f} exceeds envelope {env:.5f}"
    if sc.P_e <= th_c:
        return f"eavesdropping bound gives P_e {sc.P_e:.4f} <= Th_C {th_c:.4f}"
    return None


def _thresholds(sc: Scenario, L: float) -> tuple[float, float]:
    if sc.thresholds is not None:
        return sc.thresholds
    th_b, th_c, _ = optimize_thresholds(sc.e_ref, sc.P_e, L)
    return th_b, th_c


def _messaging(sc: Scenario, dist: DistributionResult, th_b: float, th_c: float, w: _Writer) -> tuple[int, dict]:
    msg = sc.message_obj
    sig = sign(msg, dist.alice, _sub(sc.seed, 4))
    ab = Channel("AB", "authenticated", ("alice", "bob"), dist.transcript)
    bc = Channel("BC", "secure", ("bob", "charlie"), dist.transcript)
    ab.send("alice", "bob", "6", "signature", message=msg.as_array(), frames=sig)
    w.text("signature.tsv", columns(["frame"], ([int(f)] for f in sig)))
    result = {"message": str(msg), "signature_size": int(sig.size)}
    for name, th, reject in (("bob", th_b, BOB_REJECT), ("charlie", th_c, CHARLIE_REJECT)):
        state = dist.state_of(name)
        dec = recipient_decide(*state.blocks, sig, th, msg)
        for k, (img, rep) in enumerate(zip(dec.images, dec.reports)):
            w.text(f"image_{name}_{('own', 'received')[k]}.tsv", image_table(img, rep))
        result[name] = {
            "accept": dec.accept,
            "threshold": th,
            "reason": dec.reason,
            "decided_bits": [None if d is None else str(d) for d in dec.decided],
            "max_noise_factor": dec.max_factor,
            "counts": [img.counts.tolist() for img in dec.images],
        }
        if not dec.accept:
            return reject, result
        if name == "bob":
            bc.send("bob", "charlie", "7", "forward", message=msg.as_array(), frames=sig)
    return ACCEPT, result


def _attack_tables(sc: Scenario, dist: DistributionResult, th_b: float, th_c: float, w: _Writer) -> None:
    a = sc.attack
    msg = sc.message_obj
    if sc.mode == "forge":
        target = Message.from_string(a.target) if a.target else msg
        outs = [forge_attack(dist, target, p, a.trials, _sub(sc.seed, 5), th_c) for p in a.p_e_values]
        w.text("attack_forge.tsv", outcome_table(outs, "P_e"))
    elif sc.mode == "repudiate":
        outs = [repudiation_attack(dist, msg, d, a.trials, _sub(sc.seed, 5), th_b, th_c) for d in a.deltas]
        w.text("attack_repudiation.tsv", outcome_table(outs, "delta"))
    elif sc.mode == "eavesdrop":
        rows = []
        op = sc.operating_point()
        for chi in a.chis:
            o = eavesdrop_attack(chi, op, _sub(sc.seed, 6))
            for c in sorted(o.e_hat):
                rows.append([chi, c, o.e_hat[c], o.sample_size[c], o.envelope[c],
                             o.expected_inflation, int(o.detected)])
        w.text("attack_eavesdrop.tsv", columns(
            ["chi", "channel", "e_hat", "sample_size", "envelope", "expected_inflation", "detected"], rows))


def _selective(sc: Scenario, w: _Writer) -> int:
    a = sc.attack
    rep = selective_attack_probe(a.targeted_slots, a.selective_chi, sc.operating_point(),
                                 a.selective_p_e, _sub(sc.seed, 8))
    rows = [[s, rep.error_attacked[s], rep.error_baseline[s], rep.inflation[s], int(s in rep.targeted)]
            for s in range(sc.encoding.slots_per_frame)]
    w.text("selective.tsv", columns(["slot", "error_attacked", "error_baseline", "inflation", "targeted"], rows))
    w.json("selective.json", {"targeted": list(rep.targeted), "ratio": rep.ratio, "events": rep.events,
                              "chi": a.selective_chi, "P_e": a.selective_p_e})
    return ACCEPT


def _execute(sc: Scenario, rec: EncodedRecords | None, out) -> int:
    w = _Writer(out)
    if sc.mode == "security-only":
        w.json("manifest.json", _manifest(sc, None))
        security_outputs(w, sc.e_ref, sc.P_e, sc.epsilon_target, sc.encoding.slots_per_frame)
        return ACCEPT
    if sc.mode == "selective":
        w.json("manifest.json", _manifest(sc, None))
        return _selective(sc, w)
    if rec is None:
        rec = _records_for(sc)
    w.json("manifest.json", _manifest(sc, records_digest(rec)))
    try:
        dist = _distribute(sc, rec)
    except DistributionFailure as exc:
        w.json("result.json", {"status": DEGENERATE, "reason": str(exc)})
        return DEGENERATE
    w.text("transcript.jsonl", dist.transcript.to_jsonl())
    dreport = _distribution_report(sc, dist)
    w.json("distribution.json", dreport)
    w.text("slot_histogram.tsv", _histograms(dist))
    if any(np.isnan(e.e_hat) for e in dist.estimates.values()) or dist.L <= 0:
        w.json("result.json", {"status": DEGENERATE, "reason": "no disclosed sample or empty blocks"})
        return DEGENERATE

    th_b, th_c = _thresholds(sc, dist.L)
    sec_params = SecurityParams(sc.e_ref, sc.P_e, dist.L, th_b, th_c)
    sec = security_level(sec_params)
    M, k = sc.encoding.slots_per_frame, sum(sc.message_obj.bits)
    w.json("security.json", {**sec.as_dict(M),
                             "message_forge": {
                                 "ones": k,
                                 "effective_P_e": effective_guess_failure(sc.P_e, k, M),
                                 "p_forge": message_forge_bound(sec_params, k, M),
                             },
                             "thresholds": "optimize" if sc.thresholds is None else "explicit",
                             "note": K_NOTE})

    _attack_tables(sc, dist, th_b, th_c, w)
    reason = _channel_abort(sc, dist, th_c)
    if reason is not None:
        w.json("result.json", {"status": CHANNEL_ABORT, "reason": reason})
        return CHANNEL_ABORT
    try:
        status, result = _messaging(sc, dist, th_b, th_c, w)
    except SigningError as exc:
        w.json("result.json", {"status": DEGENERATE, "reason": str(exc)})
        return DEGENERATE
    # the messaging stage appends to the shared transcript
    w.text("transcript.jsonl", dist.transcript.to_jsonl())
    w.json("result.json", {"status": status, **result})
    return status


def run_scenario(sc: Scenario, out, export_records=None) -> int:
    """Run one scenario end to end and write its reports under ``out``."""
    rec = None
    if export_records is not None and sc.mode not in ("security-only", "selective"):
        rec = _records_for(sc)
        write_records(export_records, rec, sc.seed)
    return _execute(sc, rec, out)


def replay(record_file, sc: Scenario, out) -> int:
    """Run the protocol stages on exported records, skipping the photonics."""
    rec, seed = read_records(record_file)
    if rec.params != sc.encoding:
        raise ScenarioError(f"record encoding {rec.params} differs from scenario encoding {sc.encoding}")
    sc = replace(sc, seed=seed, source=replace(sc.source, seed=seed))
    return _execute(sc, rec, out)


# -- command line -------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, scenario_required: bool = True) -> None:
    p.add_argument("--scenario", required=scenario_required, help="YAML scenario file")
    p.add_argument("--seed", type=int, help="override the scenario seed (u64)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", help="override the scenario mode")
    p.add_argument("--message", help="override the message bit string")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghostsig", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate and run one scenario")
    _add_common(p)
    p.add_argument("--export-records", help="also write the encoded records to this file")

    p = sub.add_parser("replay", help="run the protocol on an exported record file")
    _add_common(p)
    p.add_argument("--records", required=True, help="record file written by run --export-records")

    p = sub.add_parser("security", help="required L, optimal thresholds and epsilon curves")
    _add_common(p, scenario_required=False)
    p.add_argument("--e", type=float, help="system error rate")
    p.add_argument("--P-e", dest="P_e", type=float, help="forger guess-failure probability")
    p.add_argument("--epsilon", type=float, help="target security level")
    p.add_argument("--slots", type=int, default=10, help="slots per frame for the union bound")
    p.add_argument("--surface-L", type=float, help="L at which to tabulate the epsilon surface")

    p = sub.add_parser("attack", help="run an attack mode (forge, repudiate, eavesdrop, selective)")
    _add_common(p)

    p = sub.add_parser("batch", help="run several scenarios concurrently")
    p.add_argument("--scenario", action="append", required=True, help="scenario file (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--mode")
    p.add_argument("--message")
    p.add_argument("--jobs", type=int, default=None, help="worker processes")
    return parser


def _load(args) -> Scenario:
    return load_scenario(args.scenario, seed=args.seed, mode=args.mode, message=args.message)


def _batch_one(job) -> tuple[str, int, str]:
    path, out, seed, mode, message = job
    try:
        sc = load_scenario(path, seed=seed, mode=mode, message=message)
        return path, run_scenario(sc, out), ""
    except (ScenarioError, InfeasibleSecurity, ValueError) as exc:
        return path, VALIDATION_ERROR, str(exc)


def _batch(args) -> int:
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    stems = [Path(s).stem for s in args.scenario]
    if len(set(stems)) != len(stems):
        raise ScenarioError("batch scenario files need distinct names")
    jobs = [(s, str(root / stem), args.seed, args.mode, args.message) for s, stem in zip(args.scenario, stems)]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_batch_one, jobs))
    rows = [[stem, status, err] for stem, (_, status, err) in zip(stems, results)]
    (root / "batch.tsv").write_text(columns(["scenario", "status", "error"], rows))
    return max(status for _, status, _ in results)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_scenario(_load(args), args.out, args.export_records)
        if args.command == "replay":
            return replay(args.records, _load(args), args.out)
        if args.command == "attack":
            sc = _load(args)
            if sc.mode not in ("forge", "repudiate", "eavesdrop", "selective"):
                raise ScenarioError(f"attack needs an attack mode, got {sc.mode!r}")
            return run_scenario(sc, args.out)
        if args.command == "security":
            if args.scenario:
                sc = _load(args)
                e, P_e, eps, m = sc.e_ref, sc.P_e, sc.epsilon_target, sc.encoding.slots_per_frame
            else:
                e, P_e, eps, m = args.e, args.P_e, args.epsilon, args.slots
            if None in (e, P_e, eps):
                raise ScenarioError("security needs --scenario or all of --e, --P-e, --epsilon")
            rep = security_outputs(_Writer(args.out), e, P_e, eps, m, args.surface_L)
            print(f"L={rep['required_L']} Th_B={rep['Th_B']:.4f} Th_C={rep['Th_C']:.4f} "
                  f"epsilon={rep['epsilon']:.4g}")
            return ACCEPT
        if args.command == "batch":
            return _batch(args)
    except RecordFileError as exc:
        print(f"ghostsig: record file error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    except (ScenarioError, InfeasibleSecurity) as exc:
        print(f"ghostsig: invalid configuration: {exc}", file=sys.stderr)
        return VALIDATION_ERROR
    return VALIDATION_ERROR


if __name__ == "__main__":
    sys.exit(main())
