"""Scenario files (YAML) and the line-oriented record file format."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .imaging import Message
from .operating import OperatingPoint
from .parties import EncodedRecords
from .photonics import PARTIES, ChannelPerturbation, SourceParams
from .timebase import EncodingParams

MODES = ("honest", "forge", "repudiate", "eavesdrop", "selective", "security-only")
SIGNING_MODES = ("honest", "forge", "repudiate", "eavesdrop")
RECORD_MAGIC = "# ghostsig-records v1"


class ScenarioError(ValueError):
    pass


class RecordFileError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class AttackSettings:
    trials: int = 1000
    target: str | None = None
    deltas: tuple[float, ...] = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0)
    p_e_values: tuple[float, ...] = (0.447,)
    chis: tuple[float, ...] = (0.0, 0.1, 0.2, 0.5)
    targeted_slots: tuple[int, ...] = (0,)
    selective_p_e: float = 0.9
    selective_chi: float = 0.5


@dataclass(frozen=True)
class Scenario:
    encoding: EncodingParams
    source: SourceParams
    perturbation_x: ChannelPerturbation
    perturbation_y: ChannelPerturbation
    disclose_fraction: float
    chi_x: float
    chi_y: float
    e_ref: float
    message: str
    thresholds: tuple[float, float] | None
    mode: str
    seed: int
    abort_sigmas: float = 5.0
    epsilon_target: float | None = None
    attack: AttackSettings = field(default_factory=AttackSettings)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ScenarioError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if not 0.0 < self.disclose_fraction < 1.0:
            raise ScenarioError("disclose_fraction must lie in (0, 1)")
        for name in ("chi_x", "chi_y", "e_ref"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ScenarioError(f"{name} must lie in [0, 1], got {v}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ScenarioError("seed must be an unsigned 64-bit integer")
        if self.mode == "security-only":
            if self.epsilon_target is None:
                raise ScenarioError("security-only mode needs epsilon_target")
            return
        try:
            msg = Message.from_string(self.message)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        if len(msg) != self.encoding.slots_per_frame:
            raise ScenarioError(
                f"message has {len(msg)} bits but a frame has {self.encoding.slots_per_frame} slots"
            )
        if self.mode in SIGNING_MODES and not msg.signable:
            raise ScenarioError(f"message {self.message} is all 0 or all 1 and cannot be signed")
        if self.thresholds is not None:
            tb, tc = self.thresholds
            if not 0.0 < tb < tc < 1.0:
                raise ScenarioError(f"thresholds must satisfy 0 < Th_B < Th_C < 1, got {self.thresholds}")

    @property
    def message_obj(self) -> Message:
        return Message.from_string(self.message)

    @property
    def P_e(self) -> float:
        """Forger guess-failure probability; the worse of the two channel bounds sets it."""
        return round(1.0 - max(self.chi_x, self.chi_y), 12)

    def operating_point(self) -> OperatingPoint:
        return OperatingPoint(
            self.encoding, self.source, self.perturbation_x, self.perturbation_y,
            self.disclose_fraction, self.chi_x, self.chi_y, self.e_ref, self.abort_sigmas,
        )

    def to_dict(self) -> dict:
        d = {
            "encoding": asdict(self.encoding),
            "source": {k: v for k, v in asdict(self.source).items() if k != "seed"},
            "perturbation": {"X": asdict(self.perturbation_x), "Y": asdict(self.perturbation_y)},
            "disclose_fraction": self.disclose_fraction,
            "chi": {"X": self.chi_x, "Y": self.chi_y},
            "e_ref": self.e_ref,
            "abort_sigmas": self.abort_sigmas,
            "message": self.message,
            "thresholds": "optimize" if self.thresholds is None
            else {"Th_B": self.thresholds[0], "Th_C": self.thresholds[1]},
            "mode": self.mode,
            "seed": self.seed,
            "epsilon_target": self.epsilon_target,
            "attack": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.attack).items()},
        }
        return d


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"missing required field {where}{key}")
    return d[key]


def scenario_from_dict(d: dict, seed: int | None = None, mode: str | None = None,
                       message: str | None = None) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a mapping")
    try:
        enc_d = _require(d, "encoding", "")
        encoding = EncodingParams(**{k: int(_require(enc_d, k, "encoding."))
                                     for k in ("bin_width", "bins_per_slot", "slots_per_frame")})
        seed = int(seed if seed is not None else _require(d, "seed", ""))
        src_d = _require(d, "source", "")
        source = SourceParams(
            **{k: float(_require(src_d, k, "source."))
               for k in ("pair_rate", "duration", "alice_efficiency", "idler_efficiency",
                         "jitter_sigma", "dark_count_rate")},
            seed=seed,
        )
        pert_d = _require(d, "perturbation", "")
        perts = {}
        for chan in ("X", "Y"):
            p = _require(pert_d, chan, "perturbation.")
            perts[chan] = ChannelPerturbation(
                float(_require(p, "eavesdrop_fraction", f"perturbation.{chan}.")),
                float(_require(p, "intrinsic_slot_error", f"perturbation.{chan}.")),
            )
        chi = _require(d, "chi", "")
        th = _require(d, "thresholds", "")
        if th == "optimize":
            thresholds = None
        elif isinstance(th, dict):
            thresholds = (float(_require(th, "Th_B", "thresholds.")), float(_require(th, "Th_C", "thresholds.")))
        else:
            raise ScenarioError("thresholds must be 'optimize' or a mapping with Th_B and Th_C")
        att = d.get("attack") or {}
        attack = AttackSettings(**{
            k: tuple(v) if isinstance(v, list) else v for k, v in att.items()
        })
        eps = d.get("epsilon_target")
        sc = Scenario(
            encoding=encoding,
            source=source,
            perturbation_x=perts["X"],
            perturbation_y=perts["Y"],
            disclose_fraction=float(_require(d, "disclose_fraction", "")),
            chi_x=float(_require(chi, "X", "chi.")),
            chi_y=float(_require(chi, "Y", "chi.")),
            e_ref=float(_require(d, "e_ref", "")),
            message=str(message if message is not None else d.get("message", "")),
            thresholds=thresholds,
            mode=str(mode if mode is not None else d.get("mode", "honest")),
            seed=seed,
            abort_sigmas=float(d.get("abort_sigmas", 5.0)),
            epsilon_target=None if eps is None else float(eps),
            attack=attack,
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from None
    sc.validate()
    return sc


def load_scenario(path, **overrides) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML: {exc}") from None
    return scenario_from_dict(data, **overrides)


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(sc.to_dict(), sort_keys=True)


def reference_scenario(mode: str = "honest", message: str = "1010101010", seed: int = 1,
                   duration: float = 2.0) -> Scenario:
    from .operating import REFERENCE_ERROR_RATE, REFERENCE_P_E, reference_operating_point

    op = reference_operating_point(duration=duration, seed=seed)
    return Scenario(
        encoding=op.encoding,
        source=op.source,
        perturbation_x=op.perturbation_x,
        perturbation_y=op.perturbation_y,
        disclose_fraction=op.disclose_fraction,
        chi_x=1.0 - REFERENCE_P_E,
        chi_y=1.0 - REFERENCE_P_E,
        e_ref=REFERENCE_ERROR_RATE,
        message=message,
        thresholds=(0.1410, 0.3474),
        mode=mode,
        seed=seed,
        epsilon_target=1e-4,
    )


# -- record files ------------------------------------------------------------------


def records_digest(rec: EncodedRecords) -> str:
    h = hashlib.sha256()
    h.update(repr(asdict(rec.params)).encode())
    for p in PARTIES:
        for arr in (rec.frames[p], rec.slots[p], rec.bins[p]):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
    return h.hexdigest()


def write_records(path, rec: EncodedRecords, seed: int) -> None:
    p = rec.params
    total = sum(rec.count(q) for q in PARTIES)
    with open(path, "w") as fh:
        fh.write(f"{RECORD_MAGIC}\n")
        fh.write(f"# bin_width={p.bin_width}\n# bins_per_slot={p.bins_per_slot}\n")
        fh.write(f"# slots_per_frame={p.slots_per_frame}\n# seed={seed}\n")
        fh.write("party frame slot bin\n")
        for party in PARTIES:
            f, s, b = rec.frames[party], rec.slots[party], rec.bins[party]
            fh.writelines(f"{party} {x} {y} {z}\n" for x, y, z in zip(f.tolist(), s.tolist(), b.tolist()))
        fh.write(f"# end count={total}\n")


def read_records(path) -> tuple[EncodedRecords, int]:
    """Parse a record file; schema violations raise :class:`RecordFileError` with a line number."""
    header: dict[str, int] = {}
    rows = {p: [] for p in PARTIES}
    end_count = None
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != RECORD_MAGIC:
        raise RecordFileError(1, f"expected {RECORD_MAGIC!r}")
    i = 1
    while i < len(lines) and lines[i].startswith("# ") and "=" in lines[i]:
        key, _, val = lines[i][2:].partition("=")
        try:
            header[key.strip()] = int(val)
        except ValueError:
            raise RecordFileError(i + 1, f"header value for {key!r} is not an integer") from None
        i += 1
    for key in ("bin_width", "bins_per_slot", "slots_per_frame", "seed"):
        if key not in header:
            raise RecordFileError(i + 1, f"header lacks {key}")
    try:
        params = EncodingParams(header["bin_width"], header["bins_per_slot"], header["slots_per_frame"])
    except ValueError as exc:
        raise RecordFileError(i, str(exc)) from None
    if i >= len(lines) or lines[i].split() != ["party", "frame", "slot", "bin"]:
        raise RecordFileError(i + 1, "expected column header 'party frame slot bin'")
    i += 1
    n = 0
    for lineno in range(i + 1, len(lines) + 1):
        line = lines[lineno - 1]
        if line.startswith("# end"):
            _, _, val = line.partition("count=")
            try:
                end_count = int(val)
            except ValueError:
                raise RecordFileError(lineno, "malformed end marker") from None
            if lineno != len(lines):
                raise RecordFileError(lineno + 1, "content after end marker")
            break
        parts = line.split()
        if len(parts) != 4:
            raise RecordFileError(lineno, f"expected 4 fields, got {len(parts)}")
        party = parts[0]
        if party not in rows:
            raise RecordFileError(lineno, f"unknown party {party!r}")
        try:
            frame, slot, b = int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError:
            raise RecordFileError(lineno, "frame, slot and bin must be integers") from None
        if frame < 0 or not 0 <= slot < params.slots_per_frame or not 0 <= b < params.bins_per_slot:
            raise RecordFileError(lineno, f"record ({frame}, {slot}, {b}) out of range")
        rows[party].append((frame, slot, b))
        n += 1
    if end_count is None:
        raise RecordFileError(len(lines) + 1, "missing end marker (truncated file?)")
    if end_count != n:
        raise RecordFileError(len(lines), f"end marker counts {end_count} records, file has {n}")
    frames, slots, bins = {}, {}, {}
    for party in PARTIES:
        arr = np.asarray(rows[party], dtype=np.int64).reshape(-1, 3)
        order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 0]))
        arr = arr[order]
        frames[party], slots[party], bins[party] = arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()
    return EncodedRecords(params, frames, slots, bins), header["seed"]
