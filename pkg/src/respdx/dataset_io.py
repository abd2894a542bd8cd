"""On-disk dataset layout: participants.csv, one signal CSV per session, manifest.json."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .session import BreathSession, Phase, TestKind
from .signal import read_signal_csv, write_signal_csv
from .synth import Dataset, Participant

MANIFEST = "manifest.json"
PARTICIPANTS = "participants.csv"


def session_filename(pid: str, kind: TestKind) -> str:
    return f"{pid}_{kind.value}.csv"


def write_dataset(ds: Dataset, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / PARTICIPANTS, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "group", "age", "gender", "bmi"])
        for p in ds.participants:
            w.writerow([p.id, p.group, repr(p.age), p.gender, repr(p.bmi)])
    entries = []
    for (pid, kind), sess in ds.sessions.items():
        name = session_filename(pid, kind)
        write_signal_csv(sess.raw, out / name)
        entries.append({"file": name, "participant": pid, "test_kind": kind.value,
                        "session_id": sess.session_id, "seed": ds.seeds.get(sess.session_id),
                        "phases": [[ph.label, ph.start, ph.stop] for ph in sess.phases]})
    manifest = {"participants": PARTICIPANTS, "sessions": entries, "spec": ds.spec}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def read_participants(path: str | Path) -> list[Participant]:
    with open(path, newline="") as fh:
        return [Participant(r["id"], r["group"], float(r["age"]), int(r["gender"]), float(r["bmi"]))
                for r in csv.DictReader(fh)]


def read_dataset(in_dir: str | Path) -> Dataset:
    root = Path(in_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    participants = read_participants(root / PARTICIPANTS)
    manifest_path = root / MANIFEST
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        entries = manifest["sessions"]
        spec = manifest.get("spec", {})
    else:
        entries = [{"file": session_filename(p.id, k), "participant": p.id, "test_kind": k.value}
                   for p in participants for k in TestKind
                   if (root / session_filename(p.id, k)).exists()]
        spec = {}
    sessions, seeds = {}, {}
    for e in entries:
        kind = TestKind(e["test_kind"])
        series = read_signal_csv(root / e["file"])
        phases = [Phase(a, int(b), int(c)) for a, b, c in e.get("phases", [])]
        sid = e.get("session_id", f"{e['participant']}_{kind.value}")
        sessions[(e["participant"], kind)] = BreathSession(sid, e["participant"], kind, series, phases)
        if e.get("seed") is not None:
            seeds[sid] = e["seed"]
    return Dataset(participants, sessions, seeds, spec)
