"""Time-tag file formats.

Binary ``TTAG0001`` layout (all little-endian)::

    bytes 0..7    magic b"TTAG0001"
    bytes 8..15   uint64 acquisition duration in ps
    then records of 10 bytes: uint16 channel id, uint64 time in ps

JSONL: a header line ``{"magic": "TTAG0001", "duration_ps": N}`` followed by
one ``{"channel": c, "time_ps": t}`` object per tag.

CSV: a comment line ``# duration_ps = N``, the header ``channel,time_ps``,
then one row per tag.
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .sim import TagStream

MAGIC = b"TTAG0001"
HEADER_SIZE = 16
RECORD = np.dtype([("channel", "<u2"), ("time", "<u8")])


def write_ttag(path, stream: TagStream) -> Path:
    path = Path(path)
    rec = np.empty(len(stream), dtype=RECORD)
    rec["channel"] = stream.channel
    rec["time"] = stream.time
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint64(stream.duration_ps).astype("<u8").tobytes())
        fh.write(rec.tobytes())
    return path


def read_ttag(path) -> TagStream:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise SchemaError("not a TTAG0001 file", str(path))
    body = raw[HEADER_SIZE:]
    if len(body) % RECORD.itemsize:
        raise SchemaError("truncated record", str(path))
    duration = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    rec = np.frombuffer(body, dtype=RECORD)
    return TagStream(rec["channel"].astype(np.uint16), rec["time"].astype(np.int64), duration)


def write_jsonl(path, stream: TagStream) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(json.dumps({"magic": MAGIC.decode(), "duration_ps": int(stream.duration_ps)}) + "\n")
        for c, t in zip(stream.channel.tolist(), stream.time.tolist()):
            fh.write(f'{{"channel": {c}, "time_ps": {t}}}\n')
    return path


def read_jsonl(path) -> TagStream:
    chans, times = [], []
    duration = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "magic" in obj:
                duration = int(obj["duration_ps"])
                continue
            try:
                chans.append(int(obj["channel"]))
                times.append(int(obj["time_ps"]))
            except KeyError as exc:
                raise SchemaError(f"line {lineno} missing {exc}", str(path)) from None
    t = np.array(times, dtype=np.int64)
    if duration is None:
        duration = int(t.max()) + 1 if len(t) else 0
    return TagStream(np.array(chans, dtype=np.uint16), t, duration)


def write_tag_csv(path, stream: TagStream) -> Path:
    path = Path(path)
    body = np.column_stack([stream.channel.astype(np.int64), stream.time])
    with open(path, "w") as fh:
        fh.write(f"# duration_ps = {int(stream.duration_ps)}\nchannel,time_ps\n")
        np.savetxt(fh, body, fmt="%d", delimiter=",")
    return path


def read_tag_csv(path) -> TagStream:
    duration = None
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("#") and "duration_ps" in first:
            duration = int(first.split("=", 1)[1])
        elif first.strip() != "channel,time_ps":
            raise SchemaError("expected header channel,time_ps", str(path))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # header-only file
        data = np.loadtxt(path, delimiter=",", comments="#",
                          skiprows=2 if duration is not None else 1, dtype=np.int64, ndmin=2)
    chan = data[:, 0].astype(np.uint16) if len(data) else np.zeros(0, np.uint16)
    t = data[:, 1] if len(data) else np.zeros(0, np.int64)
    if duration is None:
        duration = int(t.max()) + 1 if len(t) else 0
    return TagStream(chan, t, duration)


TAG_WRITERS = {"ttag": (write_ttag, "tags.ttag"), "jsonl": (write_jsonl, "tags.jsonl"),
               "csv": (write_tag_csv, "tags.csv")}


def read_tags(path) -> TagStream:
    """Dispatch on content: binary magic, JSONL or CSV."""
    path = Path(path)
    if not path.is_file():
        raise SchemaError("tag file not found", str(path))
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == MAGIC:
        return read_ttag(path)
    if head.lstrip().startswith(b"{"):
        return read_jsonl(path)
    return read_tag_csv(path)


def format_value(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_stats(path, stats: dict) -> Path:
    """``key = value`` lines in insertion order."""
    path = Path(path)
    path.write_text("".join(f"{k} = {format_value(v)}\n" for k, v in stats.items()))
    return path


def read_stats(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line and not line.lstrip().startswith(("#", "[")):
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def run_summary_text(stream: TagStream, config_text: str) -> str:
    s = stream.summary
    lines = ["[summary]", f"seed = {s.seed}", f"mode = {s.mode}",
             f"duration_s = {s.duration_s!r}", f"pair_rate_hz = {s.pair_rate_hz!r}",
             f"total_tags = {s.total}", "", "[counts]"]
    lines += [f"channel_{cid} = {n}" for cid, n in sorted(s.counts.items())]
    lines += ["", "[dark_counts]"]
    lines += [f"channel_{cid} = {n}" for cid, n in sorted(s.dark_counts.items())]
    lines += ["", "# configuration echo", config_text.rstrip(), ""]
    return "\n".join(lines)
