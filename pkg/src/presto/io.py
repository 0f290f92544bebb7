"""Small file helpers: atomic writes, CSV text and content hashes."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from typing import Sequence


def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to a temp file next to ``path``, then rename over it."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def dump_json(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def content_hash(*chunks: bytes) -> str:
    """Git-style blob hash (sha1 over a length header and the bytes)."""
    data = b"".join(chunks)
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_hash(path: str) -> str:
    with open(path, "rb") as f:
        return content_hash(f.read())
