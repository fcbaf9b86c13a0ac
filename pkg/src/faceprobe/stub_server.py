"""Line-delimited JSON embedding server exposing the built-in stub.

Speaks the external-recognizer wire contract on stdin/stdout: one request
object per line, one response per line, strictly in order. Run with
``python -m faceprobe.stub_server``. Any per-request failure is reported
as an ``{"error": ...}`` response rather than a crash, so a bad path never
kills the process.
"""

from __future__ import annotations

import json
import sys

from .images import read_image
from .recognize import embed_stub


def handle_line(line: str) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"error": f"malformed request: {exc}"}
    if not isinstance(request, dict) or request.get("op") != "embed":
        return {"error": f"unsupported request {request!r}; expected op 'embed'"}
    path = request.get("image")
    if not isinstance(path, str) or not path:
        return {"error": "request lacks an 'image' path"}
    try:
        embedding = embed_stub(read_image(path))
    except Exception as exc:  # report, never crash the stream
        return {"error": f"{type(exc).__name__}: {exc}"}
    return {"embedding": embedding.tolist()}


def main() -> int:
    for line in sys.stdin:
        if not line.strip():
            continue
        response = handle_line(line)
        sys.stdout.write(json.dumps(response, separators=(",", ":")) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
