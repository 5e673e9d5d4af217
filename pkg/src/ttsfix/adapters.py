"""Out-of-process evaluator/editor backends over line-delimited JSON.

The parent writes one request object per line to the child's stdin and
reads exactly one response line from its stdout::

    -> {"op": "evaluate", "track": {...}, "target": "...", "sample_id": 3, "call_id": 0}
    <- {"transcript": "...", "scope": [[s, e], ...], "quality": 8.7}

    -> {"op": "edit", "track": {...}, "mask": [[s, e], ...], "target": "...", "sample_id": 3, "call_id": 0}
    <- {"track": {...}}

A response carrying an ``"error"`` key is raised as :class:`AdapterError`.
``track`` uses the track file layout from :mod:`ttsfix.records`.

Running ``python -m ttsfix.adapters --config cfg.json`` serves the
simulated backends through this protocol.
"""
from __future__ import annotations

import argparse
import json
import queue
import subprocess
import sys
import threading
from typing import Sequence

from .core import SpeechTrack, TextSequence, TimeScope
from .correction import EvaluationReport
from .errors import AdapterError
from .records import (dumps, report_from_dict, report_to_dict, scope_from_json, scope_to_json,
                      track_from_dict, track_to_dict)


class ProcessBackend:
    """One child process answering evaluate/edit requests in order."""

    def __init__(self, argv: Sequence[str], timeout: float = 30.0):
        self.argv = list(argv)
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()

    def _start(self):
        self._proc = subprocess.Popen(self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      text=True, encoding="utf-8", bufsize=1)
        # a fresh queue per child so a dead child's end-of-stream never reaches its successor
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()

    @staticmethod
    def _pump(stream, lines):
        for line in stream:
            lines.put(line)
        lines.put(None)

    def request(self, payload: dict) -> dict:
        if self._proc is None:
            self._start()
        try:
            self._proc.stdin.write(dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise AdapterError(f"backend {self.argv[0]!r} is gone: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close()
            raise AdapterError(f"backend timed out after {self.timeout} s") from None
        if line is None:
            # reaped here; the next request starts a new child
            self.close()
            raise AdapterError("backend closed its output")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AdapterError(f"malformed response: {exc.msg}") from None
        if "error" in resp:
            raise AdapterError(str(resp["error"]))
        return resp

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ProcessEvaluator:
    def __init__(self, backend: ProcessBackend, sample_id: int = 0):
        self.backend = backend
        self.sample_id = sample_id
        self.calls = 0

    def evaluate(self, track: SpeechTrack, target: TextSequence) -> EvaluationReport:
        resp = self.backend.request({"op": "evaluate", "track": track_to_dict(track), "target": str(target),
                                     "sample_id": self.sample_id, "call_id": self.calls})
        self.calls += 1
        try:
            return report_from_dict(resp)
        except (KeyError, TypeError, ValueError) as exc:
            raise AdapterError(f"bad evaluate response: {exc}") from None


class ProcessEditor:
    def __init__(self, backend: ProcessBackend, sample_id: int = 0):
        self.backend = backend
        self.sample_id = sample_id
        self.calls = 0

    def edit(self, track: SpeechTrack, mask: TimeScope, target: TextSequence) -> SpeechTrack:
        resp = self.backend.request({"op": "edit", "track": track_to_dict(track), "mask": scope_to_json(mask),
                                     "target": str(target), "sample_id": self.sample_id, "call_id": self.calls})
        self.calls += 1
        try:
            return track_from_dict(resp["track"])
        except (KeyError, TypeError, ValueError) as exc:
            raise AdapterError(f"bad edit response: {exc}") from None


def handle(request: dict, config) -> dict:
    """Answer one protocol request with the simulated backends."""
    from .sim import simulate_editor, simulate_evaluator

    track = track_from_dict(request["track"])
    target = TextSequence.from_text(request["target"])
    sid, cid = int(request.get("sample_id", 0)), int(request.get("call_id", 0))
    if request.get("op") == "evaluate":
        return report_to_dict(simulate_evaluator(track, target, None, config, cid, sid))
    if request.get("op") == "edit":
        mask = scope_from_json(request["mask"])
        return {"track": track_to_dict(simulate_editor(track, mask, target, config, cid, sid))}
    raise ValueError(f"unknown op {request.get('op')!r}")


def serve(config, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            resp = handle(json.loads(line), config)
        except Exception as exc:
            resp = {"error": f"{type(exc).__name__}: {exc}"}
        stdout.write(dumps(resp) + "\n")
        stdout.flush()


def main(argv=None) -> None:
    from . import config as run_config

    parser = argparse.ArgumentParser(description="serve simulated evaluator/editor over stdin/stdout")
    parser.add_argument("--config", help="run configuration JSON (its 'seed' and 'sim' sections are used)")
    args = parser.parse_args(argv)
    serve(run_config.sim_config(run_config.resolve(args.config)))


if __name__ == "__main__":
    main()
