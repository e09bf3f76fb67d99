#!/usr/bin/env python3
"""Test double speaking the scorer line protocol.

score = sha256(prompt, decoded RGB pixels) mapped to [0, 1), so path and
inline requests for the same pixels agree.
"""
import argparse
import base64
import hashlib
import io
import json
import os
import select
import sys

from PIL import Image


def parse_args():
    p = argparse.ArgumentParser()
    p.add_argument("--version", type=int, default=1)
    p.add_argument("--name", default="mock")
    p.add_argument("--fatal", help="reply fatal to the handshake with this message")
    p.add_argument("--crash-after", type=int, default=-1, help="exit after this many score requests")
    p.add_argument("--nan-prompt", help="answer NaN for this prompt")
    p.add_argument("--fail-prompt", help="answer an error for this prompt")
    p.add_argument("--reverse", action="store_true", help="answer queued requests newest first")
    p.add_argument("--log", help="append each request line to this file")
    p.add_argument("--constant", type=float, help="always answer this score")
    return p.parse_args()


class Lines:
    def __init__(self):
        self.fd = sys.stdin.fileno()
        self.buf = b""

    def next(self, timeout=None):
        """One line, or None on timeout, or b"" at end of input."""
        while b"\n" not in self.buf:
            if timeout is not None:
                ready, _, _ = select.select([self.fd], [], [], timeout)
                if not ready:
                    return None
            chunk = os.read(self.fd, 65536)
            if not chunk:
                rest, self.buf = self.buf, b""
                return rest
            self.buf += chunk
        line, self.buf = self.buf.split(b"\n", 1)
        return line + b"\n"


def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def pixels(req):
    if "image_b64" in req:
        img = Image.open(io.BytesIO(base64.b64decode(req["image_b64"])))
    else:
        img = Image.open(req["image_path"])
    return img.convert("RGB").tobytes()


def main():
    args = parse_args()
    lines = Lines()
    hello = json.loads(lines.next())
    if args.fatal:
        send({"op": "fatal", "message": args.fatal})
        return 2
    if hello.get("op") != "hello":
        send({"op": "fatal", "message": "expected hello"})
        return 2
    send({"op": "hello", "version": args.version, "name": args.name})

    held = []
    scored = 0
    while True:
        line = lines.next(timeout=0.05 if held else None)
        if line is None:
            while held:
                sys.stdout.write(held.pop())
            sys.stdout.flush()
            continue
        if not line.strip():
            return 0
        if args.log:
            with open(args.log, "a") as f:
                f.write(line.decode())
        req = json.loads(line)
        op = req.get("op")
        if op == "bye":
            return 0
        if op != "score":
            send({"op": "error", "id": req.get("id"), "message": f"unknown op {op!r}"})
            continue
        scored += 1
        if args.crash_after >= 0 and scored > args.crash_after:
            sys.stderr.write("mock scorer crashing\n")
            os._exit(1)
        rid = req.get("id")
        prompt = req.get("prompt")
        if prompt is None:
            reply = {"op": "error", "id": rid, "message": "missing prompt"}
        elif prompt == args.fail_prompt:
            reply = {"op": "error", "id": rid, "message": f"cannot score {prompt!r}"}
        elif prompt == args.nan_prompt:
            reply = None
        elif args.constant is not None:
            reply = {"op": "result", "id": rid, "score": args.constant}
        else:
            digest = hashlib.sha256(prompt.encode() + b"\0" + pixels(req)).digest()
            reply = {"op": "result", "id": rid, "score": int.from_bytes(digest[:8], "big") / 2.0**64}
        text = f'{{"op": "result", "id": {rid}, "score": NaN}}\n' if reply is None else json.dumps(reply) + "\n"
        if args.reverse:
            held.append(text)
        else:
            sys.stdout.write(text)
            sys.stdout.flush()


if __name__ == "__main__":
    sys.exit(main())
