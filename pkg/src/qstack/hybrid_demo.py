"""Minimal hybrid loop for session testing: sample, nudge an angle, repeat.

Run by the engine inside a session; reads SESSION_URL and SESSION_TOKEN
from the environment and submits sampling sub-jobs against the lease.
Three iterations of a one-qubit ry rotation climbing toward P(1) = 1.
"""

from __future__ import annotations

import math
import os
import sys

import httpx


def rotation_qasm(theta: float) -> str:
    return (
        "OPENQASM 3;\n"
        'include "stdgates.inc";\n'
        "qubit[1] q;\n"
        "bit[1] c;\n"
        f"ry({theta!r}) q[0];\n"
        "c[0] = measure q[0];\n"
    )


def main() -> int:
    url = os.environ.get("SESSION_URL")
    token = os.environ.get("SESSION_TOKEN")
    if not url or not token:
        print("SESSION_URL and SESSION_TOKEN must be set", file=sys.stderr)
        return 2
    shots = int(os.environ.get("DEMO_SHOTS", "500"))
    iterations = int(os.environ.get("DEMO_ITERATIONS", "3"))
    theta = float(os.environ.get("DEMO_THETA", "0.5"))
    step = 0.4

    client = httpx.Client(headers={"Authorization": f"Bearer {token}"}, timeout=60.0)
    for i in range(iterations):
        body = {
            "job_type": "sampling",
            "name": f"hybrid-iter-{i}",
            "shots": shots,
            "payload": {"qasm": rotation_qasm(theta)},
            "options": {"seed": 1000 + i},
        }
        resp = client.post(f"{url}/jobs", json=body)
        resp.raise_for_status()
        job = resp.json()
        if job["status"] != "succeeded":
            print(f"iteration {i} failed: {job.get('error_message')}", file=sys.stderr)
            return 1
        counts = job["result"]["counts"]
        p1 = counts.get("1", 0) / shots
        print(f"iteration {i}: theta={theta:.4f} p1={p1:.3f}")
        # climb toward p1 = 1 (optimum at theta = pi)
        theta = min(theta + step * (1.0 - p1) * math.pi, math.pi)
    return 0


if __name__ == "__main__":
    sys.exit(main())
