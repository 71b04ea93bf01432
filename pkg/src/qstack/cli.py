"""Command-line client for the stack's HTTP API.

Configuration precedence: flags > environment (QSTACK_URL, QSTACK_API_KEY)
> config file (QSTACK_CONFIG or ~/.qstack.json, JSON with "url" and
"api_key"). Exit codes: 0 success, 1 job failed, 2 usage error, 3
network/auth failure.
"""

from __future__ import annotations

import json
import os
import pathlib
import sys
import time

import click
import httpx

from .operators import OperatorError, parse_operator

EXIT_JOB_FAILED = 1
EXIT_USAGE = 2
EXIT_NETWORK = 3

POLL_START = 0.5
POLL_CAP = 5.0


def _load_config_file() -> dict:
    path = os.environ.get("QSTACK_CONFIG") or os.path.expanduser("~/.qstack.json")
    try:
        return json.loads(pathlib.Path(path).read_text())
    except (OSError, ValueError):
        return {}


class Client:
    def __init__(self, url: str | None, api_key: str | None):
        cfg = _load_config_file()
        self.url = url or os.environ.get("QSTACK_URL") or cfg.get("url")
        self.api_key = api_key or os.environ.get("QSTACK_API_KEY") or cfg.get("api_key")
        if not self.url:
            raise click.UsageError("no server URL: pass --url or set QSTACK_URL")
        self._http = httpx.Client(
            base_url=self.url.rstrip("/"),
            headers={"Authorization": f"Bearer {self.api_key}"} if self.api_key else {},
            timeout=60.0,
        )

    def request(self, method: str, path: str, **kwargs) -> httpx.Response:
        try:
            resp = self._http.request(method, path, **kwargs)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach server: {exc}", err=True)
            sys.exit(EXIT_NETWORK)
        if resp.status_code in (401, 403):
            detail = _detail(resp)
            click.echo(f"error: unauthorized: {detail}", err=True)
            sys.exit(EXIT_NETWORK)
        return resp


def _detail(resp: httpx.Response) -> str:
    try:
        return resp.json().get("detail", resp.text)
    except ValueError:
        return resp.text


def _fail(resp: httpx.Response, exit_code: int = EXIT_JOB_FAILED):
    click.echo(f"error: {_detail(resp)}", err=True)
    sys.exit(exit_code)


def print_histogram(counts: dict, shots: int, indent: str = "  "):
    if not counts:
        click.echo(indent + "(no counts)")
        return
    width = max(len(k) for k in counts)
    peak = max(counts.values())
    for key in sorted(counts):
        n = counts[key]
        bar = "#" * max(1, round(40 * n / peak)) if n else ""
        click.echo(f"{indent}{key.rjust(width)}  {n:>8}  {bar}  {n / shots:.1%}")


def wait_for_job(client: Client, job_id: str) -> dict:
    delay = POLL_START
    while True:
        resp = client.request("GET", f"/jobs/{job_id}")
        if resp.status_code != 200:
            _fail(resp, EXIT_NETWORK)
        job = resp.json()
        if job["status"] in ("succeeded", "failed", "cancelled"):
            return job
        time.sleep(delay)
        delay = min(delay * 2, POLL_CAP)


def _finish_job(client: Client, job_id: str, wait: bool, as_json: bool, render) -> None:
    if not wait:
        click.echo(job_id)
        return
    job = wait_for_job(client, job_id)
    if as_json:
        resp = client.request("GET", f"/jobs/{job_id}")
        click.echo(resp.text)
    if job["status"] != "succeeded":
        if not as_json:
            click.echo(f"job {job_id} {job['status']}: {job.get('error_message') or ''}", err=True)
        sys.exit(EXIT_JOB_FAILED)
    if not as_json:
        render(job)


def _job_options(transpiler: str | None, mitigation: bool, seed: int | None) -> dict:
    options: dict = {}
    if transpiler:
        options["transpiler"] = {"name": transpiler}
    if mitigation:
        options["mitigation"] = {"readout": "pseudo_inverse"}
    if seed is not None:
        options["seed"] = seed
    return options


@click.group()
@click.option("--url", default=None, envvar=None, help="Server base URL.")
@click.option("--api-key", default=None, envvar=None, help="API key.")
@click.pass_context
def main(ctx, url, api_key):
    """Client for a self-hosted quantum computing service."""
    ctx.obj = {"url": url, "api_key": api_key}


def _client(ctx) -> Client:
    return Client(ctx.obj["url"], ctx.obj["api_key"])


@main.command()
@click.option("--qasm", "qasm_file", required=True, type=click.Path(exists=True))
@click.option("--device", "device_id", required=True)
@click.option("--shots", required=True, type=click.IntRange(min=1))
@click.option("--name", default="")
@click.option("--description", default="")
@click.option("--transpiler", default=None)
@click.option("--mitigation", is_flag=True, default=False)
@click.option("--seed", default=None, type=int)
@click.option("--wait", is_flag=True, default=False)
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_context
def sample(ctx, qasm_file, device_id, shots, name, description, transpiler, mitigation,
           seed, wait, as_json):
    """Submit a sampling job; with --wait, print a histogram of counts."""
    client = _client(ctx)
    body = {
        "device_id": device_id,
        "job_type": "sampling",
        "name": name,
        "description": description,
        "shots": shots,
        "payload": {"qasm": pathlib.Path(qasm_file).read_text()},
        "options": _job_options(transpiler, mitigation, seed),
    }
    resp = client.request("POST", "/jobs", json=body)
    if resp.status_code != 201:
        _fail(resp)
    job_id = resp.json()["job_id"]

    def render(job):
        result = job["result"]
        click.echo(f"job {job_id} succeeded ({result['shots']} shots)")
        print_histogram(result["counts"], result["shots"])
        if "counts_mitigated" in result:
            click.echo("mitigated:")
            print_histogram(
                {k: v for k, v in result["counts_mitigated"].items()}, result["shots"]
            )

    _finish_job(client, job_id, wait, as_json, render)


@main.command()
@click.option("--qasm", "qasm_file", required=True, type=click.Path(exists=True))
@click.option("--operator", "operator_file", required=True, type=click.Path(exists=True))
@click.option("--device", "device_id", required=True)
@click.option("--shots", required=True, type=click.IntRange(min=1))
@click.option("--name", default="")
@click.option("--description", default="")
@click.option("--transpiler", default=None)
@click.option("--mitigation", is_flag=True, default=False)
@click.option("--seed", default=None, type=int)
@click.option("--wait", is_flag=True, default=False)
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_context
def estimate(ctx, qasm_file, operator_file, device_id, shots, name, description,
             transpiler, mitigation, seed, wait, as_json):
    """Submit an expectation-value estimation job."""
    client = _client(ctx)
    try:
        pairs = json.loads(pathlib.Path(operator_file).read_text())
        parse_operator(pairs)  # local diagnostics before any network call
    except (ValueError, OperatorError) as exc:
        raise click.UsageError(f"bad operator file: {exc}")
    body = {
        "device_id": device_id,
        "job_type": "estimation",
        "name": name,
        "description": description,
        "shots": shots,
        "payload": {"qasm": pathlib.Path(qasm_file).read_text(), "operator": pairs},
        "options": _job_options(transpiler, mitigation, seed),
    }
    resp = client.request("POST", "/jobs", json=body)
    if resp.status_code != 201:
        _fail(resp)
    job_id = resp.json()["job_id"]

    def render(job):
        result = job["result"]
        click.echo(f"value: {result['value']}")
        for group in result["per_group"]:
            click.echo(f"  basis [{group['basis']}]  shots {group['shots']}")
            for term in group["terms"]:
                click.echo(
                    f"    {term['pauli']}: coefficient {term['coefficient']}, "
                    f"expectation {term['expectation']:+.4f}"
                )

    _finish_job(client, job_id, wait, as_json, render)


@main.command()
@click.option("--qasm", "qasm_files", required=True, multiple=True, type=click.Path(exists=True))
@click.option("--device", "device_id", required=True)
@click.option("--shots", required=True, type=click.IntRange(min=1))
@click.option("--name", default="")
@click.option("--transpiler", default=None)
@click.option("--mitigation", is_flag=True, default=False)
@click.option("--seed", default=None, type=int)
@click.option("--wait", is_flag=True, default=False)
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_context
def multi(ctx, qasm_files, device_id, shots, name, transpiler, mitigation, seed, wait, as_json):
    """Run several circuits side by side on disjoint regions of one device."""
    client = _client(ctx)
    body = {
        "device_id": device_id,
        "job_type": "multi_manual",
        "name": name,
        "shots": shots,
        "payload": {"circuits": [pathlib.Path(f).read_text() for f in qasm_files]},
        "options": _job_options(transpiler, mitigation, seed),
    }
    resp = client.request("POST", "/jobs", json=body)
    if resp.status_code != 201:
        _fail(resp)
    job_id = resp.json()["job_id"]

    def render(job):
        result = job["result"]
        for i, counts in enumerate(result["results"]):
            click.echo(f"circuit {i}:")
            print_histogram(counts, result["shots"])

    _finish_job(client, job_id, wait, as_json, render)


@main.group()
def jobs():
    """Inspect and manage jobs."""


@jobs.command("list")
@click.option("--status", default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_context
def jobs_list(ctx, status, as_json):
    client = _client(ctx)
    params = {"owner": "me"}
    if status:
        params["status"] = status
    resp = client.request("GET", "/jobs", params=params)
    if resp.status_code != 200:
        _fail(resp, EXIT_NETWORK)
    if as_json:
        click.echo(resp.text)
        return
    for job in resp.json():
        click.echo(f"{job['id']}  {job['status']:<10} {job['job_type']:<12} "
                   f"{job['device_id']:<12} {job['name']}")


@jobs.command("show")
@click.argument("job_id")
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_context
def jobs_show(ctx, job_id, as_json):
    client = _client(ctx)
    resp = client.request("GET", f"/jobs/{job_id}")
    if resp.status_code != 200:
        _fail(resp, EXIT_NETWORK)
    if as_json:
        click.echo(resp.text)
        return
    job = resp.json()
    for field in ("id", "status", "job_type", "device_id", "name", "shots",
                  "submitted_at", "started_at", "ended_at"):
        click.echo(f"{field}: {job[field]}")
    if job.get("error_message"):
        click.echo(f"error_message: {job['error_message']}")
    if job.get("result"):
        click.echo("result:")
        click.echo(json.dumps(job["result"], indent=2))


@jobs.command("cancel")
@click.argument("job_id")
@click.pass_context
def jobs_cancel(ctx, job_id):
    client = _client(ctx)
    resp = client.request("POST", f"/jobs/{job_id}/cancel")
    if resp.status_code != 200:
        _fail(resp)
    click.echo(f"{job_id} cancelled")


@main.group()
def devices():
    """Inspect registered devices."""


@devices.command("list")
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_context
def devices_list(ctx, as_json):
    client = _client(ctx)
    resp = client.request("GET", "/devices")
    if resp.status_code != 200:
        _fail(resp, EXIT_NETWORK)
    if as_json:
        click.echo(resp.text)
        return
    for dev in resp.json():
        click.echo(f"{dev['id']}  {dev['n_qubits']} qubits  {dev['status']}  "
                   f"calibrated {dev.get('calibrated_at')}")


@devices.command("show")
@click.argument("device_id")
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_context
def devices_show(ctx, device_id, as_json):
    client = _client(ctx)
    resp = client.request("GET", f"/devices/{device_id}")
    if resp.status_code != 200:
        _fail(resp, EXIT_NETWORK)
    if as_json:
        click.echo(resp.text)
        return
    dev = resp.json()
    click.echo(f"id: {dev['id']}")
    click.echo(f"n_qubits: {dev['n_qubits']}")
    click.echo(f"status: {dev['status']}")
    click.echo(f"basis_gates: {' '.join(dev['basis_gates'])}")
    click.echo(f"edges: {' '.join(f'{a}-{b}' for a, b in dev['edges'])}")
    click.echo("readout_errors:")
    for q, err in enumerate(dev["readout_errors"]):
        click.echo(f"  q{q}: eps01={err['eps01']} eps10={err['eps10']}")
    click.echo(f"calibrated_at: {dev.get('calibrated_at')}")


@main.group()
def session():
    """Exclusive device sessions for hybrid programs."""


@session.command("run")
@click.option("--manifest", "manifest_file", required=True, type=click.Path(exists=True))
@click.option("--device", "device_id", required=True)
@click.option("--ttl", default=None, type=float, help="Lease inactivity timeout in seconds.")
@click.pass_context
def session_run(ctx, manifest_file, device_id, ttl):
    """Open a session, run the manifest's program server-side, stream its sub-jobs."""
    client = _client(ctx)
    try:
        manifest = json.loads(pathlib.Path(manifest_file).read_text())
    except ValueError as exc:
        raise click.UsageError(f"bad manifest file: {exc}")
    body = {"device_id": device_id, "manifest": manifest}
    if ttl:
        body["ttl_seconds"] = ttl
    resp = client.request("POST", "/sessions", json=body)
    if resp.status_code != 201:
        _fail(resp)
    opened = resp.json()
    session_id, job_id = opened["session_id"], opened["job_id"]
    click.echo(f"session {session_id} queued (job {job_id})")

    seen = 0
    delay = POLL_START
    while True:
        job = client.request("GET", f"/jobs/{job_id}").json()
        lease = client.request("GET", f"/sessions/{session_id}").json()
        for sub_id in lease["sub_jobs"][seen:]:
            click.echo(f"  sub-job {sub_id}")
        seen = len(lease["sub_jobs"])
        if job["status"] in ("succeeded", "failed", "cancelled"):
            break
        time.sleep(delay)
        delay = min(delay * 2, POLL_CAP)
    if job["status"] != "succeeded":
        click.echo(f"session job {job['status']}: {job.get('error_message') or ''}", err=True)
        sys.exit(EXIT_JOB_FAILED)
    report = job["result"]
    click.echo(f"program exited {report.get('exit_code')} with {len(report.get('sub_jobs', []))} sub-jobs")
    if report.get("stdout"):
        click.echo(report["stdout"], nl=False)


if __name__ == "__main__":
    main()
