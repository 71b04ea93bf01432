"""Run the stack as one process: HTTP API plus device workers.

First boot against an empty database creates an admin account and prints
its API key once. Seed devices can be registered from a JSON file holding a
list of device specs.
"""

from __future__ import annotations

import json
import pathlib

import click
import uvicorn

from ..engine.core import EngineConfig
from .app import create_app


@click.command()
@click.option("--db", "db_path", default="qstack.sqlite", show_default=True, help="SQLite database file.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--devices", "devices_file", type=click.Path(exists=True), default=None,
              help="JSON file with a list of device specs to register at startup.")
@click.option("--bootstrap-key", default=None,
              help="Use this exact admin API key on first boot instead of a random one.")
@click.option("--base-url", default=None,
              help="Public base URL handed to hosted session programs (default http://HOST:PORT).")
@click.option("--calibration-shots", default=100_000, show_default=True, type=int)
def main(db_path, host, port, devices_file, bootstrap_key, base_url, calibration_shots):
    seed_devices = None
    if devices_file:
        seed_devices = json.loads(pathlib.Path(devices_file).read_text())
    config = EngineConfig(calibration_shots=calibration_shots)
    app = create_app(
        db_path,
        base_url=base_url or f"http://{host}:{port}",
        bootstrap_admin_key=bootstrap_key,
        seed_devices=seed_devices,
        engine_config=config,
    )
    if app.state.bootstrap_secret:
        click.echo(f"admin API key: {app.state.bootstrap_secret}", err=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
