"""Command-line client.  Requests go to the HTTP API, in process unless ``--server`` is given."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


class _Client:
    def __init__(self, server: str | None, timeout: float = 3600.0):
        if server:
            import httpx

            self._http = httpx.Client(base_url=server.rstrip("/"), timeout=timeout)
        else:
            import warnings

            warnings.filterwarnings("ignore", message=".*httpx.*")
            from fastapi.testclient import TestClient

            from .service import app

            self._http = TestClient(app, raise_server_exceptions=False)

    def _send(self, method: str, path: str, **kw):
        import httpx

        try:
            return self._http.request(method, path, **kw)
        except httpx.TransportError as exc:
            raise ConnectionError(f"cannot reach the API server: {exc}") from exc

    def get(self, path: str):
        return self._send("GET", path)

    def post(self, path: str, body: dict):
        return self._send("POST", path, json=body)


def _scenario_ref(arg: str) -> dict:
    path = Path(arg)
    if path.is_file():
        return {"toml": path.read_text()}
    return {"scenario": arg}


def _write(out: str | None, name: str, text: str) -> None:
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text)


def _cmd_run(args, client):
    body = {**_scenario_ref(args.scenario), "seed": args.seed, "include_trajectory": bool(args.out)}
    resp = client.post("/simulate", body)
    if resp.status_code != 200:
        return resp
    data = resp.json()
    if args.out:
        _write(args.out, "trajectory.csv", data.pop("trajectory_csv"))
        summary = {k: data[k] for k in ("scenario", "outcome", "event_time", "steps", "metrics")}
        _write(args.out, "metrics.json", json.dumps(summary, indent=2) + "\n")
    data.pop("trajectory_csv", None)
    data.pop("columns", None)
    print(json.dumps(data, indent=2))
    return resp


def _cmd_zones(args, client):
    body = {"mode": args.mode, "gamma_at": args.gamma_at, "gamma_ad": args.gamma_ad, "xa": args.xa,
            "e": args.e, "sigma": args.sigma, "grid": args.grid, "include_svg": bool(args.out)}
    resp = client.post("/zones", body)
    if resp.status_code != 200:
        return resp
    data = resp.json()
    if args.out:
        _write(args.out, "zones.csv", data["csv"])
        _write(args.out, "zones.svg", data["svg"])
    counts = {}
    for row in data["labels"]:
        for lab in row:
            counts[lab] = counts.get(lab, 0) + 1
    print(json.dumps({"mode": data["mode"], "cells": counts, "escape_area": data["escape_area"],
                      "boundary_polylines": len(data["boundary"]), "errors": data["errors"]}, indent=2))
    return resp


def _cmd_sweep(args, client):
    body = {**_scenario_ref(args.scenario), "grid": args.grid, "seed": args.seed}
    resp = client.post("/sweep", body)
    if resp.status_code != 200:
        return resp
    data = resp.json()
    _write(args.out, "sweep.json", json.dumps(data, indent=2) + "\n")
    print(json.dumps({k: data[k] for k in ("agreement", "evaluated", "wall_time")}, indent=2))
    return resp


def _cmd_compare(args, client):
    controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
    body = {**_scenario_ref(args.scenario), "controllers": controllers, "seed": args.seed}
    resp = client.post("/compare", body)
    if resp.status_code != 200:
        return resp
    text = json.dumps(resp.json(), indent=2)
    _write(args.out, "comparison.json", text + "\n")
    print(text)
    return resp


def _cmd_scenarios(args, client):
    resp = client.get("/scenarios")
    if resp.status_code == 200:
        print("\n".join(resp.json()["scenarios"]))
    return resp


def _cmd_serve(args):
    import uvicorn

    uvicorn.run("tadgame.service:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tadgame", description=__doc__)
    ap.add_argument("--server", help="base URL of a running API server (default: in process)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("scenario", help="bundled scenario name or path to a TOML file")
    p.add_argument("--out", help="directory for trajectory.csv and metrics.json")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("zones", help="escape/capture zone map")
    p.add_argument("--mode", choices=["cs", "stationary", "vv", "stochastic"], default="cs")
    p.add_argument("--gamma-at", type=float, default=0.5)
    p.add_argument("--gamma-ad", type=float, default=1.0)
    p.add_argument("--xa", type=float, default=0.5)
    p.add_argument("--e", type=float, default=0.5, help="safe distance as a fraction of the initial range")
    p.add_argument("--sigma", type=float, default=0.0, help="attacker position 1-sigma (stochastic mode)")
    p.add_argument("--grid", type=int, default=41)
    p.add_argument("--out", help="directory for zones.csv and zones.svg")
    p.set_defaults(func=_cmd_zones)

    p = sub.add_parser("sweep", help="zone prediction versus closed-loop outcome on a grid")
    p.add_argument("scenario")
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="run one scenario with several defender controllers")
    p.add_argument("scenario")
    p.add_argument("--controllers", default="nmpc,clos,aclos")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("scenarios", help="list bundled scenarios")
    p.set_defaults(func=_cmd_scenarios)

    p = sub.add_parser("serve", help="start the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return _cmd_serve(args)
    try:
        resp = args.func(args, _Client(args.server))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if resp.status_code == 200:
        return EXIT_OK
    try:
        detail = resp.json()
    except ValueError:
        detail = {"detail": resp.text}
    print(f"error: {detail.get('error', resp.status_code)}: {detail.get('detail')}", file=sys.stderr)
    return EXIT_VALIDATION if resp.status_code in (404, 422) else EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
