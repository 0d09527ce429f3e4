"""Command-line interface.

Every data command is a thin client of the HTTP service: by default an
in-process instance is spun up for the single call, and ``--server URL``
targets a running one instead (paths are then resolved on that host).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import httpx

from . import __version__
from .synthetic import generate_dataset

log = logging.getLogger("placerec.cli")

_BUDGET_PRESETS = {25: (5, 15, 5), 50: (10, 30, 10)}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline configuration")
    group.add_argument(
        "--proposals",
        type=int,
        choices=sorted(_BUDGET_PRESETS),
        help="proposals per view; picks the matching section budgets",
    )
    group.add_argument("--budgets", help="per-section budgets, e.g. 10,30,10")
    group.add_argument("--seed", type=int, help="projection seed")
    group.add_argument("--dim", type=int, help="projected feature dimension")
    group.add_argument("--features", help="feature source: builtin or lddf:DIR")
    group.add_argument("--width", type=int, help="working image width")
    group.add_argument("--height", type=int, help="working image height")
    group.add_argument("--section-width", type=int, help="section width in pixels")
    group.add_argument("--overlap", type=float, help="section overlap fraction")


def _config_payload(args: argparse.Namespace) -> dict:
    payload: dict = {}
    if args.proposals is not None:
        payload["proposals_per_view"] = args.proposals
        payload["budgets"] = list(_BUDGET_PRESETS[args.proposals])
    if args.budgets is not None:
        try:
            budgets = [int(part) for part in args.budgets.split(",")]
        except ValueError:
            raise SystemExit(f"error: --budgets must be comma-separated integers, got {args.budgets!r}")
        payload["budgets"] = budgets
        payload.setdefault("proposals_per_view", sum(budgets))
    for flag, key in (
        ("seed", "seed"),
        ("dim", "projected_dim"),
        ("features", "feature_source"),
        ("width", "image_width"),
        ("height", "image_height"),
        ("section_width", "section_width"),
        ("overlap", "overlap"),
    ):
        value = getattr(args, flag)
        if value is not None:
            payload[key] = value
    return payload


def _client(args: argparse.Namespace) -> httpx.Client:
    if args.server:
        return httpx.Client(base_url=args.server, timeout=3600.0)
    from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _post(client: httpx.Client, route: str, body: dict) -> dict:
    response = client.post(route, json=body)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise SystemExit(f"error: {detail}")
    return response.json()


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2))


def cmd_build(args: argparse.Namespace) -> int:
    body = {
        "manifest_path": args.manifest,
        "save_path": args.out,
        "which": args.which,
        "jobs": args.jobs,
        "config": _config_payload(args),
    }
    with _client(args) as client:
        info = _post(client, "/databases/build", body)
    log.info("built %d views into %s", info["views"], args.out)
    _print_json(info)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    tau_grid = None
    if args.tau_grid is not None:
        try:
            tau_grid = [float(part) for part in args.tau_grid.split(",")]
        except ValueError:
            raise SystemExit(f"error: --tau-grid must be comma-separated reals, got {args.tau_grid!r}")
    body = {
        "manifest_path": args.manifest,
        "db_path": args.db,
        "method": args.method,
        "tau_grid": tau_grid,
        "jobs": args.jobs,
        "out_dir": args.out,
        "config": _config_payload(args),
    }
    with _client(args) as client:
        result = _post(client, "/evaluate", body)
    full = result["summary"]["full_recall"]
    precision = full["precision"]
    print(f"full-recall precision: {'nan' if precision is None else f'{precision:.3f}'}")
    _print_json(result)
    return 0


def cmd_match(args: argparse.Namespace) -> int:
    body = {"image_a": args.image_a, "image_b": args.image_b, "config": _config_payload(args)}
    with _client(args) as client:
        payload = _post(client, "/match", body)
    _print_json(payload)
    return 0


def cmd_propose(args: argparse.Namespace) -> int:
    body = {"image_path": args.image, "top": args.top, "config": _config_payload(args)}
    with _client(args) as client:
        payload = _post(client, "/proposals", body)
    if args.out is not None:
        with open(args.out, "w") as fh:
            json.dump(payload["proposals"], fh, indent=2)
        log.info("wrote %d proposals to %s", payload["count"], args.out)
    else:
        _print_json(payload["proposals"])
    return 0


def cmd_export_regions(args: argparse.Namespace) -> int:
    body = {
        "manifest_path": args.manifest,
        "out_dir": args.out,
        "which": args.which,
        "config": _config_payload(args),
    }
    with _client(args) as client:
        payload = _post(client, "/export-regions", body)
    log.info("exported %d views under %s", len(payload["view_ids"]), args.out)
    _print_json(payload)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    manifest = generate_dataset(
        args.out,
        locations=args.locations,
        seed=args.seed if args.seed is not None else 0,
        view_width=args.width or 320,
        view_height=args.height or 240,
    )
    print(str(manifest))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="placerec", description=__doc__)
    parser.add_argument("--version", action="version", version=f"placerec {__version__}")
    parser.add_argument("--server", help="base URL of a running service (default: in-process)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a descriptor database from reference views")
    p.add_argument("manifest", help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="output LDDB path")
    p.add_argument("--which", choices=["reference", "test"], default="reference")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("evaluate", help="rank test views against a database and sweep the ratio test")
    p.add_argument("manifest", help="dataset manifest JSON")
    p.add_argument("db", help="LDDB database path")
    p.add_argument("--method", choices=["ldd", "clm", "cwi"], default="ldd")
    p.add_argument("--tau-grid", help="comma-separated thresholds (tau=1 always added)")
    p.add_argument("--out", help="directory for summary.json, pr_curve.csv, confusion.csv")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("match", help="score one image pair and print matched boxes")
    p.add_argument("image_a")
    p.add_argument("image_b")
    _add_config_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("propose", help="dump ranked landmark proposals for one image")
    p.add_argument("image")
    p.add_argument("--top", type=int, help="keep only the best N")
    p.add_argument("--out", help="write JSON here instead of stdout")
    _add_config_flags(p)
    p.set_defaults(func=cmd_propose)

    p = sub.add_parser("export-regions", help="write region crops + box lists for the feature exporter")
    p.add_argument("manifest", help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--which", choices=["reference", "test", "both"], default="both")
    _add_config_flags(p)
    p.set_defaults(func=cmd_export_regions)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth", help="generate a synthetic dataset with known ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--locations", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
