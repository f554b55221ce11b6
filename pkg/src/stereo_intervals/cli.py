"""Command-line client for the scene pipeline.

The CLI is a thin client over the HTTP service: it translates flags into
a request, sends it either to a remote server (--server URL) or to the
service app mounted in-process, and prints the returned report. `--serve`
starts the service under uvicorn instead.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stereo-intervals",
        description="Disparity maps with per-pixel confidence intervals.",
    )
    parser.add_argument("--serve", action="store_true", help="run the HTTP service and exit")
    parser.add_argument("--host", default="127.0.0.1", help="bind address for --serve")
    parser.add_argument("--port", type=int, default=8000, help="port for --serve")
    parser.add_argument("--server", help="send the run to a running service at this URL")

    parser.add_argument("--manifest", help="run every scene of a JSON manifest")
    parser.add_argument("--alpha-sweep", action="store_true", help="run the published comparison grid")

    parser.add_argument("--left", help="left image (PGM or PNG)")
    parser.add_argument("--right", help="right image (PGM or PNG)")
    parser.add_argument("--truth", help="ground-truth disparity (PFM, or PGM/PNG with --truth-scale)")
    parser.add_argument("--calib", help="calibration file providing ndisp")
    parser.add_argument("--dmin", type=int, help="disparity search minimum (with --dmax)")
    parser.add_argument("--dmax", type=int, help="disparity search maximum (with --dmin)")
    parser.add_argument("--alpha", type=float, help="possibility cut level, default 0.9")
    parser.add_argument("--tau", type=float, help="low-confidence threshold, default 0.6")
    parser.add_argument("--no-reg", action="store_true", help="disable low-confidence interval pooling")
    parser.add_argument("--no-median", action="store_true", help="disable the median filter")
    parser.add_argument("--no-vfit", action="store_true", help="disable subpixel refinement")
    parser.add_argument("--baseline", action="store_true", help="naive per-curve intervals instead")
    parser.add_argument("--import-cv", help="read the cost volume from this CVOL file")
    parser.add_argument("--export-cv", help="write the raw cost volume to this CVOL file")
    parser.add_argument("--out", help="output directory for artifacts")
    parser.add_argument("--profile-row", type=int, help="dump this image row as a CSV profile")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--scene", help="scene id used in reports")
    parser.add_argument("--truth-scale", type=float, help="stored truth = scale * true disparity")
    parser.add_argument("--truth-sign", type=float, help="sign converting truth into the match convention")
    parser.add_argument("--dump-csv", action="store_true", help="write the full per-pixel interval dump")
    return parser


def _scene_request(args: argparse.Namespace) -> dict:
    request = {
        "scene": args.scene,
        "left": args.left,
        "right": args.right,
        "truth": args.truth,
        "calib": args.calib,
        "d_min": args.dmin,
        "d_max": args.dmax,
        "alpha": args.alpha,
        "tau": args.tau,
        "import_cv": args.import_cv,
        "export_cv": args.export_cv,
        "out_dir": args.out,
        "profile_row": args.profile_row,
        "config_file": args.config,
        "truth_scale": args.truth_scale,
        "truth_sign": args.truth_sign,
    }
    if args.no_reg:
        request["regularize"] = False
    if args.no_median:
        request["median"] = False
    if args.no_vfit:
        request["vfit"] = False
    if args.baseline:
        request["baseline"] = True
    if args.dump_csv:
        request["dump_csv"] = True
    return {key: value for key, value in request.items() if value is not None}


async def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        async with httpx.AsyncClient(base_url=server, timeout=600.0) as client:
            return await client.post(path, json=payload)
    from . import service

    transport = httpx.ASGITransport(app=service.app)
    async with httpx.AsyncClient(
        transport=transport, base_url="http://stereo-intervals.local", timeout=600.0
    ) as client:
        return await client.post(path, json=payload)


def _print_report(report: dict) -> None:
    print(f"scene {report['scene']}  (config {report['config_digest']})")
    header = f"{'region':<8} {'pixels':>9} {'evaluated':>9} {'accuracy':>9} {'rel.size':>9} {'overest.':>9}"
    print(header)
    for region in ("global", "high", "low"):
        stats = report["regions"].get(region)
        if stats is None:
            continue
        def cell(value):
            return "-" if value is None else f"{value:.4f}" if isinstance(value, float) else str(value)
        print(
            f"{region:<8} {cell(stats['pixels']):>9} {cell(stats['evaluated']):>9} "
            f"{cell(stats['accuracy']):>9} {cell(stats['relative_size']):>9} "
            f"{cell(stats['overestimation']):>9}"
        )


def _fail(response: httpx.Response) -> int:
    try:
        detail = response.json().get("detail")
    except json.JSONDecodeError:
        detail = response.text
    if isinstance(detail, dict):
        print(f"error at stage {detail.get('stage')}: {detail.get('error')}", file=sys.stderr)
    else:
        print(f"error: {detail}", file=sys.stderr)
    return 1


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.serve:
        import uvicorn

        from . import service

        uvicorn.run(service.app, host=args.host, port=args.port)
        return 0

    if args.manifest:
        payload = {
            "manifest": args.manifest,
            "sweep": bool(args.alpha_sweep),
            "overrides": _scene_request(args),
        }
        response = asyncio.run(_post(args.server, "/manifests/run", payload))
        if response.status_code != 200:
            return _fail(response)
        body = response.json()
        for failure in body["failures"]:
            print(
                f"scene {failure['scene']} failed at stage {failure['stage']}: {failure['error']}",
                file=sys.stderr,
            )
        for name, report in body["pooled"].items():
            if body["scenes"] and len(next(iter(body["scenes"].values()))) > 1:
                print(f"variant {name}")
            _print_report(report)
        for path in body["artifacts"].values():
            print(f"wrote {path}")
        return 1 if body["failures"] else 0

    if not (args.left or args.import_cv):
        print("error: give --left/--right, --import-cv, or --manifest", file=sys.stderr)
        return 2

    response = asyncio.run(_post(args.server, "/scenes/run", _scene_request(args)))
    if response.status_code != 200:
        return _fail(response)
    body = response.json()
    _print_report(body["report"])
    print(f"low-confidence fraction: {body['low_fraction']:.4f}")
    for path in body["artifacts"].values():
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
