"""Command-line front end: ``spectrec <command> [options]``.

Every command writes a ``*.manifest.json`` next to its outputs recording the
argument vector, parameters, seeds, package version, wall time and SHA-256
digests of inputs and outputs. ``spectrec replay MANIFEST`` re-runs a
manifest and checks the outputs are byte-identical (JSON outputs are compared
with their ``wall_time`` fields removed).

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Set ``SPECTREC_THREADS`` to cap BLAS/LAPACK threads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .core import SpectrumImage, make_random_mask, restrict
from .errors import DataError, NumericalError, SpectrecError
from .fista import FistaConfig
from .io import (
    read_fista_config,
    read_json,
    read_mask,
    read_matrix,
    read_sib,
    write_eigen_csv,
    write_json,
    write_mask,
    write_matrix,
    write_sib,
)
from .metrics import EvalReport
from .phantom import make_phantom
from .snn import SnnParams, snn_reconstruct, snn_tune
from .sss import SssParams, estimate_subspace, sss_reconstruct

logger = logging.getLogger("spectrec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def _output_digest(path) -> str:
    """SHA-256 of an output; JSON outputs are hashed without timing fields."""
    if str(path).endswith(".json"):
        canon = json.dumps(_strip_timing(read_json(path)), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()
    return _sha256(path)


def _manifest_path(primary) -> Path:
    p = Path(primary)
    if p.is_dir():
        return p / "manifest.json"
    return p.with_name(p.name + ".manifest.json")


def _write_manifest(args, argv, inputs, outputs, params, seeds, t0):
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _output_digest(p) for p in outputs},
        "parameters": params,
        "seeds": seeds,
        "version": _version(),
        "wall_time": time.perf_counter() - t0,
    }
    write_json(manifest, _manifest_path(args.manifest_anchor))
    return manifest


def _fista_config(args) -> FistaConfig:
    cfg = read_fista_config(args.config) if args.config else FistaConfig()
    if args.max_iters is not None:
        cfg.max_iters = args.max_iters
    if args.tol is not None:
        cfg.tol = args.tol
    return FistaConfig(cfg.max_iters, cfg.tol, cfg.monitor_every)


def _load_pair(args):
    image = read_sib(args.image)
    if not np.all(np.isfinite(image.data)):
        raise DataError(f"{args.image}: image contains non-finite values")
    mask = read_mask(args.mask)
    return image, mask, restrict(image, mask)


# -- commands ----------------------------------------------------------------

def cmd_simulate(args):
    for name in ("height", "width", "bands", "components"):
        if getattr(args, name) < 1:
            raise UsageError(f"--{name} must be >= 1")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ph = make_phantom(args.height, args.width, args.bands, args.components,
                      args.snr_db, args.seed)
    paths = {
        "truth": out / "truth.sib",
        "noisy": out / "noisy.sib",
        "endmembers": out / "endmembers.sib",
        "abundances": out / "abundances.sib",
        "sidecar": out / "phantom.json",
    }
    write_sib(ph.truth, paths["truth"])
    write_sib(ph.noisy, paths["noisy"])
    write_matrix(ph.endmembers, paths["endmembers"])
    write_sib(SpectrumImage(ph.abundances, args.height, args.width), paths["abundances"])
    side = ph.sidecar()
    side.update(height=args.height, width=args.width, bands=args.bands,
                n_pixels=args.height * args.width)
    write_json(side, paths["sidecar"])
    print(f"wrote phantom to {out} (Np={args.height * args.width}, sigma2={ph.sigma2:.6g})")
    args.manifest_anchor = out
    return [], list(paths.values()), side, ph.seeds


def cmd_mask(args):
    if not 0 < args.ratio <= 1:
        raise UsageError("--ratio must lie in (0, 1]")
    if args.from_image:
        n = read_sib(args.from_image).n_pixels
        inputs = [args.from_image]
    else:
        n, inputs = args.np, []
        if n < 1:
            raise UsageError("--np must be >= 1")
    ns = int(round(args.ratio * n))
    if ns < 1:
        raise UsageError(f"--ratio {args.ratio} selects no pixel out of {n}")
    mask = make_random_mask(n, ns, args.seed)
    write_mask(mask, args.out)
    print(f"wrote mask with Ns={ns} of Np={n} to {args.out}")
    args.manifest_anchor = args.out
    return inputs, [args.out], {"np": n, "ns": ns, "ratio": args.ratio}, {"mask": args.seed}


def _tune(y, mask, shape, config):
    sigma2 = estimate_subspace(y).sigma2_hat
    params, state = snn_tune(y, mask, shape, sigma2, config)
    for w in state.warnings:
        logger.warning("tuning: %s", w)
    return params, state


def cmd_reconstruct(args):
    image, mask, y = _load_pair(args)
    shape = image.shape
    config = _fista_config(args)
    report = {"method": args.method}
    if args.method == "snn":
        if args.lam is None and args.mu is None:
            params, state = _tune(y, mask, shape, config)
            report["tuning"] = state.to_dict()
        else:
            params = SnnParams(args.lam or 0.0, args.mu or 0.0)
        est, solve = snn_reconstruct(y, mask, shape, params, config)
        report["parameters"] = {"lambda": params.lam, "mu": params.mu}
    else:
        if args.mu is not None:
            raise UsageError("--mu only applies to --method snn")
        lam = 1.0 if args.lam is None else args.lam
        model = estimate_subspace(y)
        est, solve = sss_reconstruct(y, mask, shape, model, SssParams(lam), config)
        report["parameters"] = {"lambda": lam}
        report["subspace"] = {"dim": model.dim, "sigma2_hat": model.sigma2_hat}
    report["solve"] = solve.to_dict()
    report["config"] = {"max_iters": config.max_iters, "tol": config.tol}
    write_sib(est, args.out)
    report_path = args.report or str(args.out) + ".report.json"
    write_json(report, report_path)
    outputs = [args.out, report_path]
    if args.trace_csv:
        with open(args.trace_csv, "w", encoding="utf-8") as fh:
            fh.write("iteration,objective\n")
            for i, v in zip(solve.objective_iters, solve.objective_trace):
                fh.write(f"{i},{v!r}\n")
        outputs.append(args.trace_csv)
    print(f"{args.method}: {solve.iterations} iterations ({solve.stop_reason}), "
          f"wrote {args.out}")
    args.manifest_anchor = args.out
    return [args.image, args.mask], outputs, report["parameters"], {}


def cmd_tune(args):
    image, mask, y = _load_pair(args)
    params, state = _tune(y, mask, image.shape, _fista_config(args))
    write_json(state.to_dict(), args.out)
    print(f"lambda*={params.lam:.6g} mu*={params.mu:.6g} "
          f"residual/sigma2={state.residual_ratio:.4f}")
    args.manifest_anchor = args.out
    return [args.image, args.mask], [args.out], {"lambda": params.lam, "mu": params.mu}, {}


def cmd_eval(args):
    if (args.endmembers is None) != (args.abundances is None):
        raise UsageError("--endmembers and --abundances must be given together")
    truth = read_sib(args.truth)
    est = read_sib(args.estimate)
    inputs = [args.truth, args.estimate]
    m = a = None
    if args.endmembers:
        m = read_matrix(args.endmembers)
        a = read_sib(args.abundances).data
        inputs += [args.endmembers, args.abundances]
    rep = EvalReport.evaluate(truth, est, m, a)
    payload = rep.to_dict()
    outputs = []
    if args.out:
        write_json(payload, args.out)
        outputs.append(args.out)
        args.manifest_anchor = args.out
    for k in ("nmse_image", "nmse_abundance", "asad"):
        if payload[k] is not None:
            print(f"{k}: {payload[k]:.6g}")
    return inputs, outputs, {}, {}


def cmd_pca_diag(args):
    _, _, y = _load_pair(args)
    model = estimate_subspace(y)
    write_eigen_csv(model, args.out_csv)
    print(f"R={model.dim}")
    print(f"sigma2_hat={model.sigma2_hat!r}")
    args.manifest_anchor = args.out_csv
    return [args.image, args.mask], [args.out_csv], {"dim": model.dim,
                                                     "sigma2_hat": model.sigma2_hat}, {}


def cmd_replay(args):
    manifest = read_json(args.manifest)
    if not isinstance(manifest, dict) or "argv" not in manifest:
        raise DataError(f"{args.manifest}: not a run manifest")
    expected = dict(manifest.get("outputs", {}))
    prev = os.getcwd()
    os.chdir(manifest.get("cwd", prev))
    try:
        changed = [p for p, digest in manifest.get("inputs", {}).items()
                   if _sha256(p) != digest]
        if changed:
            raise DataError("replay inputs changed: " + ", ".join(changed))
        code = main(manifest["argv"])
        if code != EXIT_OK:
            return code
        bad = [p for p, digest in expected.items() if _output_digest(p) != digest]
    finally:
        os.chdir(prev)
    if bad:
        raise DataError("replay outputs differ: " + ", ".join(bad))
    print(f"replay reproduced {len(expected)} output(s) byte-for-byte")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "mask": cmd_mask,
    "reconstruct": cmd_reconstruct,
    "tune": cmd_tune,
    "eval": cmd_eval,
    "pca-diag": cmd_pca_diag,
}


def _add_solver_flags(p):
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--config", help="JSON file with max_iters/tol/monitor_every")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectrec",
                                     description="Partially sampled spectrum-image reconstruction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic phantom")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--bands", type=int, required=True)
    p.add_argument("--components", type=int, required=True)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("mask", help="draw a random sampling mask")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--np", type=int)
    src.add_argument("--from-image")
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("reconstruct", help="reconstruct a full image from a mask")
    p.add_argument("--method", choices=("snn", "sss"), required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="SolveReport JSON path (default: OUT.report.json)")
    p.add_argument("--trace-csv")

    p = sub.add_parser("tune", help="tune S2N regularization weights")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score an estimate against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--endmembers")
    p.add_argument("--abundances")
    p.add_argument("--out")

    p = sub.add_parser("pca-diag", help="eigenvalue and weight diagnostics")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out-csv", required=True)

    p = sub.add_parser("replay", help="re-run a manifest and verify outputs")
    p.add_argument("manifest")
    return parser


def _thread_limit():
    raw = os.environ.get("SPECTREC_THREADS")
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"SPECTREC_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"SPECTREC_THREADS must be a positive integer, got {raw!r}")
    return n


def _run(args, argv):
    if args.command == "replay":
        return cmd_replay(args)
    t0 = time.perf_counter()
    args.manifest_anchor = None
    inputs, outputs, params, seeds = COMMANDS[args.command](args)
    if args.manifest_anchor is not None:
        _write_manifest(args, argv, inputs, outputs, params, seeds, t0)
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        limit = _thread_limit()
        with threadpool_limits(limits=limit):
            return _run(args, argv)
    except UsageError as exc:
        print(f"spectrec: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"spectrec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError) as exc:
        print(f"spectrec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SpectrecError, ValueError) as exc:
        print(f"spectrec: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
