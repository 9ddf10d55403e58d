"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .solver import StageError

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("convexify")


class ConfigError(Exception):
    pass


def _load_config(args) -> RunConfig:
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if args.out is not None:
            cfg = cfg.replace(output_dir=args.out)
    except (OSError, ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err
    return cfg


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _data_dir(args, cfg: RunConfig) -> Path:
    return Path(args.data) if args.data else Path(cfg.output_dir) / "data"


def _load_data(args, cfg: RunConfig):
    from .io import load_cauchy, read_tensor

    d = _data_dir(args, cfg)
    if not (d / "meta.json").exists():
        raise ConfigError(f"no data in {d}; run gen-data first or pass --data")
    data = load_cauchy(d)
    n, nk = cfg.n_x, cfg.n_k
    if data.f.shape != (n, n, nk):
        raise ConfigError(f"data shape {data.f.shape} does not match config grid {(n, n, nk)}")
    c_true = read_tensor(d / "c_true.bin") if (d / "c_true.bin").exists() else None
    return data, c_true


def cmd_gen_data(args) -> int:
    from .experiments import make_dataset
    from .io import save_cauchy, write_tensor

    cfg = _load_config(args)
    ds = make_dataset(cfg)
    d = Path(args.data) if args.data else _out(cfg) / "data"
    save_cauchy(d, ds.data)
    write_tensor(d / "c_true.bin", ds.c_true)
    cfg.save(d / "config.json")
    print(f"wrote {d} (phantom {cfg.phantom}, delta {cfg.delta:g}, seed {cfg.seed}, min|u| {ds.min_abs_u:.3e})")
    return EXIT_OK


def cmd_init(args) -> int:
    from .io import write_tensor
    from .solver import assemble_problem, initialize

    cfg = _load_config(args)
    data, _ = _load_data(args, cfg)
    V0 = initialize(assemble_problem(data, cfg), cfg.effective_qr_eps)
    out = _out(cfg)
    write_tensor(out / "V0.bin", V0.coeffs)
    print(f"wrote {out / 'V0.bin'}")
    return EXIT_OK


def _write_result(out: Path, res, cfg: RunConfig, prefix: str = "") -> None:
    from .io import write_json, write_slices, write_tensor, write_trace

    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / f"{prefix}c.bin", res.c)
    write_tensor(out / f"{prefix}V.bin", res.V.coeffs)
    write_trace(out / f"{prefix}trace.csv", res.trace)
    write_slices(out / f"{prefix}c", res.c, cfg.spatial_grid())
    write_json(out / f"{prefix}metrics.json", res.metrics)
    write_json(out / f"{prefix}params.json", res.params_echo)


def cmd_reconstruct(args) -> int:
    from .solver import reconstruct

    cfg = _load_config(args)
    data, c_true = _load_data(args, cfg)
    res = reconstruct(data, cfg, c_true)
    _write_result(_out(cfg), res, cfg)
    m = res.metrics
    line = f"max c {float(res.c.max()):.4f}"
    if "relative_error_max_c" in m:
        line += f", relative error {m['relative_error_max_c']:.3f}"
    print(line + f", {res.trace.n_iter} iterations")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verification import run_suite

    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_noise_sweep(args) -> int:
    from .experiments import affine_fit, noise_sweep

    cfg = _load_config(args)
    deltas = [float(x) for x in args.deltas.split(",")] if args.deltas else [0.025, 0.05, 0.1]
    if not deltas:
        raise ConfigError("empty delta list")
    rows = noise_sweep(cfg, deltas)
    out = _out(cfg)
    with open(out / "noise_sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"delta={r['delta']:<6g} h2_error={r['h2_error']:.4e} rel_err_max_c={r['relative_error_max_c']:.4f}")
    if len(rows) >= 3:
        slope, floor, r2 = affine_fit([r["delta"] for r in rows], [r["h2_error"] for r in rows])
        print(f"affine fit: slope {slope:.4g}, floor {floor:.4g}, R^2 {r2:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .experiments import ablation

    cfg = _load_config(args)
    runs = ablation(cfg)
    out = _out(cfg)
    summary = {}
    for name, res in runs.items():
        tag = name.replace("=", "").replace(".", "p")
        _write_result(out / tag, res, cfg.replace(ablation_lambda_zero=(name == "lambda=0")))
        summary[name] = {k: res.metrics[k] for k in ("l2_error_in_target", "relative_error_max_c", "max_c")
                         if k in res.metrics}
    (out / "ablation.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for name, m in summary.items():
        print(f"{name}: target L2 error {m.get('l2_error_in_target', float('nan')):.4f}, max c {m['max_c']:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convexify", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="noise seed (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="simulate Cauchy data for a phantom")
    g.add_argument("--data", help="data directory (default <out>/data)")
    g.set_defaults(func=cmd_gen_data)
    i = sub.add_parser("init", parents=[common], help="quasi-reversibility starting point")
    i.add_argument("--data")
    i.set_defaults(func=cmd_init)
    r = sub.add_parser("reconstruct", parents=[common], help="full reconstruction")
    r.add_argument("--data")
    r.set_defaults(func=cmd_reconstruct)
    v = sub.add_parser("verify", parents=[common], help="run a self-check suite")
    v.add_argument("suite", choices=["basis", "gradient", "contraction", "carleman", "forward",
                                     "consistency", "all"])
    v.set_defaults(func=cmd_verify)
    n = sub.add_parser("noise-sweep", parents=[common], help="reconstruction error against noise level")
    n.add_argument("--deltas", help="comma-separated noise levels (default 0.025,0.05,0.1)")
    n.set_defaults(func=cmd_noise_sweep)
    a = sub.add_parser("ablate", parents=[common], help="configured weight against lambda = 0")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as err:
        # a bad parameter surfacing inside a pipeline stage is still a config error
        numeric = (isinstance(err.cause, (np.linalg.LinAlgError, ArithmeticError, RuntimeError))
                   or not isinstance(err.cause, (ValueError, TypeError)))
        print(f"{'numerical failure' if numeric else 'config error'}: {err}", file=sys.stderr)
        return EXIT_NUMERIC if numeric else EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError, RuntimeError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
