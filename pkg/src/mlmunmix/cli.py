"""Command-line shell: synth, unmix, eval, report.

Every command is deterministic given its flags and config (seeds
included); the only non-reproducible output is timings.txt.  Exit codes:
0 success, 1 usage/config error, 2 data/dimension error, 3 numeric
failure (series divergence).
"""

import argparse
import contextlib
import os
import sys

import numpy as np

from . import cubeio
from .core import HyperCube, TransitionProbabilities
from .metrics import EvalReport, align_endmembers, evaluate
from .model import DivergenceError
from .solver import SolverConfig, SolverMode, solve
from .synth import PLaw, SceneSpec, generate_scene
from .vca import VcaConfig, vca


class UsageError(Exception):
    """Bad flags or config; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="mlmunmix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a ground-truth synthetic scene")
    p.add_argument("--d", type=int, required=True, help="number of bands")
    p.add_argument("--m", type=int, required=True, help="number of endmembers")
    p.add_argument("--size", required=True, help="grid as HEIGHTxWIDTH, e.g. 100x100")
    p.add_argument("--snr", type=float, required=True, help="target SNR in dB")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--p-law", default="uniform",
        help="probability law: uniform | zero | constant:<c>",
    )
    p.add_argument("--endmembers", default=None, help="endmember CSV to mix with")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("unmix", help="run the unmixing pipeline from a config file")
    p.add_argument("config", help="flat key=value experiment config")
    p.add_argument("--verbose", action="store_true", help="print per-iteration progress")
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("eval", help="score estimate bundles against a truth bundle")
    p.add_argument("--estimates", nargs="+", required=True, help="run output dirs")
    p.add_argument("--truth", required=True, help="synth bundle dir")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="emit plot-ready spectra CSVs and rasters")
    p.add_argument("--run", required=True, help="run output dir")
    p.add_argument("--truth", default=None, help="synth bundle dir for overlays")
    p.add_argument("--compare", default=None, help="second run dir for difference maps")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _parse_size(text):
    try:
        height, width = (int(v) for v in text.lower().split("x"))
    except Exception:
        raise UsageError(f"--size expects HEIGHTxWIDTH, got {text!r}")
    return height, width


def _parse_p_law(text):
    text = text.strip().lower()
    if text == "uniform":
        return PLaw.uniform01()
    if text == "zero":
        return PLaw.zero()
    if text.startswith("constant:"):
        try:
            return PLaw.constant(float(text.split(":", 1)[1]))
        except ValueError as exc:
            raise UsageError(f"bad --p-law: {exc}")
    raise UsageError(f"--p-law must be uniform, zero or constant:<c>, got {text!r}")


def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} does not exist: {path}")


_FMT = "%.17g"


def cmd_synth(args) -> int:
    height, width = _parse_size(args.size)
    p_law = _parse_p_law(args.p_law)
    e_provided = None
    source = "synthetic"
    names = None
    if args.endmembers is not None:
        _require_file(args.endmembers, "endmember CSV")
        e_provided, names = cubeio.read_endmember_csv(args.endmembers)
        source = "provided"
    spec = SceneSpec(
        d=args.d, m=args.m, height=height, width=width, snr_db=args.snr,
        p_law=p_law, seed=args.seed, endmember_source=source,
    )
    truth = generate_scene(spec, e_provided)

    os.makedirs(args.out, exist_ok=True)
    cubeio.write_cube(os.path.join(args.out, "cube.raw"), truth.x_noisy)
    cubeio.write_cube(os.path.join(args.out, "clean.raw"), truth.x_clean)
    cubeio.write_endmember_csv(
        os.path.join(args.out, "endmembers_true.csv"), truth.e_true, names
    )
    cubeio.write_matrix_csv(
        os.path.join(args.out, "abundances_true.csv"), truth.a_true
    )
    cubeio.write_matrix_csv(
        os.path.join(args.out, "probabilities_true.csv"),
        truth.p_true.data.reshape(height, width),
    )
    p_law_text = p_law.kind if p_law.kind != "constant" \
        else f"constant:{_FMT % p_law.value}"
    cubeio.write_key_value(
        os.path.join(args.out, "scene.meta"),
        {
            "d": spec.d,
            "m": spec.m,
            "height": height,
            "width": width,
            "snr_db": _FMT % spec.snr_db,
            "p_law": p_law_text,
            "seed": spec.seed,
            "endmember_source": source,
            "sigma2_nominal": _FMT % truth.sigma2_nominal,
            "sigma2_realized": _FMT % truth.sigma2,
        },
    )
    return 0


def _thread_limit(threads):
    if threads is None:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(limits=threads)


def cmd_unmix(args) -> int:
    _require_file(args.config, "config file")
    try:
        config = cubeio.parse_experiment_config(args.config)
    except ValueError as exc:
        raise UsageError(str(exc))
    if not os.path.isfile(config.cube):
        raise UsageError(f"cube payload does not exist: {config.cube}")
    _require_file(config.cube + ".hdr", "cube header")
    if config.initial_endmembers is not None:
        _require_file(config.initial_endmembers, "initial endmember CSV")

    cube = cubeio.read_cube(config.cube)
    mode = SolverMode.from_name(config.mode)
    solver_cfg = SolverConfig(
        mode=mode,
        eta1=config.eta1,
        eta2=config.eta2,
        max_outer_iterations=config.max_outer_iterations,
        seed=config.seed,
        noise_power=config.sigma2,
    )

    names = None
    if config.initial_endmembers is not None:
        e0_data, names = cubeio.read_endmember_csv(config.initial_endmembers)
        if e0_data.shape != (cube.n_bands, config.m):
            raise ValueError(
                f"initial endmembers are {e0_data.shape}, expected "
                f"({cube.n_bands}, {config.m})"
            )
        e0 = np.clip(e0_data, 0.0, 1.0)
    else:
        e0 = vca(cube, VcaConfig(m=config.m, snr_estimate=config.vca_snr_db,
                                 seed=config.seed))

    progress = None
    if args.verbose:
        def progress(t, value, diag):
            seconds = sum(diag.block_seconds.values())
            print(f"iteration {t}: objective {value:.6e} ({seconds:.3f}s)",
                  file=sys.stderr)

    with _thread_limit(config.threads):
        result = solve(cube, solver_cfg, e0, progress=progress)

    height = cube.height if cube.height is not None else 1
    width = cube.width if cube.width is not None else cube.n_pixels

    os.makedirs(config.output, exist_ok=True)
    cubeio.write_endmember_csv(
        os.path.join(config.output, "endmembers_est.csv"), result.endmembers, names
    )
    cubeio.write_matrix_csv(
        os.path.join(config.output, "abundances_est.csv"), result.abundances
    )
    cubeio.write_matrix_csv(
        os.path.join(config.output, "probabilities_est.csv"),
        result.probabilities.data.reshape(height, width),
    )
    trace = result.objective_trace
    cubeio.write_matrix_csv(
        os.path.join(config.output, "objective_trace.csv"),
        np.column_stack([np.arange(trace.size, dtype=np.float64), trace]),
    )
    meta = {
        "termination": result.termination.value,
        "iterations": result.iterations,
        "height": height,
        "width": width,
        "eta1_effective": _FMT % solver_cfg.effective_eta1(cube.n_pixels),
    }
    meta.update(config.key_value_pairs())
    cubeio.write_key_value(os.path.join(config.output, "result.meta"), meta)
    # wall time is inherently non-reproducible; keep it out of the
    # deterministic bundle
    with open(os.path.join(config.output, "timings.txt"), "w") as fh:
        fh.write(f"wall_seconds = {result.wall_time:.6f}\n")
    return 0


def _read_bundle_matrices(dirpath, kind):
    """Read (E, A, P raster, mode) from a run or truth bundle directory."""
    suffixes = ("est", "true") if kind == "estimates" else ("true", "est")
    for suffix in suffixes:
        e_path = os.path.join(dirpath, f"endmembers_{suffix}.csv")
        if os.path.isfile(e_path):
            E, _ = cubeio.read_endmember_csv(e_path)
            A = cubeio.read_matrix_csv(
                os.path.join(dirpath, f"abundances_{suffix}.csv")
            )
            p_path = os.path.join(dirpath, f"probabilities_{suffix}.csv")
            P = cubeio.read_matrix_csv(p_path) if os.path.isfile(p_path) else None
            mode = None
            meta_path = os.path.join(dirpath, "result.meta")
            if os.path.isfile(meta_path):
                mode = cubeio.read_key_value(meta_path).get("mode")
            return E, A, P, mode
    raise FileNotFoundError(
        f"no endmembers_est.csv or endmembers_true.csv under {dirpath}"
    )


def cmd_eval(args) -> int:
    if not os.path.isdir(args.truth):
        raise UsageError(f"truth directory does not exist: {args.truth}")
    E_true, A_true, P_true, _ = _read_bundle_matrices(args.truth, "truth")
    os.makedirs(args.out, exist_ok=True)

    rows = [EvalReport.CSV_HEADER]
    for est_dir in args.estimates:
        if not os.path.isdir(est_dir):
            raise UsageError(f"estimates directory does not exist: {est_dir}")
        E_hat, A_hat, P_hat, mode = _read_bundle_matrices(est_dir, "estimates")
        label = mode or os.path.basename(os.path.normpath(est_dir))
        linear = mode is not None and mode.startswith("lu")
        p_est = None
        if not linear and P_hat is not None and P_true is not None:
            p_est = P_hat.ravel()
        try:
            report = evaluate(
                E_hat, A_hat, p_est, E_true, A_true,
                P_true.ravel() if P_true is not None else None,
            )
        except ValueError as exc:
            if p_est is None or "zero" not in str(exc):
                raise
            # truth has no nonlinearity; the probability score is undefined
            report = evaluate(E_hat, A_hat, None, E_true, A_true, None)
        name = os.path.basename(os.path.normpath(est_dir))
        with open(os.path.join(args.out, f"eval_{name}.txt"), "w") as fh:
            fh.write("\n".join(report.key_value_lines()) + "\n")
        rows.append(report.csv_row(label))
    with open(os.path.join(args.out, "eval.csv"), "w") as fh:
        fh.write("\n".join(rows) + "\n")
    return 0


def _grid_shape(dirpath, n_pixels):
    meta_path = os.path.join(dirpath, "result.meta")
    if os.path.isfile(meta_path):
        meta = cubeio.read_key_value(meta_path)
        if "height" in meta and "width" in meta:
            return int(meta["height"]), int(meta["width"])
    return 1, n_pixels


def cmd_report(args) -> int:
    if not os.path.isdir(args.run):
        raise UsageError(f"run directory does not exist: {args.run}")
    E_hat, A_hat, P_hat, _ = _read_bundle_matrices(args.run, "estimates")
    m = E_hat.shape[1]
    height, width = _grid_shape(args.run, A_hat.shape[1])

    E_true = A_true = None
    if args.truth is not None:
        if not os.path.isdir(args.truth):
            raise UsageError(f"truth directory does not exist: {args.truth}")
        E_true, A_true, _, _ = _read_bundle_matrices(args.truth, "truth")
        _, E_hat, A_hat = align_endmembers(E_hat, E_true, A_hat)

    os.makedirs(args.out, exist_ok=True)
    band = np.arange(E_hat.shape[0], dtype=np.float64)
    for k in range(m):
        columns = [band]
        if E_true is not None:
            columns.append(E_true[:, k])
        columns.append(E_hat[:, k])
        np.savetxt(
            os.path.join(args.out, f"spectra_{k + 1}.csv"),
            np.column_stack(columns), delimiter=",", fmt=_FMT,
        )
        cubeio.write_raster_png(
            os.path.join(args.out, f"abundance_{k + 1}.png"),
            A_hat[k].reshape(height, width),
        )
    if P_hat is not None:
        cubeio.write_raster_png(os.path.join(args.out, "p_raster.png"), P_hat)

    if args.compare is not None:
        if not os.path.isdir(args.compare):
            raise UsageError(f"compare directory does not exist: {args.compare}")
        E_cmp, A_cmp, _, _ = _read_bundle_matrices(args.compare, "estimates")
        if E_true is not None:
            _, _, A_cmp = align_endmembers(E_cmp, E_true, A_cmp)
        else:
            _, _, A_cmp = align_endmembers(E_cmp, E_hat, A_cmp)
        diff = np.abs(A_hat - A_cmp).sum(axis=0).reshape(height, width)
        cubeio.write_raster_png(
            os.path.join(args.out, "abundance_diff.png"), diff
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
