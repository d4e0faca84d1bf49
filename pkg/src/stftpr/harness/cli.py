"""Command-line entry point ``stftpr``.

Exit codes: 0 success, 1 invalid input, 2 solver or runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import _kernels
from ..altproj import AltProjConfig, altproj_run
from ..core import Dictionary, GeometryError, ValidationError, check_uniqueness_conditions, make_window
from ..direct import construct_separated_ambiguity, construct_shift_ambiguity, direct_recover
from ..gespar import GesparConfig, QuadraticProblem, gespar_solve
from ..stft import build_measurement_operator
from .experiment import run_experiment
from .io import export_results, load_config, read_measurements, write_signal
from .presets import PRESETS

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stftpr", description="Phase retrieval from STFT magnitudes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("recover", help="recover a signal from a measurement file")
    r.add_argument("measurements", help="file: header 'N W L K M' then M rows of K values")
    r.add_argument("--method", default="STFT-GESPAR",
                   choices=["STFT-GESPAR", "GESPAR", "GLA", "PCGP", "DIRECT"])
    r.add_argument("--window", default="square", help="'square' or a file of W window taps")
    r.add_argument("--L", type=int, help="check the file's stride")
    r.add_argument("--K", type=int, help="check the file's DFT length")
    r.add_argument("--k", type=int, help="sparsity (GESPAR)")
    r.add_argument("--tau", type=float, default=1e-4)
    r.add_argument("--max-swaps", type=int, default=50000)
    r.add_argument("--restarts", type=int, default=50)
    r.add_argument("--iterations", type=int, default=1000)
    r.add_argument("--dictionary", help="N x D real text matrix (GESPAR; default identity)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="write the estimate here (default stdout)")

    e = sub.add_parser("experiment", help="run a parameter sweep")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="key = value config file")
    src.add_argument("--preset", choices=sorted(PRESETS))
    e.add_argument("--trials", type=int, help="override trials_per_cell")
    e.add_argument("--workers", type=int, help="override worker processes")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--quiet", action="store_true")

    a = sub.add_parser("ambiguity", help="emit two signals with identical spectrograms")
    a.add_argument("--kind", choices=["separated", "shift"], default="shift")
    a.add_argument("--N", type=int, required=True)
    a.add_argument("--W", type=int, required=True)
    a.add_argument("--L", type=int, default=4, help="stride (shift kind)")
    a.add_argument("--K", type=int, help="DFT length used for the certificate")
    a.add_argument("--segment-length", type=int, default=None, help="shift kind; default L-1")
    a.add_argument("--segment-position", type=int, default=None, help="shift kind; default L+1")
    a.add_argument("--support1", type=int, nargs=2, default=None, help="separated kind: a1 b1")
    a.add_argument("--support2", type=int, nargs=2, default=None, help="separated kind: a2 b2")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True, help="output directory (u.txt, v.txt, certificate.json)")

    c = sub.add_parser("check-conditions", help="report the L=1 uniqueness conditions")
    c.add_argument("--N", type=int, required=True)
    c.add_argument("--W", type=int, required=True)
    c.add_argument("--window", default="square", help="'square' or a file of W window taps")
    c.add_argument("--json", action="store_true")

    sub.add_parser("info", help="print the active kernel backend")
    return p


def _window(spec: str, W: int, N: int):
    if spec == "square":
        return make_window("square", W, N)
    taps = np.loadtxt(spec, ndmin=2)
    taps = taps[:, 0] + 1j * taps[:, 1] if taps.shape[1] == 2 else taps[:, 0]
    return make_window("custom", W, N, taps=taps)


def _cmd_recover(args) -> int:
    if args.window == "square":
        y = read_measurements(args.measurements)
    else:
        header = Path(args.measurements).read_text().split("\n", 1)[0].split()
        N, W = int(header[0]), int(header[1])
        y = read_measurements(args.measurements, "custom", _window(args.window, W, N).taps)
    g = y.geometry
    if args.L is not None and args.L != g.L:
        raise ValidationError(f"--L {args.L} disagrees with the file (L={g.L})")
    if args.K is not None and args.K != g.K:
        raise ValidationError(f"--K {args.K} disagrees with the file (K={g.K})")
    window = g.window
    method = args.method.upper()
    if method in ("STFT-GESPAR", "GESPAR"):
        if args.k is None:
            raise ValidationError("GESPAR needs the sparsity --k")
        D = (Dictionary(np.loadtxt(args.dictionary, ndmin=2)) if args.dictionary
             else Dictionary.identity(g.N))
        op = build_measurement_operator(window, g.L, g.K, D)
        cfg = GesparConfig(args.k, objective_threshold=args.tau, max_total_swaps=args.max_swaps,
                           rng_seed=args.seed)
        res = gespar_solve(QuadraticProblem.from_operator(op, np.ravel(y.y)), cfg)
        estimate = D.apply(res.coefficients)
        status = (f"objective={res.objective_value:.6g} swaps={res.swaps_used} "
                  f"converged={res.converged}")
    elif method == "DIRECT":
        estimate = direct_recover(y, window).values
        status = "direct"
    else:
        cfg = AltProjConfig(max_iterations=args.iterations, restarts=args.restarts,
                            rng_seed=args.seed, method=method)
        res = altproj_run(y, window, cfg)
        estimate = res.estimate.values
        status = f"residual={res.residual:.6g} iterations={len(res.residual_trace) - 1}"
    if args.out:
        write_signal(args.out, estimate)
    else:
        write_signal(sys.stdout, estimate)
    print(status, file=sys.stderr)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    from dataclasses import replace

    config = load_config(args.config) if args.config else PRESETS[args.preset]()
    if args.trials is not None:
        config = replace(config, trials_per_cell=args.trials)
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(done, total):
        if not args.quiet and (done == total or done % max(1, total // 100) == 0):
            print(f"\r{done}/{total} trials", end="" if done < total else "\n", file=sys.stderr)

    table = run_experiment(config, progress)
    export_results(table, "csv", out / "results.csv")
    export_results(table, "svg-lineplot", out / "results.svg")
    failures = [t for t in table.trials if t.diagnostic]
    if failures:
        print(f"{len(failures)} trials raised solver errors, e.g. {failures[0].diagnostic}",
              file=sys.stderr)
    print(out / "results.csv")
    return EXIT_OK


def _cmd_ambiguity(args) -> int:
    N, W = args.N, args.W
    K = args.K
    if args.kind == "shift":
        L = args.L
        seg_len = L - 1 if args.segment_length is None else args.segment_length
        pos = L + 1 if args.segment_position is None else args.segment_position
        pair = construct_shift_ambiguity(N, W, L, seg_len, pos, rng_seed=args.seed, K=K)
    else:
        window = make_window("square", W, N)
        s1 = tuple(args.support1) if args.support1 else (0, 0)
        s2 = tuple(args.support2) if args.support2 else (W + 1, W + 1)
        rng = np.random.default_rng(args.seed)
        len1 = (s1[1] - s1[0]) % N + 1
        len2 = (s2[1] - s2[0]) % N + 1
        amps = (rng.standard_normal(len1) + 1j * rng.standard_normal(len1),
                rng.standard_normal(len2) + 1j * rng.standard_normal(len2))
        pair = construct_separated_ambiguity(s1, s2, amps, window, K=K)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_signal(out / "u.txt", pair.u)
    write_signal(out / "v.txt", pair.v)
    (out / "certificate.json").write_text(json.dumps(pair.certificate, indent=2, default=str) + "\n")
    worst = max(pair.certificate.get("max_rel_error", {0: 0.0}).values())
    print(f"{args.kind} ambiguity written to {out} (max relative spectrogram difference {worst:.2e})")
    return EXIT_OK


def _cmd_check(args) -> int:
    window = _window(args.window, args.W, args.N)
    rep = check_uniqueness_conditions(window)
    data = {"N": args.N, "W": args.W, "cond_i": rep.cond_i, "cond_ii": rep.cond_ii,
            "cond_iii": rep.cond_iii, "all_hold": rep.all_hold,
            "min_abs_dft_of_v": rep.min_abs_dft_of_v, "coprime_shortcut": rep.coprime_shortcut,
            "vanishing_bins": list(rep.vanishing_bins)}
    if args.json:
        print(json.dumps(data))
    else:
        print(f"N={args.N} W={args.W}")
        print(f"  (i)   DFT of |g|^2 nonvanishing : {rep.cond_i} (min |bin| = {rep.min_abs_dft_of_v:.3g})")
        print(f"  (ii)  N >= 2W - 1               : {rep.cond_ii}")
        print(f"  (iii) gcd(N, W - 1) = 1         : {rep.cond_iii}")
        print(f"  unique recovery guaranteed      : {rep.all_hold}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"recover": _cmd_recover, "experiment": _cmd_experiment,
                "ambiguity": _cmd_ambiguity, "check-conditions": _cmd_check}
    if args.command == "info":
        print(f"backend: {_kernels.BACKEND}")
        return EXIT_OK
    try:
        return handlers[args.command](args)
    except (ValidationError, GeometryError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
