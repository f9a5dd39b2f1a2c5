"""Command-line entry point: ``partinv <subcommand> [--config FILE] [flags]``.

Config files are flat ``key = value`` text; keys are the long flag names
(dashes or underscores).  Flags given on the command line win over the file.
Exit status: 0 success, 2 configuration error, 1 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import harness, recovery, sensing, theory, wavelet
from .harness import ConfigError, SweepConfig

log = logging.getLogger("partinv")


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _floats(text):
    out = []
    for tok in str(text).replace(",", " ").split():
        out.append(float(Fraction(tok)))
    return tuple(out)


def _ints(text):
    return tuple(int(tok) for tok in str(text).replace(",", " ").split())


_CONVERTERS = {
    "n": int, "m": int, "k": int, "l": int, "trials": int, "seed": int, "threads": int,
    "samples": int, "shift": int, "subsets": int, "max_iters": int,
    "deltas": _floats, "rhos": _floats, "l_values": _ints, "trees": _ints, "support": _ints,
    "a": float, "delta": float,
}


def _settings(args, known):
    """Merge config file values under explicit flags; only keys in ``known`` are accepted."""
    merged = {}
    if getattr(args, "config", None):
        for key, value in read_config(args.config).items():
            if key == "algo" and "algorithm" in known:
                key = "algorithm"
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            conv = _CONVERTERS.get(key, str)
            try:
                merged[key] = conv(value)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
    for key in known:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _add_common(p, *, sweep=True):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", help="output path prefix")
    if sweep:
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--threads", type=int, help="worker processes (0 = all CPUs; default PARTINV_THREADS)")


def _sweep_args(p):
    p.add_argument("--ensemble", choices=sorted(harness.ENSEMBLES))
    p.add_argument("--n", type=int)
    p.add_argument("--deltas", type=_floats, help="comma-separated M/N values (fractions allowed)")
    p.add_argument("--rhos", type=_floats, help="comma-separated K/M values")
    p.add_argument("--algo", dest="algorithm", choices=harness.ALGORITHMS)
    p.add_argument("--l-policy", dest="l_policy", choices=harness.L_POLICIES)
    p.add_argument("--l-values", dest="l_values", type=_ints)
    p.add_argument("--trees", type=_ints)
    p.add_argument("--subsets", type=int)


_SWEEP_KEYS = ("ensemble", "n", "deltas", "rhos", "algorithm", "l_policy", "l_values", "trees", "subsets",
               "trials", "seed", "threads", "out")


def _sweep_config(s, default_trials):
    kw = {}
    mapping = {"ensemble": "ensemble", "n": "N", "deltas": "deltas", "rhos": "rhos", "algorithm": "algorithm",
               "l_policy": "l_policy", "l_values": "l_values", "trees": "trees", "subsets": "subsets",
               "trials": "trials", "seed": "seed"}
    for key, field in mapping.items():
        if key in s:
            kw[field] = s[key]
    kw.setdefault("trials", default_trials)
    if kw.get("ensemble") == "wavelet-tree":
        kw.setdefault("N", harness.WAVELET_SIDE**2)
        kw.setdefault("algorithm", "partinv-wavelet")
        kw.setdefault("deltas", tuple(k / 16 for k in sorted(sensing.SAMPLING_PATTERNS)))
        kw.setdefault("trees", (1, 2, 3, 4))
    return SweepConfig(**kw)


def _emit(grid, prefix):
    csv_path, pgm_path = f"{prefix}.csv", f"{prefix}.pgm"
    grid.write_csv(csv_path)
    harness.render_heatmap(grid, pgm_path)
    print(f"wrote {csv_path} {pgm_path}")


def cmd_phase_diagram(args):
    s = _settings(args, _SWEEP_KEYS)
    cfg = _sweep_config(s, 25)
    grid = harness.phase_diagram(cfg, s.get("threads"))
    _emit(grid, s.get("out", "phase_diagram"))
    return 0


def cmd_wavelet(args):
    s = _settings(args, _SWEEP_KEYS)
    s["ensemble"] = "wavelet-tree"
    s.setdefault("algorithm", "partinv-wavelet")
    cfg = _sweep_config(s, 100)
    grid = harness.phase_diagram(cfg, s.get("threads"))
    _emit(grid, s.get("out", "wavelet"))
    return 0


def cmd_l_sensitivity(args):
    keys = ("ensemble", "n", "m", "k", "l_values", "trials", "seed", "threads", "out")
    s = _settings(args, keys)
    for key in ("m", "k"):
        if key not in s:
            raise ConfigError(f"l-sensitivity needs --{key}")
    grid = harness.l_sensitivity(
        s["m"], s["k"], s.get("ensemble", "gaussian"), s.get("trials", 25), s.get("seed", 0),
        s.get("n", 256), s.get("l_values"), s.get("threads"),
    )
    _emit(grid, s.get("out", "l_sensitivity"))
    return 0


def cmd_best_l(args):
    s = _settings(args, _SWEEP_KEYS)
    cfg = _sweep_config(s, 100)
    result = harness.best_l_search(cfg, s.get("threads"))
    prefix = s.get("out", "best_l")
    _emit(result.grid, prefix)
    table = result.table()
    Path(f"{prefix}.table.txt").write_text("\n".join(" ".join(f"{v:4d}" for v in row) for row in table) + "\n")
    print(f"wrote {prefix}.table.txt")
    return 0


def _load_vector(path):
    p = Path(path)
    try:
        if p.suffix == ".dmat":
            return sensing.load_dmat(p).ravel()
        return np.array([float(t) for t in p.read_text().split()])
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def cmd_recover(args):
    s = _settings(args, ("phi", "y", "k", "l", "algo", "max_iters", "out"))
    for key in ("phi", "y", "k"):
        if key not in s:
            raise ConfigError(f"recover needs --{key}")
    try:
        Phi = sensing.load_dmat(s["phi"])
    except OSError as exc:
        raise ConfigError(f"cannot read {s['phi']}: {exc}") from exc
    y = _load_vector(s["y"])
    K = int(s["k"])
    algo = s.get("algo", "partinv")
    if algo == "partinv":
        res = recovery.partinv(Phi, y, K, recovery.PartInvOptions(L=s.get("l"), max_iterations=s.get("max_iters")))
    elif algo == "cosamp":
        res = recovery.cosamp(Phi, y, K, s.get("max_iters"))
    else:
        raise ConfigError(f"recover supports partinv and cosamp, not {algo!r}")
    print("support=" + " ".join(map(str, res.support)))
    print(f"residual={float(res.residual_norm)!r}")
    print(f"iterations={res.iterations}")
    print(f"termination={res.termination.value}")
    if "out" in s:
        lines = ["index,value"] + [f"{i},{float(res.estimate[i])!r}" for i in range(res.estimate.size)]
        Path(f"{s['out']}.csv").write_text("\n".join(lines) + "\n")
        print(f"wrote {s['out']}.csv")
    return 0


def haar_example_matrix(n=256, shift=2, kernel=sensing.LOWPASS_KERNEL_1D):
    """Filter-and-downsample operator times the Haar basis."""
    return sensing.compose_sensing(
        sensing.filter_downsample_1d(kernel, n, shift), np.eye(n), wavelet.haar_basis(n)
    )


def cmd_correlation_map(args):
    s = _settings(args, ("phi", "n", "shift", "out"))
    if "phi" in s:
        Phi = sensing.load_dmat(s["phi"])
    else:
        Phi = haar_example_matrix(s.get("n", 256), s.get("shift", 2))
    C = sensing.correlation_map(Phi)
    prefix = s.get("out", "correlation_map")
    rows = [",".join(f"{v:.10g}" for v in row) for row in C]
    Path(f"{prefix}.csv").write_text("\n".join(rows) + "\n")
    peak = C.max()
    img = np.floor(255 * C / peak + 0.5).astype(np.uint8) if peak > 0 else np.zeros(C.shape, np.uint8)
    harness.write_pgm(f"{prefix}.pgm", img)
    frac = float(np.mean(C > 0.05))
    print(f"size={C.shape[0]} fraction_above_0.05={frac:.6f}")
    print(f"wrote {prefix}.csv {prefix}.pgm")
    return 0


def cmd_check_theorem(args):
    s = _settings(args, ("n", "m", "k", "l", "a", "mode", "samples", "seed", "phi", "support", "delta", "out"))
    mode = s.get("mode", "exhaustive")
    if mode not in ("exhaustive", "sampled"):
        raise ConfigError("mode must be exhaustive or sampled")
    rng = sensing.RngStream(s.get("seed", 0), (7,))
    if "phi" in s:
        Phi = sensing.load_dmat(s["phi"])
        for key in ("support", "l", "a", "delta"):
            if key not in s:
                raise ConfigError(f"checking a given matrix needs --{key}")
        report = theory.check_dictionary(
            Phi, s["support"], s["l"], s["a"], float(s["delta"]), mode=mode, samples=s.get("samples", 500), rng=rng
        )
    else:
        for key in ("n", "m", "k", "l"):
            if key not in s:
                raise ConfigError(f"check-theorem needs --{key}")
        if mode != "exhaustive":
            raise ConfigError("instance construction is certified exhaustively; use --mode exhaustive")
        try:
            _, _, report = theory.construct_theorem_instance(s["m"], s["n"], s["k"], s["l"], rng, A=s.get("a"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    text = report.to_text()
    sys.stdout.write(text)
    if "out" in s:
        Path(f"{s['out']}.txt").write_text(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="partinv", description="Partial Inversion sparse recovery experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase-diagram", help="success proportions over a (delta, rho) grid")
    _add_common(p)
    _sweep_args(p)
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("l-sensitivity", help="success versus subset size L")
    _add_common(p)
    p.add_argument("--ensemble", choices=["gaussian", "correlated-block"])
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--l-values", dest="l_values", type=_ints)
    p.set_defaults(func=cmd_l_sensitivity)

    p = sub.add_parser("best-l", help="best L per grid cell")
    _add_common(p)
    _sweep_args(p)
    p.set_defaults(func=cmd_best_l)

    p = sub.add_parser("wavelet", help="wavelet-tree recovery over sampling rates and tree counts")
    _add_common(p)
    _sweep_args(p)
    p.set_defaults(func=cmd_wavelet)

    p = sub.add_parser("recover", help="recover one signal from .dmat inputs")
    _add_common(p, sweep=False)
    p.add_argument("--phi")
    p.add_argument("--y")
    p.add_argument("--k", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--algo", choices=["partinv", "cosamp"])
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("correlation-map", help="|Phi^T Phi| of the Haar filter-downsample example or a given matrix")
    _add_common(p, sweep=False)
    p.add_argument("--phi")
    p.add_argument("--n", type=int)
    p.add_argument("--shift", type=int)
    p.set_defaults(func=cmd_correlation_map)

    p = sub.add_parser("check-theorem", help="certify a small exact-recovery instance or check a matrix")
    _add_common(p, sweep=False)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--mode")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--phi")
    p.add_argument("--support", type=_ints)
    p.set_defaults(func=cmd_check_theorem)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage on bad flags
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"partinv: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to exit 1
        log.debug("failure", exc_info=True)
        print(f"partinv: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
