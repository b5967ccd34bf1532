"""Command-line workflows: baseline building, detection, theory, simulation, evaluation.

Exit codes: 0 success (including alarm found), 1 stream exhausted with no
alarm, 2 usage/domain error, 3 data error.  The TAILWATCH_SEED environment
variable supplies the default seed; every output CSV echoes its parameters
in comment lines so published results are reproducible byte-for-byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import theory
from .benchmarks import (
    Itmcd,
    NnOnline,
    NpCusum,
    Odit,
    QuantTree,
    QuantTreePartition,
    ScoreFeed,
    quanttree_build,
)
from .detector import DetectorConfig, PValueCusum, iter_steps
from .gem import build_gem_baseline, partition_nominal
from .harness import avg_false_alarm_period, roc_curve, tradeoff_curve
from .modelfile import load_model, save_model
from .pca import ProjectedGemBaseline, fit_pca_baseline
from .simulation import StreamSpec, grid_source, make_grid_model, pool_stream

EXIT_OK = 0
EXIT_NO_ALARM = 1
EXIT_USAGE = 2
EXIT_DATA = 3

SEED_ENV = "TAILWATCH_SEED"


class DataError(Exception):
    """Unreadable or malformed input data."""


class UsageError(Exception):
    """Parameter combinations the parser alone cannot reject."""


def _default_seed() -> int:
    value = os.environ.get(SEED_ENV)
    return int(value) if value else 0


def read_points_csv(path) -> np.ndarray:
    """Comma-separated points, one observation per row.

    A single leading header row is auto-detected (any cell that fails to
    parse as a number).  Comment lines starting with '#' are skipped;
    missing values are an error, not imputed.
    """
    rows: list[list[float]] = []
    width: int | None = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in row]
            if width is None:
                width = len(cells)
                try:
                    rows.append([float(c) for c in cells])
                except ValueError:
                    continue  # header row
                continue
            if len(cells) != width:
                raise DataError(
                    f"{path}: row {lineno}: expected {width} columns, got {len(cells)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise DataError(f"{path}: row {lineno}: bad value {bad!r}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _echo_lines(command: str, params: dict) -> list[str]:
    lines = [f"# tailwatch {command}"]
    lines += [f"# {key}={params[key]}" for key in sorted(params)]
    return lines


def _write_csv(path, command: str, params: dict, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in _echo_lines(command, params):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _parse_thresholds(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"bad threshold list {text!r}") from None
    if not values:
        raise UsageError("at least one threshold is required")
    return values


# --------------------------------------------------------------------------
# baseline
# --------------------------------------------------------------------------


def cmd_baseline(args) -> int:
    data = read_points_csv(args.input)
    provenance = {
        "input": os.path.basename(args.input),
        "input_sha256": _sha256(args.input),
        "seed": args.seed,
    }
    if args.kind == "gem":
        model = build_gem_baseline(data, n1=args.n1, k=args.k, seed=args.seed)
        provenance["params"] = {"k": args.k, "n1": args.n1}
        save_model(args.out, model, provenance)
        print(
            f"gem baseline: p={model.p} N1={model.s1.shape[0]} "
            f"N2={model.n2} k={model.k} -> {args.out}"
        )
        return EXIT_OK

    if (args.gamma is None) == (args.r is None):
        raise UsageError("give exactly one of --gamma and --r")
    if args.kind == "pca":
        if args.n1 is not None:
            s1, s2 = partition_nominal(data, args.n1, args.seed)
        else:
            s1 = s2 = data
        model = fit_pca_baseline(s1, s2, gamma_min=args.gamma, r=args.r)
        provenance["params"] = {"gamma": args.gamma, "r": args.r, "n1": args.n1}
        save_model(args.out, model, provenance)
        print(
            f"pca baseline: p={model.p} r={model.r} gamma={model.gamma_achieved:.6f} "
            f"N2={model.sorted_stats.shape[0]} -> {args.out}"
        )
        return EXIT_OK

    # pca-gem: fit the subspace on the full set, project, then build GEM
    # in reduced coordinates.
    pca = fit_pca_baseline(data, data, gamma_min=args.gamma, r=args.r)
    projected = data @ pca.basis
    gem = build_gem_baseline(projected, n1=args.n1, k=args.k, seed=args.seed)
    model = ProjectedGemBaseline(pca=pca, gem=gem)
    provenance["params"] = {
        "gamma": args.gamma,
        "r": args.r,
        "k": args.k,
        "n1": args.n1,
    }
    save_model(args.out, model, provenance)
    print(
        f"pca+gem baseline: p={pca.p} r={pca.r} gamma={pca.gamma_achieved:.6f} "
        f"N1={gem.s1.shape[0]} N2={gem.n2} k={gem.k} -> {args.out}"
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# detect
# --------------------------------------------------------------------------


def cmd_detect(args) -> int:
    loaded = load_model(args.model)
    model = loaded.model
    stream = read_points_csv(args.input)
    if stream.shape[1] != model.p:
        raise DataError(
            f"model dimension {model.p} does not match stream dimension {stream.shape[1]}"
        )
    config = DetectorConfig(alpha=args.alpha, h=args.h, floor_zero_pvalue=not args.no_floor)

    trace_rows = []
    alarm_step = None
    for rec in iter_steps(model, stream, config):
        if args.trace:
            trace_rows.append(
                (rec.t, rec.score, rec.p_hat, rec.s_hat, rec.g, int(rec.stopped))
            )
        if rec.stopped:
            alarm_step = rec.t
            break
    if args.trace:
        _write_csv(
            args.trace,
            "detect",
            {
                "model": os.path.basename(args.model),
                "input": os.path.basename(args.input),
                "alpha": args.alpha,
                "h": args.h,
                "floor_zero_pvalue": not args.no_floor,
            },
            ["t", "score", "p_hat", "s_hat", "g", "alarm"],
            trace_rows,
        )
    if alarm_step is not None:
        print(f"alarm at step {alarm_step}")
        return EXIT_OK
    print(f"no alarm in {stream.shape[0]} steps")
    return EXIT_NO_ALARM


# --------------------------------------------------------------------------
# theory
# --------------------------------------------------------------------------


def cmd_theory(args) -> int:
    if not 0.0 < args.alpha < theory.INV_E:
        raise UsageError(
            f"alpha={args.alpha} out of range: the detector's false-alarm theory "
            f"requires alpha < 1/e ~ {theory.INV_E:.5f}"
        )
    theta = theory.theta_of_alpha(args.alpha)
    bound = theory.afp_lower_bound(args.alpha, args.h)
    wald = theory.wald_approximation(args.alpha, args.h)
    in_table = theory.AFP_SLOPE_ALPHAS[0] <= args.alpha <= theory.AFP_SLOPE_ALPHAS[-1]
    approx = theory.afp_approximation(args.alpha, args.h) if in_table else None
    interpolated = in_table and args.alpha not in theory.AFP_SLOPE_ALPHAS
    result = {
        "alpha": args.alpha,
        "h": args.h,
        "theta": theta,
        "lower_bound": bound,
        "approximation": approx,
        "approximation_interpolated": interpolated,
        "wald": wald,
    }
    if args.format == "json":
        print(json.dumps(result, indent=1, sort_keys=True))
    else:
        keys = list(result)
        print(",".join(keys))
        print(",".join("" if result[k] is None else _fmt(result[k]) for k in keys))
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _tau_value(tau) -> float:
    return math.inf if tau is None else float(tau)


def cmd_simulate(args) -> int:
    if args.source == "grid":
        model = make_grid_model(
            n_measurements=args.p,
            n_states=args.n_states,
            sigma2=args.sigma2,
            seed=args.grid_seed,
        )
        spec = StreamSpec(
            tau=_tau_value(args.tau),
            pre_source=grid_source(model, 0.0),
            post_source=grid_source(model, args.attack_mag),
            horizon=args.steps,
        )
        width = model.n_measurements
        params = {
            "p": args.p,
            "n_states": args.n_states,
            "sigma2": args.sigma2,
            "attack_mag": args.attack_mag,
            "tau": args.tau,
            "steps": args.steps,
            "seed": args.seed,
            "grid_seed": args.grid_seed,
        }
    else:
        pre = read_points_csv(args.pre)
        post = read_points_csv(args.post) if args.post else None
        if post is not None and post.shape[1] != pre.shape[1]:
            raise DataError(
                f"pre dimension {pre.shape[1]} does not match post dimension {post.shape[1]}"
            )
        spec = StreamSpec(
            tau=_tau_value(args.tau),
            pre_source=pre,
            post_source=post,
            horizon=args.steps,
        )
        width = pre.shape[1]
        params = {
            "pre": os.path.basename(args.pre),
            "post": os.path.basename(args.post) if args.post else None,
            "tau": args.tau,
            "steps": args.steps,
            "seed": args.seed,
        }
    rng = np.random.default_rng(args.seed)
    rows = (tuple(np.atleast_1d(point)) for point in pool_stream(spec, rng))
    header = [f"x{i}" for i in range(width)]
    _write_csv(args.out, f"simulate {args.source}", params, header, rows)
    print(f"wrote {args.steps} rows -> {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval
# --------------------------------------------------------------------------


class ProposedFactory:
    def __init__(self, model, alpha, floor, h):
        self.model = model
        self.alpha = alpha
        self.floor = floor
        self.h = h

    def __call__(self):
        return PValueCusum(
            self.model, DetectorConfig(alpha=self.alpha, h=self.h, floor_zero_pvalue=self.floor)
        )


class NpCusumFactory:
    def __init__(self, model, h):
        self.model = model
        self.mean = float(np.mean(model.sorted_stats))
        self.h = h

    def __call__(self):
        return ScoreFeed(self.model, NpCusum(self.mean, self.h))


class OditFactory:
    def __init__(self, model, alpha, h):
        self.model = model
        self.alpha = alpha
        self.h = h

    def __call__(self):
        return ScoreFeed(self.model, Odit(self.model.sorted_stats, self.alpha, self.h))


class ItmcdFactory:
    def __init__(self, w1, w2, k, h):
        self.w1, self.w2, self.k, self.h = w1, w2, k, h

    def __call__(self):
        return Itmcd(w1=self.w1, w2=self.w2, k=self.k, h=self.h)


class NnFactory:
    def __init__(self, window, k, n0, n1, perms, seed, h):
        self.window, self.k, self.n0, self.n1 = window, k, n0, n1
        self.perms, self.seed, self.h = perms, seed, h

    def __call__(self):
        return NnOnline(
            window=self.window,
            k=self.k,
            n0=self.n0,
            n1=self.n1,
            h=self.h,
            permutations=self.perms,
            seed=self.seed,
        )


class QuantTreeFactory:
    def __init__(self, partition: QuantTreePartition, window, h):
        self.partition = partition
        self.window = window
        self.h = h

    def __call__(self):
        return QuantTree(self.partition, window=self.window, h=self.h)


def _detector_family(args):
    """Returns h -> zero-argument detector factory for the chosen detector."""
    name = args.detector
    if name in ("proposed", "npcusum", "odit"):
        if not args.model:
            raise UsageError(f"--model is required for detector {name!r}")
        model = load_model(args.model).model
        if name == "proposed":
            return lambda h: ProposedFactory(model, args.alpha, True, h), model.p
        if name == "npcusum":
            return lambda h: NpCusumFactory(model, h), model.p
        return lambda h: OditFactory(model, args.alpha, h), model.p
    if name == "itmcd":
        return lambda h: ItmcdFactory(args.itmcd_w1, args.itmcd_w2, args.itmcd_k, h), None
    if name == "nn":
        return (
            lambda h: NnFactory(
                args.nn_window, args.nn_k, args.nn_n0, args.nn_n1, args.nn_perms, args.seed, h
            ),
            None,
        )
    if name == "quanttree":
        if not args.nominal:
            raise UsageError("--nominal training data is required for detector 'quanttree'")
        nominal = read_points_csv(args.nominal)
        partition = quanttree_build(nominal, args.qt_bins, args.seed)
        return lambda h: QuantTreeFactory(partition, args.qt_window, h), partition.p
    raise UsageError(f"unknown detector {name!r}")


def _eval_specs(args, expected_p):
    if args.stream == "grid":
        model = make_grid_model(
            n_measurements=args.p,
            n_states=args.n_states,
            sigma2=args.sigma2,
            seed=args.grid_seed,
        )
        if expected_p is not None and model.n_measurements != expected_p:
            raise DataError(
                f"detector dimension {expected_p} does not match grid dimension "
                f"{model.n_measurements}"
            )
        pre = grid_source(model, 0.0)
        post = grid_source(model, args.attack_mag)
    else:
        pre = read_points_csv(args.pre)
        post = read_points_csv(args.post) if args.post else None
        if expected_p is not None and pre.shape[1] != expected_p:
            raise DataError(
                f"detector dimension {expected_p} does not match stream dimension "
                f"{pre.shape[1]}"
            )
    change = StreamSpec(
        tau=float(args.tau), pre_source=pre, post_source=post, horizon=args.horizon
    )
    nominal = StreamSpec(
        tau=math.inf, pre_source=pre, post_source=None, horizon=args.horizon
    )
    return change, nominal


def _eval_params(args) -> dict:
    keys = (
        "detector model stream tau horizon trials thresholds alpha seed jobs "
        "p n_states sigma2 attack_mag grid_seed pre post"
    ).split()
    return {k: getattr(args, k, None) for k in keys}


def cmd_eval(args) -> int:
    family, expected_p = _detector_family(args)
    change_spec, nominal_spec = _eval_specs(args, expected_p)
    params = _eval_params(args)

    if args.mode == "afp":
        thresholds = _parse_thresholds(args.thresholds)
        rows = []
        for h in thresholds:
            summary = avg_false_alarm_period(
                family(h), nominal_spec, args.trials, seed=args.seed, jobs=args.jobs
            )
            rows.append(
                (h, summary.afp, summary.afp_se, summary.censored_frac, summary.trials)
            )
        _write_csv(
            args.out,
            "eval afp",
            params,
            ["h", "afp", "afp_se", "censored_frac", "trials"],
            rows,
        )
    elif args.mode == "tradeoff":
        points = tradeoff_curve(
            family,
            change_spec,
            nominal_spec,
            _parse_thresholds(args.thresholds),
            args.trials,
            seed=args.seed,
            jobs=args.jobs,
        )
        rows = [
            (p.h, p.add, p.add_se, p.afp, p.afp_se, p.afp_censored_frac) for p in points
        ]
        _write_csv(
            args.out,
            "eval tradeoff",
            params,
            ["h", "add", "add_se", "afp", "afp_se", "censored_frac"],
            rows,
        )
    else:
        points = roc_curve(
            family,
            change_spec,
            nominal_spec,
            _parse_thresholds(args.thresholds),
            args.trials,
            seed=args.seed,
            window=args.window,
            jobs=args.jobs,
        )
        rows = [(p.h, p.tpr, p.far) for p in points]
        _write_csv(args.out, "eval roc", params, ["h", "tpr", "far"], rows)
    print(f"wrote {len(rows)} rows -> {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailwatch",
        description="Streaming anomaly detection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pb = sub.add_parser("baseline", help="build a nominal baseline model file")
    pb_sub = pb.add_subparsers(dest="kind", required=True)
    for kind in ("gem", "pca", "pca-gem"):
        pk = pb_sub.add_parser(kind)
        pk.add_argument("--input", required=True, help="nominal data CSV")
        pk.add_argument("--out", required=True, help="model file path")
        pk.add_argument("--seed", type=int, default=_default_seed())
        if kind in ("gem", "pca-gem"):
            pk.add_argument("--k", type=int, default=4, help="neighbor count")
            pk.add_argument("--n1", type=int, required=True, help="reference set size")
        else:
            pk.add_argument("--n1", type=int, default=None, help="optional fit/eval split size")
        if kind in ("pca", "pca-gem"):
            pk.add_argument("--gamma", type=float, default=None, help="min variance fraction")
            pk.add_argument("--r", type=int, default=None, help="explicit subspace dimension")
        pk.set_defaults(func=cmd_baseline, kind=kind)

    pd = sub.add_parser("detect", help="run the detector over a stream CSV")
    pd.add_argument("--model", required=True)
    pd.add_argument("--input", required=True, help="stream CSV, one observation per row")
    pd.add_argument("--alpha", type=float, default=0.2)
    pd.add_argument("--h", type=float, required=True)
    pd.add_argument("--no-floor", action="store_true", help="disable the 1/N2 p-value floor")
    pd.add_argument("--trace", default=None, help="optional per-step trace CSV")
    pd.set_defaults(func=cmd_detect)

    pt = sub.add_parser("theory", help="false-alarm bound, approximations, threshold math")
    pt.add_argument("--alpha", type=float, required=True)
    pt.add_argument("--h", type=float, required=True)
    pt.add_argument("--format", choices=("json", "csv"), default="json")
    pt.set_defaults(func=cmd_theory)

    ps = sub.add_parser("simulate", help="generate synthetic streams to CSV")
    ps_sub = ps.add_subparsers(dest="source", required=True)
    psg = ps_sub.add_parser("grid")
    psg.add_argument("--p", type=int, default=80, help="measurement dimension")
    psg.add_argument("--n-states", type=int, default=57)
    psg.add_argument("--sigma2", type=float, default=0.01)
    psg.add_argument("--attack-mag", type=float, default=0.0)
    psg.add_argument("--tau", type=int, default=None, help="change step (default: never)")
    psg.add_argument("--steps", type=int, required=True)
    psg.add_argument("--seed", type=int, default=_default_seed())
    psg.add_argument("--grid-seed", type=int, default=0)
    psg.add_argument("--out", required=True)
    psg.set_defaults(func=cmd_simulate, source="grid")
    psp = ps_sub.add_parser("pool")
    psp.add_argument("--pre", required=True)
    psp.add_argument("--post", default=None)
    psp.add_argument("--tau", type=int, default=None)
    psp.add_argument("--steps", type=int, required=True)
    psp.add_argument("--seed", type=int, default=_default_seed())
    psp.add_argument("--out", required=True)
    psp.set_defaults(func=cmd_simulate, source="pool")

    pe = sub.add_parser("eval", help="Monte Carlo tradeoff/ROC/false-alarm evaluation")
    pe_sub = pe.add_subparsers(dest="mode", required=True)
    for mode in ("tradeoff", "roc", "afp"):
        pm = pe_sub.add_parser(mode)
        pm.add_argument(
            "--detector",
            choices=("proposed", "npcusum", "odit", "itmcd", "nn", "quanttree"),
            default="proposed",
        )
        pm.add_argument("--model", default=None, help="model file (baseline detectors)")
        pm.add_argument("--nominal", default=None, help="training CSV for quanttree")
        pm.add_argument("--stream", choices=("grid", "pool"), default="grid")
        pm.add_argument("--p", type=int, default=80)
        pm.add_argument("--n-states", type=int, default=57)
        pm.add_argument("--sigma2", type=float, default=0.01)
        pm.add_argument("--attack-mag", type=float, default=0.14)
        pm.add_argument("--grid-seed", type=int, default=0)
        pm.add_argument("--pre", default=None)
        pm.add_argument("--post", default=None)
        pm.add_argument("--tau", type=int, default=1)
        pm.add_argument("--horizon", type=int, default=10000)
        pm.add_argument("--trials", type=int, default=10000)
        pm.add_argument("--thresholds", required=True, help="comma-separated h values")
        pm.add_argument("--alpha", type=float, default=0.2)
        pm.add_argument("--seed", type=int, default=_default_seed())
        pm.add_argument("--jobs", type=int, default=1)
        pm.add_argument("--itmcd-w1", type=int, default=20)
        pm.add_argument("--itmcd-w2", type=int, default=100)
        pm.add_argument("--itmcd-k", type=int, default=4)
        pm.add_argument("--nn-window", type=int, default=50)
        pm.add_argument("--nn-k", type=int, default=10)
        pm.add_argument("--nn-n0", type=int, default=10)
        pm.add_argument("--nn-n1", type=int, default=40)
        pm.add_argument("--nn-perms", type=int, default=200)
        pm.add_argument("--qt-bins", type=int, default=16)
        pm.add_argument("--qt-window", type=int, default=256)
        pm.add_argument("--window", type=int, default=10, help="ROC detection window")
        pm.add_argument("--out", required=True)
        pm.set_defaults(func=cmd_eval, mode=mode)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return EXIT_OK if code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
