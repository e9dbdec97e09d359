"""Command-line entry point: ``repjsd {estimate,tst,gen-data,gan-toy,selfcheck}``.

Option values resolve as command-line flag, then ``--config`` JSON, then
built-in default. The seed falls back to ``$REPJSD_SEED`` before the
default. Every run writes ``manifest.json`` next to its outputs; passing
that manifest back through ``--config`` repeats the run.

Exit codes: 0 success, 1 failed check or numerical abort, 2 usage or
input error.
"""

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    CauchySpec,
    gen_8gaussians,
    gen_blobs,
    gen_cauchy,
    gen_hdgm,
    gen_null_gauss,
    load_csv,
    location_for_target_jsd,
    write_csv,
)
from .errors import NonFinite, RepJSDError
from .estimate import EstimatorConfig, config_dict, estimate_jsd
from .features import save_checkpoint

DEFAULTS = {
    "estimate": {
        "x": None, "y": None, "dataset": None, "bits": False, "n": 512, "d": 2,
        "epochs": 1000, "lr": 1e-3, "features": 50, "sigma": 2.0, "ema": None,
        "header": False, "seed": 0, "out": "out-estimate",
    },
    "tst": {
        "method": "jsd-ff", "dataset": "blobs", "x": None, "y": None, "header": False,
        "n": 40, "d": 2, "grid": None, "null": False, "permutations": 100, "alpha": 0.05,
        "test_sets": 100, "trials": 10, "epochs": 200, "bits": False, "seed": 0,
        "out": "out-tst", "threads": None,
    },
    "gen-data": {
        "dataset": "blobs", "n": 100, "d": 2, "which": "P", "bits": False, "seed": 0,
        "test_stream": False, "out": "data.csv",
    },
    "gan-toy": {
        "steps": 3000, "batch_size": 256, "lr_d": 1e-4, "lr_g": 5e-4, "critic_sigma": None,
        "samples": 8000, "seed": 0, "out": "out-gan",
    },
    "selfcheck": {"seed": 0, "mutation": None},
}

FAMILIES = ("blobs", "hdgm", "8gaussians", "null-gauss")


class UsageError(Exception):
    pass


# output helpers -----------------------------------------------------------------

def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def atomic_write_with(path, writer):
    """Atomic version of a function that writes to a path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows, columns):
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in columns))
    return "\n".join(lines) + "\n"


def ndjson_text(records):
    return "".join(json.dumps(r) + "\n" for r in records)


def write_manifest(out, command, config, outputs):
    doc = {
        "command": command,
        "version": __version__,
        "config": config,
        "outputs": sorted(outputs),
    }
    atomic_write_text(Path(out) / "manifest.json", json.dumps(doc, indent=2) + "\n")


# config resolution ----------------------------------------------------------------

def load_config(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return doc.get("config", doc)


def resolve(command, args):
    defaults = DEFAULTS[command]
    config = load_config(args.config)
    unknown = set(config) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            resolved[key] = flag
        elif key in config:
            resolved[key] = config[key]
        elif key == "seed" and os.environ.get("REPJSD_SEED"):
            try:
                resolved[key] = int(os.environ["REPJSD_SEED"])
            except ValueError:
                raise UsageError("REPJSD_SEED must be an integer") from None
        else:
            resolved[key] = default
    return resolved


def parse_cauchy(name, bits):
    """'cauchy:TARGET' -> location offset for unit-scale laws."""
    try:
        target = float(name.split(":", 1)[1])
    except (IndexError, ValueError):
        raise UsageError(f"expected cauchy:TARGET, got {name!r}") from None
    return target, location_for_target_jsd(target, base=2 if bits else np.e)


def _family_sampler(name, side, n, d):
    """Callable rng -> rows drawing a fresh batch from a named family."""
    def draw(rng):
        seed = int(rng.integers(2**31))
        if name == "blobs":
            return gen_blobs(3, n, side, seed).rows
        if name == "hdgm":
            return gen_hdgm(d, n, side, seed).rows
        if name == "8gaussians":
            return gen_8gaussians(n, seed).rows
        return gen_null_gauss(d, n, seed).rows

    return draw


# subcommands ---------------------------------------------------------------------

def cmd_estimate(args):
    cfg = resolve("estimate", args)
    target = None
    if cfg["dataset"]:
        name = cfg["dataset"]
        if name.startswith("cauchy:"):
            target, loc = parse_cauchy(name, cfg["bits"])
            n = cfg["n"]
            X = lambda rng: gen_cauchy(CauchySpec(0.0), n, int(rng.integers(2**31))).rows
            Y = lambda rng: gen_cauchy(CauchySpec(loc), n, int(rng.integers(2**31))).rows
        elif name in FAMILIES:
            X = _family_sampler(name, "P", cfg["n"], cfg["d"])
            Y = _family_sampler(name, "Q" if name in ("blobs", "hdgm") else "P", cfg["n"], cfg["d"])
        else:
            raise UsageError(f"unknown dataset {name!r}")
    elif cfg["x"] and cfg["y"]:
        X = load_csv(cfg["x"], cfg["header"])
        Y = load_csv(cfg["y"], cfg["header"])
    else:
        raise UsageError("estimate needs --dataset or both --x and --y")

    est = EstimatorConfig(
        epochs=cfg["epochs"],
        lr=cfg["lr"],
        num_fourier_features=cfg["features"],
        sigma_init=cfg["sigma"],
        use_ema=cfg["ema"] is not None,
        ema_alpha=cfg["ema"] if cfg["ema"] is not None else 0.1,
        seed=cfg["seed"],
    )
    result = estimate_jsd(X, Y, est)
    scale = 1.0 / np.log(2) if cfg["bits"] else 1.0
    summary = {
        "estimate": result.estimate * scale,
        "tail_mean": result.tail_mean(min(100, est.epochs)) * scale,
        "units": "bits" if cfg["bits"] else "nats",
        "target": target,
        "estimator": config_dict(est),
    }
    out = Path(cfg["out"])
    trace = [dict(r, estimate=r["estimate"] * scale) for r in result.trace]
    atomic_write_text(out / "trace.ndjson", ndjson_text(trace))
    atomic_write_text(out / "result.json", json.dumps(summary, indent=2) + "\n")
    atomic_write_with(out / "network.json", lambda p: save_checkpoint(result.network, p))
    write_manifest(out, "estimate", cfg, ["trace.ndjson", "result.json", "network.json"])
    print(f"estimate {summary['estimate']:.6f} {summary['units']} (tail mean {summary['tail_mean']:.6f})")
    return 0


def cmd_tst(args):
    from .tst import DatasetSpec, TstConfig, run_file_power, run_power_experiment, summarize

    cfg = resolve("tst", args)
    threads = cfg["threads"] or os.cpu_count() or 1
    tcfg = TstConfig(
        method=cfg["method"],
        permutations=cfg["permutations"],
        alpha_level=cfg["alpha"],
        n_test_sets=cfg["test_sets"],
        n_trials=cfg["trials"],
        epochs=cfg["epochs"],
        seed=cfg["seed"],
        threads=threads,
    )
    name = cfg["dataset"]
    if name == "csv":
        if not (cfg["x"] and cfg["y"]):
            raise UsageError("--dataset csv needs --x and --y")
        rows = run_file_power(load_csv(cfg["x"], cfg["header"]), load_csv(cfg["y"], cfg["header"]), tcfg, cfg["n"])
    else:
        extra = {}
        if name.startswith("cauchy:"):
            _, extra["cauchy_location"] = parse_cauchy(name, cfg["bits"])
            name = "cauchy"
        elif name not in FAMILIES:
            raise UsageError(f"unknown dataset {name!r}")
        null = cfg["null"] or name in ("null-gauss", "8gaussians")
        spec = DatasetSpec(name, cfg["n"], d=cfg["d"], null=null, **extra)
        grid = None
        if cfg["grid"]:
            grid = [int(v) for v in str(cfg["grid"]).split(",")]
        rows = run_power_experiment(spec, tcfg, grid=grid)
    summary = summarize(rows)
    out = Path(cfg["out"])
    atomic_write_text(out / "power.csv", csv_text(rows, ["dataset", "method", "n", "d", "trial", "power"]))
    atomic_write_text(
        out / "summary.csv", csv_text(summary, ["dataset", "method", "n", "d", "mean_power", "sd"])
    )
    write_manifest(out, "tst", cfg, ["power.csv", "summary.csv"])
    for s in summary:
        print(f"{s['dataset']} {s['method']} n={s['n']} d={s['d']}: power {s['mean_power']:.3f} +- {s['sd']:.3f}")
    return 0


def cmd_gen_data(args):
    cfg = resolve("gen-data", args)
    name, n, d, which, seed = cfg["dataset"], cfg["n"], cfg["d"], cfg["which"], cfg["seed"]
    stream = 1 if cfg["test_stream"] else 0
    if which not in ("P", "Q"):
        raise UsageError("--which must be P or Q")
    if name.startswith("cauchy:"):
        _, loc = parse_cauchy(name, cfg["bits"])
        s = gen_cauchy(CauchySpec(loc if which == "Q" else 0.0), n, seed, stream)
    elif name == "blobs":
        s = gen_blobs(3, n, which, seed, stream)
    elif name == "hdgm":
        s = gen_hdgm(d, n, which, seed, stream)
    elif name == "8gaussians":
        s = gen_8gaussians(n, seed, stream)
    elif name == "null-gauss":
        s = gen_null_gauss(d, n, seed, stream)
    else:
        raise UsageError(f"unknown dataset {name!r}")
    out = Path(cfg["out"])
    header = [f"x{i}" for i in range(s.d)]
    atomic_write_with(out, lambda p: write_csv(p, s.rows, header))
    print(f"wrote {len(s)} rows x {s.d} columns to {out}")
    return 0


def cmd_gan_toy(args):
    from .gan import GanConfig, gan_train, heldout_divergence, mode_coverage

    cfg = resolve("gan-toy", args)
    kw = {}
    if cfg["critic_sigma"] is not None:
        kw["critic_sigma"] = cfg["critic_sigma"]
    gcfg = GanConfig(
        steps=cfg["steps"], batch_size=cfg["batch_size"], lr_d=cfg["lr_d"], lr_g=cfg["lr_g"],
        seed=cfg["seed"], **kw,
    )
    models = gan_train(gcfg)
    samples = models.sample(cfg["samples"], cfg["seed"] + 1)
    cov = mode_coverage(samples)
    held = heldout_divergence(models, 512, cfg["seed"] + 2)
    out = Path(cfg["out"])
    atomic_write_with(out / "samples.csv", lambda p: write_csv(p, samples, ["x0", "x1"]))
    atomic_write_text(out / "trace.ndjson", ndjson_text(models.trace))
    atomic_write_with(out / "critic.json", lambda p: save_checkpoint(models.critic, p))
    report = {
        "modes_hit": cov.modes_hit,
        "histogram": cov.histogram.tolist(),
        "kl_to_uniform": cov.kl_to_uniform,
        "heldout_divergence": held,
    }
    atomic_write_text(out / "coverage.json", json.dumps(report, indent=2) + "\n")
    write_manifest(out, "gan-toy", cfg, ["samples.csv", "trace.ndjson", "critic.json", "coverage.json"])
    print(f"modes {cov.modes_hit}/8, KL to uniform {cov.kl_to_uniform:.4f}, held-out divergence {held:.4f}")
    return 0


def cmd_selfcheck(args):
    from .selfcheck import mutated, run_checks

    cfg = resolve("selfcheck", args)
    with mutated(cfg["mutation"]):
        results = run_checks(cfg["seed"])
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


# parser ---------------------------------------------------------------------------

def build_parser():
    from .selfcheck import MUTATIONS
    from .tst import METHODS

    parser = argparse.ArgumentParser(prog="repjsd", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="JSON file of option values (or a previous manifest)")
        p.add_argument("--seed", type=int)
        if out:
            p.add_argument("--out", help="output directory")

    p = sub.add_parser("estimate", help="estimate the divergence between two samples")
    common(p)
    p.add_argument("--x", help="CSV file of X rows")
    p.add_argument("--y", help="CSV file of Y rows")
    p.add_argument("--header", action="store_true", help="CSV files have a header row")
    p.add_argument("--dataset", help="cauchy:TARGET, blobs, hdgm, 8gaussians or null-gauss")
    p.add_argument("--bits", action="store_true", help="read targets and report estimates in bits")
    p.add_argument("--n", type=int, help="samples per epoch for synthetic data")
    p.add_argument("--d", type=int, help="dimension for hdgm/null-gauss")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--features", type=int, help="number of Fourier frequencies (D/2)")
    p.add_argument("--sigma", type=float, help="initial bandwidth")
    p.add_argument("--ema", type=float, metavar="ALPHA", help="smooth covariances with this EMA weight")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("tst", help="two-sample test power experiment")
    common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--dataset", help="blobs, hdgm, 8gaussians, null-gauss, cauchy:TARGET or csv")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--header", action="store_true")
    p.add_argument("--n", type=int, help="samples per blob (blobs) or per set")
    p.add_argument("--d", type=int)
    p.add_argument("--grid", help="comma-separated list of n values")
    p.add_argument("--null", action="store_true", help="draw both sets from P")
    p.add_argument("--bits", action="store_true")
    p.add_argument("--permutations", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--test-sets", dest="test_sets", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--threads", type=int, help="worker processes (default: logical cores)")
    p.set_defaults(func=cmd_tst)

    p = sub.add_parser("gen-data", help="write synthetic samples as CSV")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--which", choices=["P", "Q"])
    p.add_argument("--bits", action="store_true")
    p.add_argument("--test-stream", dest="test_stream", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gan-toy", help="train the 8-Gaussians generator")
    common(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr-d", dest="lr_d", type=float)
    p.add_argument("--lr-g", dest="lr_g", type=float)
    p.add_argument("--critic-sigma", dest="critic_sigma", type=float)
    p.add_argument("--samples", type=int, help="generated samples to write")
    p.set_defaults(func=cmd_gan_toy)

    p = sub.add_parser("selfcheck", help="run the numerical invariant suite")
    common(p, out=False)
    p.add_argument("--mutation", choices=sorted(MUTATIONS), help="inject a known fault (suite should fail)")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"repjsd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except NonFinite as exc:
        print(f"repjsd {args.command}: aborted: {exc}", file=sys.stderr)
        return 1
    except (RepJSDError, ValueError, OSError) as exc:
        print(f"repjsd {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
