"""Command-line interface.

Subcommands: simulate, select, sweep, calibrate, eval.  Every run is
reproducible from its flags (plus optional --config JSON) and input files;
outputs are written atomically and contain the provenance needed to check
that downstream commands are applied to the right files.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .data import Dataset, read_csv, write_csv
from .divergence import KernelConfig, estimator_from_tag
from .em import EmConfig, FittedModel, bic, sample_assignments
from .errors import ConfigError, DataError, NumericalError, StareError
from .evaluation import calibrate_rho, f_measure
from .families import get_family
from .generate import (GeneratorSpec, SCENARIO_PRESETS, read_spec, sample_generator,
                       scenario_spec, write_spec)
from .selection import (CandidateFit, default_rho_max, fit_candidates, loss_curve,
                        select_k, stable_region_select)
from .util import atomic_write_text, dump_json_stable

_USAGE_EXIT, _DATA_EXIT, _NUMERICAL_EXIT = 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract here is 1.
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})")
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return obj


def _resolve(args, config: dict, key: str, default, cast=None):
    """Flag value if given, else config-file value, else built-in default."""
    value = getattr(args, key.replace("-", "_"), None)
    if value is None:
        value = config.get(key, default)
    if value is not None and cast is not None:
        value = cast(value)
    return value


def _em_config(config: dict, seed: int) -> EmConfig:
    em = dict(config.get("em", {}))
    unknown = set(em) - {"max_iterations", "tol", "restarts", "init", "covariance_ridge"}
    if unknown:
        raise ConfigError(f"unknown em config fields: {sorted(unknown)}")
    return EmConfig(seed=seed, **em)


def _estimator(tag: str, config: dict, seed: int):
    knn = dict(config.get("knn", {}))
    kernel = dict(config.get("kernel", {}))
    unknown = (set(knn) - {"min_radius"}) | (set(kernel) - {"bandwidth", "model_sample_size"})
    if unknown:
        raise ConfigError(f"unknown estimator config fields: {sorted(unknown)}")
    kc = KernelConfig(seed=seed, **kernel)
    return estimator_from_tag(tag, min_radius=knn.get("min_radius", 1e-12), kernel_config=kc)


def _add_common(p: _Parser, rho: bool = False) -> None:
    p.add_argument("--data", action="append", required=True, metavar="CSV",
                   help="input dataset (repeat for multiple datasets where allowed)")
    p.add_argument("--family", choices=["gaussian1d", "gaussianNd", "poisson"])
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--lambda", type=float, dest="lam",
                   help="per-component penalty weight (default 0.01)")
    p.add_argument("--estimator",
                   help="knn-adaptive | knn-fixed:K | knn-corrected:K | "
                        "knn-independent | plugin | mmd")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON file with defaults for any flag")
    p.add_argument("--z-mode", choices=["sample", "map"], dest="z_mode")
    p.add_argument("--z-replicates", type=int, dest="z_replicates",
                   help="average the divergence profile over this many assignment "
                        "draws (extension; default 1 matches the base procedure)")
    if rho:
        p.add_argument("--rho", type=float, help="divergence tolerance")
    p.add_argument("--rho-max", type=float, dest="rho_max")
    p.add_argument("--out", help="output path (JSON)")


def build_parser() -> _Parser:
    parser = _Parser(prog="stare",
                     description="Structurally aware selection of mixture components")
    parser.add_argument("--version", action="version", version=f"stare {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p_sim = sub.add_parser("simulate", help="draw a synthetic dataset")
    p_sim.add_argument("--scenario", choices=sorted(SCENARIO_PRESETS),
                       help="builtin scenario alias")
    p_sim.add_argument("--spec", help="generator spec JSON file")
    p_sim.add_argument("--n", type=int, help="override the sample size")
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--out", help="output CSV path")
    p_sim.add_argument("--spec-out", dest="spec_out", help="also write the expanded spec JSON")
    p_sim.add_argument("--print-spec", action="store_true", dest="print_spec",
                       help="print the expanded generator spec and exit")
    p_sim.add_argument("--config", help="JSON file with defaults for any flag")

    p_sel = sub.add_parser("select", help="select K at a fixed tolerance rho")
    _add_common(p_sel, rho=True)

    p_swp = sub.add_parser("sweep", help="exact loss curves over all rho")
    _add_common(p_swp)
    p_swp.add_argument("--width-fraction", type=float, dest="width_fraction")
    p_swp.add_argument("--grid-points", type=int, dest="grid_points",
                       help="rows in the gridded CSV (default 201)")
    p_swp.add_argument("--csv", dest="csv_out", help="write a gridded rho/loss CSV here")

    p_cal = sub.add_parser("calibrate", help="calibrate rho from labeled datasets")
    _add_common(p_cal)
    p_cal.add_argument("--grid-points", type=int, dest="grid_points",
                       help="rho grid resolution (default 201)")

    p_ev = sub.add_parser("eval", help="score a selection against labels")
    p_ev.add_argument("--data", action="append", required=True, metavar="CSV")
    p_ev.add_argument("--selection", required=True, help="selection JSON from 'stare select'")
    p_ev.add_argument("--out", help="output report JSON path")
    p_ev.add_argument("--config", help="JSON file with defaults for any flag")
    return parser


def _one_dataset(args) -> str:
    if len(args.data) != 1:
        raise _UsageError("this command takes exactly one --data file")
    return args.data[0]


def _read_dataset(path: str) -> Dataset:
    try:
        return read_csv(path)
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}")


def _common_setup(args, config, need_rho=False):
    family = _resolve(args, config, "family", None)
    if family is None:
        raise _UsageError("--family is required (or set it in --config)")
    family = get_family(family)
    k_max = _resolve(args, config, "k_max", 5, int)
    lam = getattr(args, "lam", None)
    if lam is None:
        lam = config.get("lambda", 0.01)
    lam = float(lam)
    seed = _resolve(args, config, "seed", 0, int)
    tag = _resolve(args, config, "estimator", "knn-adaptive")
    z_mode = _resolve(args, config, "z_mode", "sample")
    z_replicates = _resolve(args, config, "z_replicates", 1, int)
    rho = None
    if need_rho:
        rho = _resolve(args, config, "rho", None)
        if rho is None:
            raise _UsageError("--rho is required for 'select'; use 'sweep' or "
                              "'calibrate' if you do not have a tolerance yet")
        rho = float(rho)
    em = _em_config(config, seed)
    est = _estimator(tag, config, seed)
    return family, k_max, lam, seed, tag, z_mode, z_replicates, rho, em, est


def _run_config_blob(args, config, **extra) -> dict:
    blob = {"config_file": dict(config)}
    blob.update(extra)
    return blob


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    scenario = _resolve(args, config, "scenario", None)
    spec_path = _resolve(args, config, "spec", None)
    if (scenario is None) == (spec_path is None):
        raise _UsageError("simulate needs exactly one of --scenario or --spec")
    seed = _resolve(args, config, "seed", 0, int)
    n = _resolve(args, config, "n", None)
    if scenario is not None:
        spec = scenario_spec(scenario, n=n, seed=seed)
    else:
        spec = read_spec(spec_path)
        if n is not None:
            spec.n = int(n)
        if args.seed is not None:
            spec.seed = seed
        spec.validate()
    if args.print_spec:
        sys.stdout.write(dump_json_stable(spec.to_jsonable()))
        if not args.out:
            return 0
    if not args.out:
        raise _UsageError("simulate needs --out (or --print-spec)")
    name = scenario or spec.scenario
    dataset, _ = sample_generator(spec, name=name)
    write_csv(dataset, args.out)
    if args.spec_out:
        write_spec(spec, args.spec_out)
    print(f"wrote {dataset.n} x {dataset.dim} observations "
          f"({spec.k} true components) to {args.out}")
    return 0


def _fit_all(args, config, need_rho=False):
    family, k_max, lam, seed, tag, z_mode, z_replicates, rho, em, est = \
        _common_setup(args, config, need_rho=need_rho)
    path = _one_dataset(args)
    data = _read_dataset(path)
    candidates = fit_candidates(data, family, k_max, em, est, seed=seed,
                                z_mode=z_mode, z_replicates=z_replicates)
    return (family, k_max, lam, seed, tag, z_mode, z_replicates, rho, em, est,
            path, data, candidates)


def cmd_select(args) -> int:
    config = _load_config(args.config)
    (family, k_max, lam, seed, tag, z_mode, z_replicates, rho, em, est,
     path, data, candidates) = _fit_all(args, config, need_rho=True)
    result = select_k(data, family, k_max, rho, lam, em, est, seed=seed,
                      z_mode=z_mode, z_replicates=z_replicates, candidates=candidates)
    result.provenance.update({"data_path": path, "estimator": est.tag})
    blob = result.to_jsonable()
    blob["run_config"] = _run_config_blob(
        args, config, family=family.kind, k_max=k_max, rho=rho,
        **{"lambda": lam}, estimator=tag, seed=seed, z_mode=z_mode,
        z_replicates=z_replicates)
    text = dump_json_stable(blob)
    if args.out:
        atomic_write_text(args.out, text)
    for c in result.candidates:
        if c.ok:
            from .selection import penalized_loss

            loss = penalized_loss(c.profile, rho, lam)
            mark = " <- chosen" if c.k == result.chosen_k else ""
            print(f"k={c.k}  loss={loss:.6g}{mark}")
        else:
            print(f"k={c.k}  failed: {c.failure}")
    print(f"chosen k: {result.chosen_k} (rho={rho}, lambda={lam})")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    (family, k_max, lam, seed, tag, z_mode, z_replicates, _rho, em, est,
     path, data, candidates) = _fit_all(args, config)
    curves = [loss_curve(c.profile, lam) for c in candidates if c.ok]
    if not curves:
        raise NumericalError("every candidate fit failed; nothing to sweep")
    rho_max = _resolve(args, config, "rho_max", None)
    rho_max = default_rho_max(curves) if rho_max is None else float(rho_max)
    width_fraction = _resolve(args, config, "width_fraction", 0.2, float)
    verdict = stable_region_select(curves, rho_max=rho_max, width_fraction=width_fraction)

    per_k = []
    for c in candidates:
        entry = {"k": c.k}
        if c.ok:
            entry.update({"log_likelihood": c.model.log_likelihood,
                          "bic": bic(c.model, data.n),
                          "converged": c.model.converged})
        else:
            entry["failure"] = c.failure
        per_k.append(entry)
    blob = {
        "lambda": lam,
        "rho_max": rho_max,
        "width_fraction": width_fraction,
        "verdict": verdict.to_jsonable(),
        "curves": [c.to_jsonable() for c in curves],
        "per_k": per_k,
        "provenance": {"data_path": path, "dataset_name": data.name,
                       "dataset_n": data.n, "dataset_dim": data.dim,
                       "seed": seed, "estimator": est.tag, "family": family.kind,
                       "em_digest": em.digest(), "z_mode": z_mode,
                       "z_replicates": z_replicates},
        "run_config": _run_config_blob(args, config, family=family.kind,
                                       k_max=k_max, **{"lambda": lam},
                                       estimator=tag, seed=seed),
    }
    text = dump_json_stable(blob)
    if args.out:
        atomic_write_text(args.out, text)
    if args.csv_out:
        grid_points = _resolve(args, config, "grid_points", 201, int)
        grid = np.linspace(0.0, rho_max, grid_points)
        cols = [grid] + [c.value(grid) for c in curves]
        header = "rho," + ",".join(f"loss_k{c.k}" for c in curves)
        lines = [header]
        for row in zip(*cols):
            lines.append(",".join(format(v, ".17g") for v in row))
        atomic_write_text(args.csv_out, "\n".join(lines) + "\n")
    for k, lo, hi in verdict.regions:
        star = " *" if (k, lo, hi) == (verdict.k, *verdict.interval) else ""
        print(f"rho in [{lo:.4g}, {hi:.4g}): argmin k={k}{star}")
    conf = "" if verdict.confident else " (low confidence: no region met the width threshold)"
    print(f"stable-region choice: k={verdict.k} on rho in "
          f"[{verdict.interval[0]:.4g}, {verdict.interval[1]:.4g}]{conf}")
    return 0


def cmd_calibrate(args) -> int:
    config = _load_config(args.config)
    family, k_max, lam, seed, tag, z_mode, z_replicates, _rho, em, est = \
        _common_setup(args, config)
    if len(args.data) < 1:
        raise _UsageError("calibrate needs at least one labeled --data file")
    runs = []
    all_curves = []
    for path in args.data:
        data = _read_dataset(path)
        if data.labels is None:
            raise DataError(f"{path}: calibration needs a 'label' column")
        candidates = fit_candidates(data, family, k_max, em, est, seed=seed,
                                    z_mode=z_mode, z_replicates=z_replicates)
        runs.append((data, candidates))
        all_curves.extend(loss_curve(c.profile, lam) for c in candidates if c.ok)
    rho_max = _resolve(args, config, "rho_max", None)
    rho_max = default_rho_max(all_curves) if rho_max is None else float(rho_max)
    grid_points = _resolve(args, config, "grid_points", 201, int)
    grid = np.linspace(0.0, rho_max, grid_points)
    result = calibrate_rho(runs, lam, grid)
    blob = result.to_jsonable()
    blob["provenance"] = {"data_paths": list(args.data), "seed": seed,
                          "estimator": est.tag, "family": family.kind,
                          "em_digest": em.digest(), "rho_max": rho_max}
    blob["run_config"] = _run_config_blob(args, config, family=family.kind,
                                          k_max=k_max, **{"lambda": lam},
                                          estimator=tag, seed=seed)
    text = dump_json_stable(blob)
    if args.out:
        atomic_write_text(args.out, text)
    print(f"rho_star = {result.rho_star:.6g} "
          f"(mean F = {float(np.max(result.averaged)):.4f} over {len(runs)} datasets)")
    return 0


def cmd_eval(args) -> int:
    path = _one_dataset(args)
    data = _read_dataset(path)
    if data.labels is None:
        raise DataError(f"{path}: eval needs a 'label' column with ground truth")
    try:
        with open(args.selection, "r", encoding="utf-8") as fh:
            sel = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"selection file not found: {args.selection}")
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.selection}: invalid JSON ({exc})")
    prov = sel.get("provenance", {})
    if prov.get("dataset_n") != data.n or prov.get("dataset_dim") != data.dim:
        raise DataError(
            f"selection {args.selection} was computed on a dataset of shape "
            f"({prov.get('dataset_n')}, {prov.get('dataset_dim')}); "
            f"{path} has shape ({data.n}, {data.dim})")

    models: dict[int, FittedModel] = {}
    bics: dict[int, float] = {}
    for entry in sel.get("per_k", []):
        if "model" in entry:
            model = FittedModel.from_jsonable(entry["model"])
            models[model.k] = model
            bics[model.k] = entry.get("bic", bic(model, data.n))
    chosen_k = sel.get("chosen_k")
    if chosen_k not in models:
        raise DataError(f"{args.selection}: no fitted model for chosen k={chosen_k}")

    def _f_of(k: int) -> float:
        z = sample_assignments(models[k], data, mode="map")
        return f_measure(z, data.labels)

    chosen_f = _f_of(chosen_k)
    truth_k = int(np.unique(data.labels[data.labels != -1]).size)
    report = {
        "data_path": path,
        "selection_path": args.selection,
        "chosen_k": chosen_k,
        "chosen_f": chosen_f,
        "n_truth_clusters": truth_k,
        "matches_truth_k": chosen_k == truth_k,
        "matches_truth_k_minus_1": chosen_k == truth_k - 1,
    }
    print(f"selected model: k={chosen_k}  F={chosen_f:.4f}")
    if bics:
        bic_k = min(bics, key=lambda k: (bics[k], k))
        bic_f = _f_of(bic_k)
        report.update({"bic_k": bic_k, "bic_f": bic_f})
        print(f"BIC choice:     k={bic_k}  F={bic_f:.4f}")
    print(f"truth clusters: {truth_k} (selected matches truth: "
          f"{report['matches_truth_k']}, truth-1: {report['matches_truth_k_minus_1']})")
    if args.out:
        atomic_write_text(args.out, dump_json_stable(report))
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "select": cmd_select,
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            return _USAGE_EXIT
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_EXIT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _USAGE_EXIT
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return _DATA_EXIT
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return _DATA_EXIT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _NUMERICAL_EXIT
    except StareError as exc:  # pragma: no cover - catch-all for new subtypes
        print(f"error: {exc}", file=sys.stderr)
        return _NUMERICAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
