"""Command-line interface.

Exit codes: 0 success, 2 validation failure, 3 I/O failure, 4 every fit
restart diverged.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .abstraction import identifiable_abstraction
from .errors import AbstractionError, OptimizationError, ValidationError
from .evaluate import evaluate_fit
from .files import (
    TOOL,
    provenance,
    fit_result_to_json,
    read_config,
    read_dataset,
    read_fit,
    read_json,
    read_observations,
    read_problem,
    write_dataset,
    write_json,
)
from .learn import FitConfig, fit
from .scm import LinearGaussianScm, latents, sample_pairs, sample_rotation, sample_scm
from .setcalc import sigma_atoms

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_OPTIMIZATION = 0, 2, 3, 4

log = logging.getLogger(TOOL)


def _emit(obj: dict, path: str | None) -> None:
    if path:
        write_json(path, obj)
    else:
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")


def cmd_abstract(args, argv) -> int:
    if args.atoms_only:
        d = read_json(args.spec)
        if "nodes" not in d or "sets" not in d:
            raise ValidationError("--atoms-only expects a spec with 'nodes' and 'sets'")
        atoms = sigma_atoms(int(d["nodes"]), d["sets"])
        _emit({"provenance": provenance(argv), "partition": atoms.to_json()}, args.json)
        return EXIT_OK
    spec = read_problem(args.spec)
    report = identifiable_abstraction(spec.dag, spec.interventions)
    _emit({"provenance": provenance(argv), **report.to_json()}, args.json)
    if args.dot:
        Path(args.dot).write_text(f"// {TOOL} {__version__} argv={json.dumps(argv)}\n" + report.to_dot())
    return EXIT_OK


def _parameter_seed(spec, seed: int) -> int:
    return spec.seed if spec.seed is not None else seed


def cmd_simulate(args, argv) -> int:
    if args.samples < 1:
        raise ValidationError("EmptyDataset: --samples must be >= 1")
    spec = read_problem(args.spec)
    pseed = _parameter_seed(spec, args.seed)
    if spec.A is not None:
        scm = LinearGaussianScm(spec.dag, spec.A)
    else:
        scm = sample_scm(spec.dag, np.random.default_rng([pseed, 0]))
    mixing = sample_rotation(spec.dag.n, np.random.default_rng([pseed, 1]))
    ds = sample_pairs(scm, spec.interventions, mixing, args.samples, args.seed, keep_labels=args.keep_labels)
    write_dataset(args.out, ds, argv, extra_meta={"parameter_seed": pseed})
    log.info("wrote %d pairs to %s.csv", len(ds), args.out)
    return EXIT_OK


def cmd_fit(args, argv) -> int:
    config = read_config(args.config) if args.config else FitConfig()
    overrides = {k: v for k, v in (("restarts", args.restarts), ("steps", args.steps), ("seed", args.seed),
                                    ("workers", args.workers)) if v is not None}
    config = replace(config, **overrides)
    config.validate()
    ds = read_observations(args.data)
    res = fit(ds.x, ds.xt, config)
    log.info("best restart %d, objective %.6f, %.1fs", res.best_restart, res.objective, res.wall_clock)
    _emit(fit_result_to_json(res, argv), args.out)
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    fitted = read_fit(args.fit)
    ds = read_dataset(args.data)
    z, zt = latents(ds)
    report = evaluate_fit(fitted["Q"], ds.mixing.Q, ds.scm.dag, ds.interventions, z, zt,
                          threshold=args.threshold, pi_tol=args.pi_tol)
    _emit({"provenance": provenance(argv), **report}, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("abstract", help="identifiable partition and quotient graph of a problem spec")
    a.add_argument("spec")
    a.add_argument("--json", help="write the report here instead of stdout")
    a.add_argument("--dot", help="also write the quotient graph as DOT")
    a.add_argument("--atoms-only", action="store_true",
                   help="spec holds {'nodes': n, 'sets': [...]}; print the atoms of the generated sigma-algebra")
    a.set_defaults(func=cmd_abstract)

    s = sub.add_parser("simulate", help="sample counterfactual pairs from a problem spec")
    s.add_argument("spec")
    s.add_argument("--samples", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output prefix")
    s.add_argument("--keep-labels", action="store_true")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="relaxed maximum-likelihood fit of a dataset")
    f.add_argument("data", help="dataset prefix")
    f.add_argument("--config")
    f.add_argument("--restarts", type=int)
    f.add_argument("--steps", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--workers", type=int)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score a fit against the dataset's ground truth")
    e.add_argument("fit")
    e.add_argument("data", help="dataset prefix")
    e.add_argument("--out")
    e.add_argument("--threshold", type=float, default=0.9)
    e.add_argument("--pi-tol", type=float, default=0.1)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OptimizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZATION
    except (OSError, KeyError, TypeError) as exc:
        code = EXIT_IO if isinstance(exc, OSError) else EXIT_VALIDATION
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    except AbstractionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
