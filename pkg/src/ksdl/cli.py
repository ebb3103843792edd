"""Command-line entry point: ``ksdl <command> [--config FILE] [--seed N] [--out DIR] [--force]``.

``--force`` lets a command overwrite a non-empty output directory and run
campaigns on instances that fail the theorem hypotheses.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .dictionary import CoordinateDictionary
from .experiments import SweepResult, csv_comment, deviation_sweep, phase_transition, \
    resolve_instance, risk_gap_sweep
from .generative import make_rng, synthesize
from .theory import HypothesisError, check_theorem1, sample_complexity

COMMANDS = ("gen-model", "check-conditions", "verify-lemmas", "risk-gap", "deviation",
            "phase-transition")
U64 = 2 ** 64


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _plain(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o)!r}")


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")


def _prepare_out(out: str, force: bool) -> None:
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise FileExistsError(f"{out} is not empty; pass --force to overwrite")
    os.makedirs(out, exist_ok=True)


def _envelope(command: str, config: ExperimentConfig, seed: int, report, summary) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config_sha256": config.digest(),
        "config": config.to_dict(),
        "theorem": report.to_dict(),
        "summary": summary,
    }


def _gen_model(config, seed, out, force):
    inst = resolve_instance(config, seed)
    report = check_theorem1(inst.factors, inst.model, inst.lam, inst.eps)
    comment = csv_comment(config, seed)
    for k, f in enumerate(inst.factors):
        with open(os.path.join(out, f"D0_{k}.json"), "w") as fh:
            fh.write(CoordinateDictionary(f).to_json() + "\n")
    _write_json(os.path.join(out, "model.json"),
                {"model": inst.model.to_dict(), "lambda": inst.lam, "eps": inst.eps,
                 "statistics": inst.model.statistics()})
    batch = synthesize(inst.factors, inst.model, config.n_samples,
                       make_rng(seed, 100))
    batch.seed = seed
    batch.write(os.path.join(out, "batch"), comment)
    summary = {"N": config.n_samples, "verdict": report.verdict}
    _write_json(os.path.join(out, "report.json"),
                _envelope("gen-model", config, seed, report, summary))
    return 0


def _check_conditions(config, seed, out, force):
    inst = resolve_instance(config, seed)
    report = check_theorem1(inst.factors, inst.model, inst.lam, inst.eps)
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    rows = [{"group": grp, "name": c.name, "paper_eq": c.paper_eq, "lhs": c.lhs, "rhs": c.rhs,
             "holds": c.holds}
            for grp, conds in (("theorem", report.conditions), ("supplementary", report.supplementary))
            for c in conds]
    SweepResult("conditions", ["group", "name", "paper_eq", "lhs", "rhs", "holds"], rows).to_csv(
        os.path.join(out, "conditions.csv"), csv_comment(config, seed))
    try:
        sc = sample_complexity(inst.factors, inst.model, inst.lam, inst.eps, config.xi)
        rows = [{"mode": k, "N_k": sc.N_k[k], "N_k_omega": sc.N_k_omega[k], "L_k": sc.L_k[k],
                 "eps_k": inst.eps[k], "eps_k_min": sc.eps_k_min[k]} for k in range(inst.model.K)]
        SweepResult("sample_complexity", ["mode", "N_k", "N_k_omega", "L_k", "eps_k", "eps_k_min"],
                    rows).to_csv(os.path.join(out, "sample_complexity.csv"),
                                 csv_comment(config, seed, f"xi={config.xi!r}"))
    except HypothesisError as exc:
        print(f"sample complexity skipped: {exc}", file=sys.stderr)
    print(f"verdict: {'pass' if report.verdict else 'fail'}")
    return 0


def _verify_lemmas(config, seed, out, force):
    from .verification import run_all

    inst = resolve_instance(config, seed)
    report = check_theorem1(inst.factors, inst.model, inst.lam, inst.eps)
    checks = run_all(config.lemmas, seed)
    rows = [c.as_row() for c in checks]
    SweepResult("lemmas", ["name", "trials", "violations", "max_ratio", "tolerance", "passed"],
                rows).to_csv(os.path.join(out, "lemmas.csv"), csv_comment(config, seed))
    summary = {"all_passed": all(c.passed for c in checks), "checks": rows}
    _write_json(os.path.join(out, "report.json"),
                _envelope("verify-lemmas", config, seed, report, summary))
    for c in checks:
        print(f"{c.name}: {'pass' if c.passed else 'FAIL'} ({c.violations}/{c.trials})")
    return 0 if summary["all_passed"] else 1


def _campaign(name, fn, filename, extra=""):
    def run(config, seed, out, force):
        inst = resolve_instance(config, seed)
        report = check_theorem1(inst.factors, inst.model, inst.lam, inst.eps)
        res = fn(config, seed, force)
        res.to_csv(os.path.join(out, filename), csv_comment(config, seed, extra))
        _write_json(os.path.join(out, "report.json"),
                    _envelope(name, config, seed, report, res.summary))
        print(json.dumps(res.summary, sort_keys=True, default=_plain))
        return 0
    return run


HANDLERS = {
    "gen-model": _gen_model,
    "check-conditions": _check_conditions,
    "verify-lemmas": _verify_lemmas,
    "risk-gap": _campaign("risk-gap", risk_gap_sweep, "risk_gap.csv",
                          "minimum is over the recorded sphere sample only"),
    "deviation": _campaign("deviation", deviation_sweep, "deviation.csv"),
    "phase-transition": _campaign("phase-transition", phase_transition, "phase_transition.csv",
                                  "demonstrative: no algorithmic convergence guarantee"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ksdl", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ksdl {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration (defaults apply when omitted)")
        p.add_argument("--seed", type=_seed, default=0, help="unsigned 64-bit seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="overwrite OUT and run even if hypotheses fail")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            with open(args.config) as fh:
                config = ExperimentConfig.from_json(fh.read())
        else:
            config = ExperimentConfig()
        _prepare_out(args.out, args.force)
        return HANDLERS[args.command](config, args.seed, args.out, args.force)
    except (ConfigError, FileExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HypothesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
