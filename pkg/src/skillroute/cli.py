"""Command-line entry point.

Exit codes: 0 success, 1 validation or usage error, 2 infeasible selection.
Errors go to stderr as one JSON object per line.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PREDICTOR_SOURCES, ConfigError, EngineConfig, load_config
from .engine import build_artifacts, recommend
from .harness import evaluation_report, frontier_csv, generate_synthetic
from .matrices import CapabilityMatrices, MatrixError, build_matrices
from .predictor import SCHEMES, PredictorError, nmf_factorize
from .profiling import CriticParseError, HttpCritic, MockCritic, critique, request_from_dict
from .records import (DatasetError, dump_dataset, fixture_dir, parse_dataset, read_jsonl,
                      record_to_dict, write_jsonl)
from .selector import MODES, InfeasibleSelectionError, SelectionError, infer_requirements_for
from .taxonomy import PrecomputedEmbedder, SkillTaxonomy, TaxonomyError, build_taxonomy

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2

# EngineConfig fields exposed as flags; dest names match the field names
_CONFIG_FLAGS = {
    "delta": float, "dim": int, "kappa": float, "rho": float, "tau": float, "k": int,
    "nmf_iterations": int, "lr": float, "epochs": int, "l2": float, "seed": int,
    "scheme": str, "predictor": str, "budget": float, "latency_budget": float, "mode": str,
    "weights": str, "use_imputed": str, "theta": float,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _add_config_flags(p: argparse.ArgumentParser, only: tuple[str, ...] | None = None) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for name, kind in _CONFIG_FLAGS.items():
        if only is not None and name not in only:
            continue
        flag = "--" + name.replace("_", "-")
        aliases = [flag]
        if name == "latency_budget":
            aliases.append("--latency")
        choices = {"scheme": SCHEMES, "predictor": PREDICTOR_SOURCES, "mode": MODES}.get(name)
        p.add_argument(*aliases, dest=name, type=kind, default=None, choices=choices)


def _dataset_arg(p):
    p.add_argument("--dataset", default=None,
                   help="directory with models/tasks/outcomes/profiles .jsonl "
                        "(default: bundled fixture)")
    p.add_argument("--embeddings", help="precomputed phrase embeddings JSONL")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skillroute", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("profile", help="critique triples into profiles.jsonl")
    p.add_argument("--triples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--critic", choices=("mock", "live"), default="mock")
    p.add_argument("--rulebook", help="JSON object keyword -> skill (mock critic)")

    p = sub.add_parser("taxonomy", help="induce the skill taxonomy")
    _dataset_arg(p)
    _add_config_flags(p, ("delta", "dim"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("matrices", help="capability matrices")
    msub = p.add_subparsers(dest="action", parser_class=_Parser)
    b = msub.add_parser("build", help="build C, R and cost vectors")
    _dataset_arg(b)
    b.add_argument("--taxonomy", help="taxonomy JSON (default: induce from the dataset)")
    _add_config_flags(b, ("delta", "dim", "kappa", "rho", "k", "nmf_iterations", "seed"))
    b.add_argument("--out", required=True)
    b.add_argument("--factors-out", help="also fit masked NMF and write the factors here")

    p = sub.add_parser("train", help="train the performance predictor")
    _dataset_arg(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("select", help="recommend a model for a task or skill list")
    _dataset_arg(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--task")
    g.add_argument("--skills", help="comma-separated skill labels or paraphrases")
    _add_config_flags(p)

    p = sub.add_parser("evaluate", help="leave-one-task-out evaluation")
    _dataset_arg(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("frontier", help="per-model cost vs mean score CSV")
    _dataset_arg(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--M", type=int, default=4)
    p.add_argument("--S", type=int, default=3)
    p.add_argument("--T", type=int, default=5)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--cost-spread", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    return parser


def _config(args) -> EngineConfig:
    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS if hasattr(args, name)}
    return load_config(getattr(args, "config", None), overrides)


def _dataset(args):
    return parse_dataset(args.dataset or fixture_dir())


def _embedder(args):
    return PrecomputedEmbedder.from_jsonl(args.embeddings) if getattr(args, "embeddings", None) else None


def _write(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def cmd_profile(args) -> int:
    if args.critic == "live":
        critic = HttpCritic.from_env()
    else:
        if not args.rulebook:
            raise UsageError("--rulebook is required with the mock critic")
        critic = MockCritic(json.loads(Path(args.rulebook).read_text(encoding="utf-8")))
    profiles = []
    for lineno, obj in read_jsonl(args.triples):
        try:
            profiles.append(critique(request_from_dict(obj), critic))
        except (KeyError, ValueError) as exc:
            raise DatasetError(f"{args.triples}:{lineno}: {exc}") from exc
    write_jsonl(args.out, (record_to_dict(p) for p in profiles))
    print(json.dumps({"profiles": len(profiles), "critic": critic.label, "out": args.out}))
    return EXIT_OK


def cmd_taxonomy(args) -> int:
    cfg = _config(args)
    tax = build_taxonomy(_dataset(args).profiles, cfg.delta, cfg.dim, _embedder(args))
    _write(args.out, json.dumps(tax.to_dict(), indent=2, sort_keys=True) + "\n")
    print(json.dumps({"skills": list(tax.skills), "out": args.out}))
    return EXIT_OK


def cmd_matrices(args) -> int:
    if args.action != "build":
        raise UsageError("usage: skillroute matrices build --out PATH [...]")
    cfg = _config(args)
    d = _dataset(args)
    if args.taxonomy:
        tax = SkillTaxonomy.from_dict(json.loads(Path(args.taxonomy).read_text(encoding="utf-8")))
    else:
        tax = build_taxonomy(d.profiles, cfg.delta, cfg.dim, _embedder(args))
    mat = build_matrices(d, tax, cfg.kappa, cfg.rho)
    _write(args.out, json.dumps(mat.to_dict(), sort_keys=True) + "\n")
    if args.factors_out:
        k = min(cfg.k, *mat.C.shape)
        factors = nmf_factorize(mat.C, mat.observed, k, cfg.nmf_iterations, cfg.seed)
        _write(args.factors_out, json.dumps(factors.to_dict(), sort_keys=True) + "\n")
    print(json.dumps({"models": len(mat.model_ids), "tasks": len(mat.task_ids),
                      "skills": len(mat.skills), "out": args.out}))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    art = build_artifacts(_dataset(args), cfg, embedder=_embedder(args))
    if art.predictor is None:
        raise PredictorError("no observed model-task scores to train on")
    _write(args.out, art.predictor.to_json() + "\n")
    losses = art.predictor.losses
    print(json.dumps({"scheme": art.predictor.scheme, "initial_loss": losses[0],
                      "final_loss": losses[-1], "out": args.out}))
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = _config(args)
    if cfg.mode != "pareto" and cfg.budget is None and cfg.latency_budget is None:
        raise UsageError(f"--budget or --latency is required in mode {cfg.mode}")
    art = build_artifacts(_dataset(args), cfg, train=cfg.predictor == "trained",
                          embedder=_embedder(args))
    skills = [s.strip() for s in args.skills.split(",")] if args.skills else None
    r_t = infer_requirements_for(art.matrices, args.task, skills, art.taxonomy)
    rec = recommend(art, r_t, cfg, task_id=args.task)
    print(rec.to_json(indent=2))
    print()
    print(rec.rationale)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    report = evaluation_report(_dataset(args), cfg, _embedder(args))
    _write(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    summary = report["summary"]
    print(json.dumps({p: {k: v[k] for k in ("selection_precision", "accuracy_gap", "total_cost")}
                      for p, v in summary.items()}, indent=2))
    return EXIT_OK


def cmd_frontier(args) -> int:
    _write(args.out, frontier_csv(_dataset(args)))
    print(json.dumps({"out": args.out}))
    return EXIT_OK


def cmd_synth(args) -> int:
    d, pop = generate_synthetic(args.M, args.S, args.T, args.n, args.cost_spread, args.seed)
    paths = dump_dataset(d, args.out)
    truth = {"true_proficiency": pop.true_proficiency.tolist(),
             "task_requirements": pop.task_requirements.tolist(),
             "skills": list(pop.skill_names), "seed": pop.seed}
    _write(str(Path(args.out) / "truth.json"), json.dumps(truth, indent=2) + "\n")
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return EXIT_OK


COMMANDS = {"profile": cmd_profile, "taxonomy": cmd_taxonomy, "matrices": cmd_matrices,
            "train": cmd_train, "select": cmd_select, "evaluate": cmd_evaluate,
            "frontier": cmd_frontier, "synth": cmd_synth}


def _fail(kind: str, exc: BaseException, code: int, **extra) -> int:
    payload = {"error": kind, "message": str(exc).strip().splitlines()[0] if str(exc) else kind}
    payload.update(extra)
    print(json.dumps(payload), file=sys.stderr)
    return code


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc).split("\n", 1)[-1], file=sys.stderr, end="")
        return _fail("usage", exc, EXIT_INVALID)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return _fail("usage", UsageError("no subcommand given"), EXIT_INVALID)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InfeasibleSelectionError as exc:
        return _fail("infeasible", exc, EXIT_INFEASIBLE,
                     nearest_miss=exc.nearest_miss, constraint=exc.constraint)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_INVALID)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_INVALID)
    except DatasetError as exc:
        return _fail("dataset", exc, EXIT_INVALID)
    except (TaxonomyError, MatrixError, SelectionError, PredictorError, CriticParseError) as exc:
        return _fail("validation", exc, EXIT_INVALID)
    except (OSError, ValueError, RuntimeError) as exc:
        return _fail("error", exc, EXIT_INVALID)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
