"""Command-line interface: ``rankattack <command> [flags]``.

Exit status is 0 on success, 1 on a domain failure (no finite MLE, target
unreachable) and 2 on usage or input-format errors.  Reports go to standard
output; machine-readable results only go to ``--out`` files, each paired
with a ``<out>.manifest.json`` run manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .attacks import ALGORITHMS, AttackConfig, coalition_pool, run_attack
from .core import ComparisonDataset, Ranking, aggregate, ranking_from_strengths
from .data import (
    DATASET_MAGIC,
    POLICIES,
    BallotParseError,
    SyntheticSpec,
    ballots_to_pairwise,
    generate_synthetic,
    parse_ballots,
    read_dataset,
    serialize_dataset,
    write_dataset,
)
from .experiments import (
    STANDARD_ELECTORATE,
    SweepSpec,
    budget_for,
    budget_sweep,
    collusion_threshold,
    emit_results,
    hyperparameter_sweep,
    make_target,
)
from .influence import IllConditionedError
from .mle import FitConfig, NonIdentifiableError, check_connectivity, fit

TARGET_KINDS = ("identity", "swap-top", "reverse")
CANDIDATE_POOLS = ("coalition", "discordant")


class UsageError(Exception):
    """Bad flag values or unreadable input (exit status 2)."""


class DomainError(Exception):
    """The request is well formed but has no answer (exit status 1)."""


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    versions: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)


def _versions() -> dict:
    out = {"rankattack": __version__, "python": platform.python_version()}
    for dist in ("numpy", "scipy", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            pass
    return out


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: str | Path, args: argparse.Namespace, inputs: Sequence[str] = ()) -> Path:
    config = {k: v for k, v in vars(args).items() if k != "handler"}
    manifest = RunManifest(
        command=args.command,
        config=config,
        seed=args.seed,
        versions=_versions(),
        inputs={str(p): _sha256(p) for p in inputs if p},
    )
    path = Path(f"{out}.manifest.json")
    path.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True, default=str) + "\n")
    return path


def load_input(path: str, policy: str = "ranked-only") -> ComparisonDataset:
    """Read a dataset file, or a ballot file converted under ``policy``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        if text.startswith(DATASET_MAGIC):
            return read_dataset(path)
        candidates, ballots = parse_ballots(text)
    except BallotParseError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if candidates is None:
        raise UsageError(f"{path}: no candidates header")
    return ballots_to_pairwise(ballots, candidates, policy=policy)


def parse_target(text: str, dataset: ComparisonDataset, current: Ranking) -> Ranking:
    """Candidate names best-first, or a transformation of the current ranking."""
    if text in TARGET_KINDS or text.startswith("promote:"):
        try:
            return make_target(current, text)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    names = [t.strip() for t in text.split(",")]
    try:
        order = tuple(dataset.candidates.index(n) for n in names)
    except KeyError as exc:
        raise UsageError(f"unknown candidate {exc.args[0]!r} in --target") from None
    if sorted(order) != list(range(dataset.m)):
        raise UsageError(f"--target must list all {dataset.m} candidates exactly once")
    return order


def _sweep_target(text: str) -> str | tuple:
    if text in TARGET_KINDS or text.startswith("promote:"):
        return text
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise UsageError("sweep --target takes a kind or candidate indices") from None


def _fit_config(args) -> FitConfig:
    try:
        return FitConfig(args.tol, args.max_iters, args.regularization)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"bad fraction list {text!r}") from None


def _names(dataset: ComparisonDataset, ranking: Ranking) -> str:
    return " > ".join(dataset.candidates.names[c] for c in ranking)


def current_ranking(dataset: ComparisonDataset, config: FitConfig) -> Ranking:
    return ranking_from_strengths(fit(aggregate(dataset), config).strengths)


def cmd_generate(args) -> int:
    try:
        spec = SyntheticSpec(
            m=args.m,
            n_voters=args.n_voters,
            comparisons_per_voter=args.comparisons_per_voter,
            strength_law=args.strength_law,
            rho=args.rho,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dataset, p = generate_synthetic(spec)
    write_dataset(dataset, args.out)
    write_manifest(args.out, args)
    print(f"wrote {len(dataset)} comparisons from {dataset.n_voters} voters to {args.out}")
    print("true strengths: " + ", ".join(f"{n}={v:.6g}" for n, v in zip(dataset.candidates.names, p)))
    print(f"true ranking: {_names(dataset, ranking_from_strengths(p))}")
    return 0


def cmd_fit(args) -> int:
    dataset = load_input(args.input, args.policy)
    config = _fit_config(args)
    counts = aggregate(dataset)
    raw = check_connectivity(counts)
    if not raw.strongly_connected and config.regularization > 0:
        print(
            "warning: comparison graph is not strongly connected; "
            "the estimate exists only because of regularization",
            file=sys.stderr,
        )
    result = fit(counts, config)
    ranking = ranking_from_strengths(result.strengths)
    for name, p in zip(dataset.candidates.names, result.strengths):
        print(f"{name}\t{p:.10g}")
    print(f"ranking: {list(ranking)} ({_names(dataset, ranking)})")
    print(f"log-likelihood: {result.log_likelihood:.10g}")
    print(f"iterations: {result.iterations} (converged: {result.converged})")
    if not result.converged:
        print("warning: iteration cap reached before the tolerance was met", file=sys.stderr)
    if args.out:
        doc = {
            "candidates": list(dataset.candidates.names),
            "strengths": result.strengths.tolist(),
            "ranking": list(ranking),
            "log_likelihood": result.log_likelihood,
            "iterations": result.iterations,
            "converged": result.converged,
        }
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
        write_manifest(args.out, args, [args.input])
    return 0


def cmd_attack(args) -> int:
    dataset = load_input(args.input, args.policy)
    fit_config = _fit_config(args)
    target = parse_target(args.target, dataset, current_ranking(dataset, fit_config))
    coalition = None
    if args.coalition is not None:
        try:
            coalition = frozenset(int(v) for v in args.coalition.split(","))
        except ValueError:
            raise UsageError("--coalition takes comma-separated voter indices") from None
    elif args.coalition_size is not None:
        if not 1 <= args.coalition_size <= dataset.n_voters:
            raise UsageError(f"--coalition-size must be in 1..{dataset.n_voters}")
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
        coalition = frozenset(rng.choice(dataset.n_voters, args.coalition_size, replace=False).tolist())
    try:
        pool = coalition_pool(dataset, coalition)
        budget = args.budget
        if budget is None:
            budget = budget_for(args.budget_fraction, pool.size)
        config = AttackConfig(
            target=target,
            budget=budget,
            coalition=coalition,
            seed=args.seed,
            subsets=args.subsets,
            iterations=args.iterations,
            fit=fit_config,
            on_empty=args.on_empty,
            candidates=args.candidates,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_attack(args.algorithm, dataset, config)
    print(f"algorithm: {args.algorithm}")
    print(f"pool: {pool.size} comparisons, budget: {budget}")
    print(f"target:  {_names(dataset, target)}")
    print(f"initial: {_names(dataset, result.initial_ranking)} (K_d {result.initial_distance})")
    print(f"final:   {_names(dataset, result.final_ranking)} (K_d {result.final_distance})")
    print(f"flips: {len(result.flips)}, rounds: {result.rounds}, refits: {result.refits}")
    print(f"reached target: {'yes' if result.succeeded else 'no'}")
    if args.out:
        write_dataset(result.manipulated, args.out)
        write_manifest(args.out, args, [args.input])
    return 0


def cmd_sweep(args) -> int:
    if args.input:
        source = dict(dataset=load_input(args.input, args.policy))
    else:
        try:
            synthetic = SyntheticSpec(
                m=args.m,
                n_voters=args.n_voters,
                comparisons_per_voter=args.comparisons_per_voter,
                strength_law=args.strength_law,
                rho=args.rho,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        source = dict(synthetic=synthetic)
    algorithms = tuple(a.strip().lower() for a in args.algorithms.split(","))
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        raise UsageError(f"unknown algorithm(s) {unknown}; choose from {sorted(ALGORITHMS)}")
    try:
        spec = SweepSpec(
            **source,
            algorithms=algorithms,
            budget_fractions=_fractions(args.budget_fractions),
            trials=args.trials,
            target=_sweep_target(args.target),
            subsets=args.subsets,
            iterations=args.iterations,
            coalition_size=args.coalition_size,
            seed=args.seed,
            fit=_fit_config(args),
            criterion=args.criterion,
        )
        if args.axis == "budget":
            table = budget_sweep(spec, jobs=args.jobs)
        else:
            if not args.values:
                raise UsageError(f"--axis {args.axis} needs --values")
            values = [int(v) for v in args.values.split(",")]
            table = hyperparameter_sweep(args.axis, values, spec, jobs=args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print("algorithm  fraction  b    T    mean_kd  reduction  success  flips")
    for c in table.cells:
        print(
            f"{c.algorithm:<10} {c.budget_fraction:<9g} {c.subsets:<4} {c.iterations:<4} "
            f"{c.mean_final_kd:<8.3f} {c.mean_reduction:<10.3f} {c.success_rate:<8.2f} {c.mean_flips:.2f}"
        )
    if args.out:
        emit_results(table, args.format, args.out)
        write_manifest(args.out, args, [args.input] if args.input else [])
    return 0


def cmd_threshold(args) -> int:
    dataset = load_input(args.input, args.policy)
    fit_config = _fit_config(args)
    initial = current_ranking(dataset, fit_config)
    target = parse_target(args.target, dataset, initial)
    if args.algorithm not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {args.algorithm!r}")
    result = collusion_threshold(
        dataset,
        target,
        algorithm=args.algorithm,
        trials=args.trials,
        seed=args.seed,
        subsets=args.subsets,
        iterations=args.iterations,
        fit_config=fit_config,
        candidates=args.candidates,
    )
    print(f"initial: {_names(dataset, initial)}")
    print(f"target:  {_names(dataset, target)}")
    for size, rate in sorted(result.evaluated.items()):
        print(f"  coalition {size}: {rate:.2f} of sampled coalitions reached the target")
    if args.out:
        doc = asdict(result)
        doc["evaluated"] = {str(k): v for k, v in result.evaluated.items()}
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
        write_manifest(args.out, args, [args.input])
    if not result.reachable:
        raise DomainError("unreachable target: even the full electorate does not reach it")
    print(f"threshold: {result.threshold} of {result.n_voters} voters ({100 * result.fraction:.1f}%)")
    return 0


def cmd_convert(args) -> int:
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    try:
        candidates, ballots = parse_ballots(text)
    except BallotParseError as exc:
        raise UsageError(f"{args.input}: {exc}") from None
    if candidates is None:
        raise UsageError(f"{args.input}: no candidates header")
    dataset = ballots_to_pairwise(ballots, candidates, policy=args.policy)
    summary = f"{len(dataset)} comparisons from {len(ballots)} ballots"
    if args.out:
        write_dataset(dataset, args.out)
        write_manifest(args.out, args, [args.input])
        print(summary)
    else:
        sys.stdout.write(serialize_dataset(dataset))
        print(summary, file=sys.stderr)
    return 0


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model fitting")
    g.add_argument("--tol", type=float, default=1e-8, help="stop when no strength moves more than this")
    g.add_argument("--max-iters", type=int, default=10_000, help="MM iteration cap")
    g.add_argument("--regularization", type=float, default=0.0, help="pseudo-count added to every pair")


def _add_synthetic_flags(p: argparse.ArgumentParser, required: bool) -> None:
    g = p.add_argument_group("synthetic electorate")
    default = STANDARD_ELECTORATE
    g.add_argument("--m", type=int, required=required, default=None if required else default.m, help="candidates")
    g.add_argument(
        "--n-voters", type=int, required=required, default=None if required else default.n_voters, help="voters"
    )
    g.add_argument(
        "--comparisons-per-voter", type=int, default=None, help="distinct pairs per voter (default: every pair)"
    )
    g.add_argument("--strength-law", choices=("geometric", "uniform"), default="geometric")
    g.add_argument("--rho", type=float, default=default.rho, help="ratio of the geometric strength law")


def _add_attack_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("attack")
    g.add_argument("--subsets", type=int, default=20, help="subsets per partition round (b)")
    g.add_argument("--iterations", type=int, default=50, help="partition rounds (n for RSA, T for ASSA)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankattack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rankattack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name, handler, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--seed", type=int, default=0, help="root seed for every random choice")
        p.set_defaults(handler=handler)
        return p

    def input_flags(p, out_help):
        p.add_argument("input", help="dataset file, or a ballot file (see --policy)")
        p.add_argument(
            "--policy", choices=POLICIES, default="ranked-only", help="pairwise expansion for ballot files"
        )
        p.add_argument("--out", help=out_help)

    target_help = (
        "candidate names best-first, comma-separated; or identity, swap-top, reverse, promote:K, promote:last"
    )
    pool_help = "ASSA search pool: every coalition comparison, or only those disagreeing with the target"

    p = command("generate", cmd_generate, "draw a synthetic Bradley-Terry electorate")
    _add_synthetic_flags(p, required=True)
    p.add_argument("--out", required=True, help="dataset file to write")

    p = command("fit", cmd_fit, "fit Bradley-Terry strengths and report the ranking")
    input_flags(p, "JSON file for the fitted strengths")
    _add_fit_flags(p)

    p = command("attack", cmd_attack, "run one flip attack against a dataset")
    input_flags(p, "file for the manipulated dataset")
    p.add_argument("--algorithm", choices=sorted(ALGORITHMS), default="assa")
    p.add_argument("--target", required=True, help=target_help)
    budget = p.add_mutually_exclusive_group(required=True)
    budget.add_argument("--budget", type=int, help="maximum number of flipped comparisons (k)")
    budget.add_argument("--budget-fraction", type=float, help="budget as a fraction of the coalition pool")
    coalition = p.add_mutually_exclusive_group()
    coalition.add_argument("--coalition", help="comma-separated voter indices (default: every voter)")
    coalition.add_argument("--coalition-size", type=int, help="random coalition of this many voters")
    _add_attack_flags(p)
    p.add_argument("--on-empty", choices=("restart", "stop"), default="restart", help="ASSA after a fruitless round")
    p.add_argument("--candidates", choices=CANDIDATE_POOLS, default="coalition", help=pool_help)
    _add_fit_flags(p)

    p = command("sweep", cmd_sweep, "budget or hyperparameter sweep over seeded trials")
    p.add_argument("input", nargs="?", help="dataset or ballot file (default: synthetic electorates)")
    p.add_argument("--policy", choices=POLICIES, default="ranked-only", help="pairwise expansion for ballot files")
    _add_synthetic_flags(p, required=False)
    p.add_argument("--algorithms", default="rf,gf,rsa,assa", help="comma-separated subset of rf,gf,rsa,assa")
    p.add_argument("--budget-fractions", default="0.01,0.05,0.1,0.2", help="comma-separated fractions of the pool")
    p.add_argument("--trials", type=int, default=20, help="seeded trials per cell")
    p.add_argument(
        "--target", default="swap-top", help="identity, swap-top, reverse, promote:K, promote:last, or indices"
    )
    p.add_argument("--coalition-size", type=int, help="random coalition per trial (default: every voter)")
    p.add_argument("--criterion", choices=("exact", "improved"), default="exact", help="what counts as success")
    p.add_argument("--axis", choices=("budget", "subsets", "iterations"), default="budget")
    p.add_argument("--values", help="comma-separated values for --axis subsets or iterations")
    _add_attack_flags(p)
    _add_fit_flags(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="results file")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = command("threshold", cmd_threshold, "smallest coalition that reaches the target")
    input_flags(p, "JSON file for the threshold result")
    p.add_argument("--target", required=True, help=target_help)
    p.add_argument("--algorithm", choices=sorted(ALGORITHMS), default="assa")
    p.add_argument("--trials", type=int, default=5, help="sampled coalitions per size")
    p.add_argument("--candidates", choices=CANDIDATE_POOLS, default="coalition", help=pool_help)
    _add_attack_flags(p)
    _add_fit_flags(p)

    p = command("convert", cmd_convert, "expand a ballot file into pairwise comparisons")
    p.add_argument("input", help="ballot file")
    p.add_argument("--policy", choices=POLICIES, default="ranked-only")
    p.add_argument("--out", help="dataset file to write (default: standard output)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help and --version exit 0, bad flags exit 2
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"rankattack {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (NonIdentifiableError, IllConditionedError, DomainError) as exc:
        print(f"rankattack {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
