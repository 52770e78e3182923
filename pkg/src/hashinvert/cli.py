"""Command line: ``hashinvert {encode,invert,verify,bench,solve}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

from . import sha1
from .cegar import CegarConfig, campaign_targets, check, find_preimage, run_campaign
from .cnf import DimacsError, parse_dimacs, write_dimacs
from .encoder import ABSTRACTION_MODES, emit_varmap, encode_instance, parse_mask
from .solver import Solver, SolverConfig
from .solver.restarts import POLICY_KINDS

RESTART_MODES = (*POLICY_KINDS, "mab")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_TIMEOUT = 3
EXIT_BLOCKED = 4
EXIT_UNSAT = 5
EXIT_INTERRUPTED = 130
EXIT_SAT = 10
EXIT_UNSAT_CNF = 20

STATUS_EXIT = {"solved": EXIT_OK, "timeout": EXIT_TIMEOUT, "blocked": EXIT_BLOCKED, "unsat": EXIT_UNSAT}

CSV_FIELDS = ("nsteps", "mode", "index", "target", "status", "verified", "wall", "conflicts", "iterations",
              "refinements", "preimage")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    nsteps: int = 20
    target: str | None = None
    seed: int = 0
    abstract_k: int = 0
    abstraction: str = "identity"
    mask: str | None = None
    padding: int | None = None
    restart: str = "mab"
    gamma: float = 0.99
    xi: float = 0.5
    uniform_base: int = 512
    geo_base: float = 100.0
    geo_factor: float = 1.5
    conflict_budget: int | None = None
    time_budget: float | None = None
    jobs: int = 1
    out: str | None = None

    def validate(self) -> "RunConfig":
        if not 1 <= self.nsteps <= sha1.MAX_STEPS:
            raise ConfigError(f"nsteps must be in 1..{sha1.MAX_STEPS}, got {self.nsteps}")
        if self.target is not None:
            try:
                sha1.digest_from_hex(self.target)
            except ValueError as exc:
                raise ConfigError(f"bad target: {exc}") from None
        if self.abstraction not in ABSTRACTION_MODES:
            raise ConfigError(f"abstraction must be one of {ABSTRACTION_MODES}")
        if self.abstract_k < 0 or self.abstract_k > max(0, self.nsteps - 20):
            raise ConfigError(f"abstract-k must be in 0..{max(0, self.nsteps - 20)} for {self.nsteps} steps")
        if self.mask is not None:
            try:
                parse_mask(self.mask)
            except ValueError as exc:
                raise ConfigError(f"bad mask: {exc}") from None
        if self.padding is not None and not 0 <= self.padding <= 447:
            raise ConfigError("padding length must be in 0..447 bits")
        if self.restart not in RESTART_MODES:
            raise ConfigError(f"restart must be one of {RESTART_MODES}")
        if self.conflict_budget is not None and self.conflict_budget < 0:
            raise ConfigError("conflict budget must be non-negative")
        if self.time_budget is not None and self.time_budget < 0:
            raise ConfigError("time budget must be non-negative")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        try:
            self.solver_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_text(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        data = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**data).validate()

    def solver_config(self) -> SolverConfig:
        return SolverConfig(restart=self.restart, gamma=self.gamma, xi=self.xi, uniform_base=self.uniform_base,
                            geo_base=self.geo_base, geo_factor=self.geo_factor)

    def cegar_config(self) -> CegarConfig:
        return CegarConfig(abstract_k=self.abstract_k, mode=self.abstraction,
                           mask=parse_mask(self.mask) if self.mask else {}, padding=self.padding,
                           solver=self.solver_config(), conflict_budget=self.conflict_budget,
                           time_budget=self.time_budget)

    def resolve_target(self) -> tuple[int, ...]:
        if self.target is not None:
            return sha1.digest_from_hex(self.target)
        return campaign_targets(self.nsteps, 1, self.seed)[0][1]


@dataclass
class StatsRecord:
    verdict: str
    wall: float
    conflicts: int = 0
    decisions: int = 0
    propagations: int = 0
    restarts: int = 0
    restarts_per_arm: dict[str, int] = field(default_factory=dict)
    reward_per_arm: dict[str, float] = field(default_factory=dict)
    iterations: int = 0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


# -- argument parsing ----------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", help="40-hex-char digest (default: hash of a block drawn from --seed)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--abstract-k", type=int, default=0, help="abstract the first k steps")
    p.add_argument("--abstraction", choices=ABSTRACTION_MODES, default="identity")
    p.add_argument("--mask", help="known message bits: 'pos:val,...' or a 128-char hex template with ? wildcards")
    p.add_argument("--padding", type=int, metavar="BITS", help="constrain the block to FIPS padding of a BITS-long message")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restart", choices=RESTART_MODES, default="mab")
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--xi", type=float, default=0.5)
    p.add_argument("--uniform-base", type=int, default=512)
    p.add_argument("--geo-base", type=float, default=100.0)
    p.add_argument("--geo-factor", type=float, default=1.5)
    p.add_argument("--conflict-budget", type=int)
    p.add_argument("--time-budget", type=float, help="seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hashinvert", description="SAT-based preimage search on step-reduced SHA-1")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="write a DIMACS instance and its variable map")
    p.add_argument("--nsteps", type=int, default=20)
    _add_run_flags(p)
    p.add_argument("--out", help="DIMACS path (default stdout); the varmap goes to OUT.varmap.json")

    p = sub.add_parser("invert", help="search for a preimage")
    p.add_argument("--nsteps", type=int, default=20)
    _add_run_flags(p)
    _add_solver_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write the preimage hex here as well")
    p.add_argument("--verify-only", metavar="BLOCK", help="skip solving; check BLOCK against the target")
    p.add_argument("--config", help="read the run configuration from this JSON file")
    p.add_argument("--print-config", action="store_true", help="print the parsed configuration and exit")

    p = sub.add_parser("verify", help="check a block against a digest")
    p.add_argument("--nsteps", type=int, default=20)
    p.add_argument("--block", required=True, help="128 hex chars")
    p.add_argument("--target", required=True, help="40 hex chars")
    p.add_argument("--trace", action="store_true", help="print the step trace on mismatch")

    p = sub.add_parser("solve", help="run the CDCL solver on a DIMACS file")
    p.add_argument("path", help="DIMACS CNF file ('-' for stdin)")
    _add_solver_flags(p)
    p.add_argument("--no-model", action="store_true", help="omit the v lines")

    p = sub.add_parser("bench", help="run campaigns over an nsteps x restart-mode matrix")
    p.add_argument("--nsteps", default="20", help="comma separated list")
    p.add_argument("--modes", default="luby,mab", help=f"comma separated subset of {','.join(RESTART_MODES)}")
    p.add_argument("--targets", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--abstract-k", type=int, default=0)
    p.add_argument("--abstraction", choices=ABSTRACTION_MODES, default="identity")
    _add_solver_flags(p)
    p.set_defaults(restart=None)  # --restart X is shorthand for --modes X
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="bench", help="output directory")
    return parser


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def config_from_args(args: argparse.Namespace) -> RunConfig:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    return RunConfig(**{k: v for k, v in vars(args).items() if k in names and v is not None}).validate()


# -- commands ------------------------------------------------------------------------

def cmd_encode(cfg: RunConfig, stdout: IO[str]) -> int:
    cegar = cfg.cegar_config()
    inst = encode_instance(cfg.resolve_target(), cfg.nsteps, abstract_k=cfg.abstract_k, mask=cegar.mask,
                           padding=cfg.padding, mode=cfg.abstraction)
    # the output path is not part of the instance; leave it out so reruns are byte-identical
    inst.formula.comments.append(f"config {dataclasses.replace(cfg, out=None).to_text()}")
    if cfg.out is None:
        write_dimacs(inst.formula, stdout)
        return EXIT_OK
    path = Path(cfg.out)
    varmap = path.with_name(path.name + ".varmap.json")
    try:
        with open(path, "w") as fh:
            write_dimacs(inst.formula, fh)
        with open(varmap, "w") as fh:
            emit_varmap(inst, fh)
    except OSError as exc:
        print(f"error: cannot write {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID
    print(f"wrote {path} ({inst.formula.num_vars} vars, {len(inst.formula.clauses)} clauses) and {varmap}", file=sys.stderr)
    return EXIT_OK


def cmd_invert(cfg: RunConfig, stdout: IO[str], verify_only: str | None = None) -> int:
    target = cfg.resolve_target()
    if verify_only is not None:
        block = sha1.block_from_hex(verify_only)
        valid, _ = check(block, target, cfg.nsteps)
        print("valid" if valid else "invalid", file=stdout)
        return EXIT_OK if valid else EXIT_INVALID

    def log_iteration(it) -> None:
        print(json.dumps({"event": "iteration", **it.to_dict()}), file=sys.stderr, flush=True)

    res = find_preimage(target, cfg.nsteps, cfg.cegar_config(), on_iteration=log_iteration)
    st = res.stats
    record = StatsRecord(res.status, res.wall, st.conflicts, st.decisions, st.propagations, st.restarts,
                         dict(st.restarts_per_arm), dict(st.reward_per_arm), len(res.iterations))
    if res.solved:
        text = sha1.block_to_hex(res.preimage)
        print(text, file=stdout)
        if cfg.out:
            Path(cfg.out).write_text(text + "\n")
    print(record.to_json(), file=stdout)
    return STATUS_EXIT[res.status]


def cmd_verify(block_hex: str, target_hex: str, nsteps: int, trace: bool, stdout: IO[str]) -> int:
    block = sha1.block_from_hex(block_hex)
    target = sha1.digest_from_hex(target_hex)
    valid, tr = check(block, target, nsteps)
    print("valid" if valid else "invalid", file=stdout)
    if not valid and trace:
        for s in tr.states:
            print(f"t={s.t:2d} " + " ".join(f"{x:08x}" for x in s.words), file=stdout)
        print(f"digest   {sha1.digest_to_hex(tr.digest)}", file=stdout)
        print(f"expected {sha1.digest_to_hex(target)}", file=stdout)
    return EXIT_OK if valid else EXIT_INVALID


def cmd_solve(args: argparse.Namespace, stdout: IO[str]) -> int:
    cfg = SolverConfig(restart=args.restart, gamma=args.gamma, xi=args.xi, uniform_base=args.uniform_base,
                       geo_base=args.geo_base, geo_factor=args.geo_factor)
    if args.path == "-":
        formula = parse_dimacs(sys.stdin)
    else:
        with open(args.path) as fh:
            formula = parse_dimacs(fh)
    res = Solver(formula, config=cfg).solve(conflict_budget=args.conflict_budget, time_budget=args.time_budget)
    print(res.status, file=stdout)
    if res.sat and not args.no_model:
        for line in res.model_lines():
            print(line, file=stdout)
    print(json.dumps(res.stats.to_dict(), sort_keys=True), file=stdout)
    return {"SAT": EXIT_SAT, "UNSAT": EXIT_UNSAT_CNF}.get(res.status, EXIT_TIMEOUT)


def cmd_bench(args: argparse.Namespace, stdout: IO[str]) -> int:
    nsteps_list = _int_list(args.nsteps)
    modes = [args.restart] if args.restart else _str_list(args.modes)
    for m in modes:
        if m not in RESTART_MODES:
            raise ConfigError(f"unknown restart mode {m!r}")
    base = RunConfig(seed=args.seed, abstract_k=args.abstract_k, abstraction=args.abstraction,
                     gamma=args.gamma, xi=args.xi, uniform_base=args.uniform_base, geo_base=args.geo_base,
                     geo_factor=args.geo_factor, conflict_budget=args.conflict_budget,
                     time_budget=args.time_budget, jobs=args.jobs)
    configs = [dataclasses.replace(base, nsteps=n, restart=m).validate() for n in nsteps_list for m in modes]

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    lock = threading.Lock()
    interrupted = False
    with open(outdir / "bench.csv", "w", newline="") as csv_fh, open(outdir / "stats.jsonl", "w") as stats_fh:
        writer = csv.DictWriter(csv_fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        csv_fh.flush()
        try:
            for cfg in configs:
                cactus: list[float] = []

                def on_record(rec, cfg=cfg, cactus=cactus) -> None:
                    with lock:
                        row = {k: getattr(rec, k) for k in CSV_FIELDS if hasattr(rec, k)}
                        row["mode"] = cfg.restart
                        writer.writerow(row)
                        csv_fh.flush()
                        stats_fh.write(json.dumps({"mode": cfg.restart, **rec.to_dict()}) + "\n")
                        stats_fh.flush()
                        if rec.verified:
                            cactus.append(rec.wall)

                report = run_campaign(cfg.nsteps, args.targets, cfg.seed, cfg.cegar_config(), jobs=cfg.jobs,
                                      on_record=on_record)
                (outdir / f"cactus_{cfg.restart}_n{cfg.nsteps}.txt").write_text(
                    "".join(f"{t:.6f}\n" for t in report.cactus()))
                print(f"nsteps={cfg.nsteps} mode={cfg.restart}: {report.solved}/{len(report.records)} solved, "
                      f"{sum(r.conflicts for r in report.records)} conflicts", file=stdout)
        except KeyboardInterrupt:
            interrupted = True
    return EXIT_INTERRUPTED if interrupted else EXIT_OK


def main(argv: Sequence[str] | None = None, stdout: IO[str] | None = None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "verify":
            try:
                sha1.block_from_hex(args.block)
                sha1.digest_from_hex(args.target)
            except ValueError as exc:
                parser.error(str(exc))
            if not 1 <= args.nsteps <= sha1.MAX_STEPS:
                parser.error(f"nsteps must be in 1..{sha1.MAX_STEPS}")
            return cmd_verify(args.block, args.target, args.nsteps, args.trace, stdout)
        if args.command == "bench":
            return cmd_bench(args, stdout)
        if args.command == "solve":
            try:
                return cmd_solve(args, stdout)
            except (OSError, DimacsError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_INVALID
        if args.command == "invert" and args.config:
            cfg = RunConfig.from_text(Path(args.config).read_text())
        else:
            cfg = config_from_args(args)
        if args.command == "encode":
            return cmd_encode(cfg, stdout)
        if args.print_config:
            print(cfg.to_text(), file=stdout)
            return EXIT_OK
        if args.verify_only is not None:
            try:
                sha1.block_from_hex(args.verify_only)
            except ValueError as exc:
                parser.error(str(exc))
        return cmd_invert(cfg, stdout, args.verify_only)
    except ConfigError as exc:
        parser.error(str(exc))
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
