"""``guire`` command line.

Every flag can also come from a config file (``--config`` or ``GUIRE_CONFIG``):
an INI document with one section per subcommand whose keys are the flag names,
e.g. ``[train-ground]`` / ``steps = 200``. Precedence is flag > environment
variable > config file > built-in default. Exit codes: 0 success, 1 remote
failure, 2 input error, 3 numeric failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import asdict
from typing import Optional, Sequence

EXIT_OK = 0
EXIT_REMOTE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64

CONFIG_ENV = "GUIRE_CONFIG"
ENDPOINT_ENV = "GUIRE_ENDPOINT"

log = logging.getLogger("guire")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    # fixed width keeps --help byte-stable across terminals
    def __init__(self, prog):
        super().__init__(prog, width=88, max_help_position=32)

    def _get_help_string(self, action):
        if action.required:
            return action.help
        return super()._get_help_string(action)


def _dims(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("dimensions must be positive")
    return w, h


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="guire", description="Verifiable-reward GUI agent toolkit.", formatter_class=_Formatter)
    p.add_argument("--config", default=None, help=f"INI config file (also ${CONFIG_ENV})")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("reward-check", help="score candidates against ground truth",
                       formatter_class=_Formatter)
    s.add_argument("--candidates", required=True, help="candidate.v1 JSONL")
    s.add_argument("--gt", required=True, help="ground_truth.v1 JSONL")
    s.add_argument("--mode", choices=("sparse", "dense"), default="dense", help="location reward")
    s.add_argument("--lambda", dest="lam", type=float, default=0.5, help="dense decay rate")
    s.add_argument("--out", default="-", help="report path, '-' for stdout")

    s = sub.add_parser("train-ground", help="toy GRPO grounding run", formatter_class=_Formatter)
    s.add_argument("--grid", type=_pos_int, default=8, help="grid side G")
    s.add_argument("--steps", type=_nonneg_int, default=500, help="update steps N")
    s.add_argument("--seed", type=int, default=0, help="random seed")
    s.add_argument("--m-full", type=_pos_int, default=8, help="full-image samples per group")
    s.add_argument("--m-crop", type=_nonneg_int, default=4, help="zoomed-crop samples per group")
    s.add_argument("--lr", type=float, default=0.5, help="learning rate")
    s.add_argument("--mode", choices=("sparse", "dense"), default="sparse", help="location reward")
    s.add_argument("--lambda", dest="lam", type=float, default=0.5, help="dense decay rate")
    s.add_argument("--screen", type=_dims, default="800x800", help="screen WIDTHxHEIGHT")
    s.add_argument("--target-size", type=_dims, default=None, help="target WIDTHxHEIGHT; unset means cell side minus 2")
    s.add_argument("--smoothing", type=float, default=0.0, help="logit blur width in cells")
    s.add_argument("--batch", type=_pos_int, default=1, help="groups per step")
    s.add_argument("--out", default="-", help="step_stats.v1 JSONL path, '-' for stdout")

    s = sub.add_parser("eval-nav", help="navigation success rate", formatter_class=_Formatter)
    s.add_argument("--env", default=None, help="env.v1 JSON; unset uses the bundled toy phone")
    s.add_argument("--policy", choices=("oracle", "random", "remote"), default="oracle", help="policy kind")
    s.add_argument("--max-steps", type=_pos_int, default=15, help="step budget per episode")
    s.add_argument("--runs", type=_pos_int, default=5, help="seeded runs to average")
    s.add_argument("--seed", type=int, default=0, help="random seed")
    s.add_argument("--endpoint", default=None, help=f"remote policy URL (also ${ENDPOINT_ENV})")
    s.add_argument("--dump", default=None, help="write trajectory.v1 JSONL here")
    s.add_argument("--out", default="-", help="report path, '-' for stdout")

    s = sub.add_parser("rollout", help="synthetic trajectories and CoT records", formatter_class=_Formatter)
    s.add_argument("--env", default=None, help="env.v1 JSON; unset uses the bundled toy phone")
    s.add_argument("--generated", type=_nonneg_int, default=0, help="extra curriculum tasks per level")
    s.add_argument("--seed", type=int, default=0, help="random seed")
    s.add_argument("--retry-budget", type=_nonneg_int, default=1, help="critic-guided retries")
    s.add_argument("--max-steps", type=_pos_int, default=20, help="step budget per attempt")
    s.add_argument("--threshold", type=float, default=1.0, help="judge keep threshold")
    s.add_argument("--perturbations", type=_nonneg_int, default=1, help="perturbed copies per kept trajectory")
    s.add_argument("--cot-mode", choices=("short", "long"), default="long", help="reasoning sections")
    s.add_argument("--workers", type=_pos_int, default=1, help="concurrent rollouts")
    s.add_argument("--out", required=True, help="nav_record.v1 JSONL")
    s.add_argument("--drop-log", default=None, help="drop_log.v1 JSONL")
    s.add_argument("--trajectories", default=None, help="trajectory.v1 JSONL")
    s.add_argument("--qa", default=None, help="qa_record.v1 JSONL")

    s = sub.add_parser("unify", help="boxes and points to unified point records", formatter_class=_Formatter)
    s.add_argument("--in", dest="inp", required=True, help="source_record.v1 JSONL")
    s.add_argument("--out", required=True, help="unified_grounding.v1 JSONL")
    s.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")

    s = sub.add_parser("compose", help="tile records into composites", formatter_class=_Formatter)
    s.add_argument("--in", dest="inp", required=True, help="source_record.v1 JSONL")
    s.add_argument("--out", required=True, help="composite.v1 JSONL")
    s.add_argument("--rows", type=_pos_int, default=2, help="grid rows")
    s.add_argument("--cols", type=_pos_int, default=2, help="grid columns")
    s.add_argument("--root", default=None, help="directory image refs are relative to")
    s.add_argument("--image-dir", default=None, help="write composited PNGs here")

    s = sub.add_parser("mix", help="weighted interleave of JSONL streams", formatter_class=_Formatter)
    s.add_argument("--stream", action="append", default=[], metavar="TAG=PATH", help="input stream")
    s.add_argument("--weight", action="append", default=[], metavar="TAG=W", help="mixture weight")
    s.add_argument("--n", type=_nonneg_int, required=True, help="items to draw")
    s.add_argument("--seed", type=int, default=0, help="random seed")
    s.add_argument("--out", required=True, help="output JSONL")
    s.add_argument("--manifest", default=None, help="mixture_manifest.v1 JSON")
    return p


# --------------------------------------------------------------------------- config


def _subparsers(parser: argparse.ArgumentParser) -> dict[str, argparse.ArgumentParser]:
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return dict(a.choices)
    return {}


def _load_config(path: Optional[str]) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    if path:
        try:
            with open(path, encoding="utf-8") as f:
                cp.read_file(f)
        except OSError as e:
            raise InputError(f"cannot read config {path}: {e}") from e
        except configparser.Error as e:
            raise InputError(f"bad config {path}: {e}") from e
    return cp


def _apply_layers(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    """Install config-file then environment values as subcommand defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, rest = pre.parse_known_args(argv)
    cfg = _load_config(known.config or os.environ.get(CONFIG_ENV))
    command = next((a for a in rest if not a.startswith("-")), None)
    subs = _subparsers(parser)
    if command not in subs:
        return
    sp = subs[command]
    by_key = {}
    for a in sp._actions:
        for opt in a.option_strings:
            if opt.startswith("--"):
                by_key[opt[2:]] = a
                by_key[opt[2:].replace("-", "_")] = a
    defaults = {}
    if cfg.has_section(command):
        for key, value in cfg.items(command):
            action = by_key.get(key)
            if action is None:
                raise UsageError(f"unknown key {key!r} in [{command}] of the config file")
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config {command}.{key}: {value!r} not in {sorted(action.choices)}")
            if isinstance(action, argparse._StoreTrueAction):
                defaults[action.dest] = value.strip().lower() in ("1", "true", "yes", "on")
            else:
                defaults[action.dest] = value
            action.required = False
    if "endpoint" in {a.dest for a in sp._actions} and os.environ.get(ENDPOINT_ENV):
        defaults["endpoint"] = os.environ[ENDPOINT_ENV]
    if defaults:
        sp.set_defaults(**defaults)


# --------------------------------------------------------------------------- helpers


class _Output:
    def __init__(self, path: str):
        self.path = path

    def __enter__(self):
        if self.path == "-":
            self.f = sys.stdout
        else:
            try:
                self.f = open(self.path, "w", encoding="utf-8")
            except OSError as e:
                raise InputError(f"cannot write {self.path}: {e}") from e
        return self.f

    def __exit__(self, *exc):
        if self.f is not sys.stdout:
            self.f.close()


def _summary(text: str) -> None:
    print(text, file=sys.stderr)


def _load_env(path: Optional[str]):
    from guire.envsim import Environment

    if path is None:
        return Environment.bundled()
    try:
        return Environment.from_file(path)
    except OSError as e:
        raise InputError(f"cannot read env {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: not JSON: {e}") from e


def _read(path: str, version: str, strict: bool = True, errors=None) -> list[dict]:
    from guire.datapipe import read_jsonl

    return read_jsonl(path, version, strict=strict, errors=errors)


# --------------------------------------------------------------------------- commands


def reward_report(candidates: list[dict], truths: list[dict], mode: str, lam: float) -> dict:
    from guire.rewards import RewardConfig, ground_truth_from_dict, total_reward

    cfg = RewardConfig(lam=lam, location_mode=mode)
    gt_by_id = {}
    for i, t in enumerate(truths, 1):
        if t["id"] in gt_by_id:
            raise InputError(f"duplicate ground truth id {t['id']!r} (record {i})")
        gt_by_id[t["id"]] = t
    records = []
    for i, c in enumerate(candidates, 1):
        if c["id"] not in gt_by_id:
            raise InputError(f"candidate record {i}: no ground truth with id {c['id']!r}")
        gt = ground_truth_from_dict(gt_by_id[c["id"]])
        records.append({"id": c["id"], **total_reward(c["candidate"], gt, cfg).as_dict()})
    mean = sum(r["total"] for r in records) / len(records) if records else None
    return {"schema_version": "reward_report.v1", "mode": mode, "lambda": lam, "count": len(records),
            "mean_total": mean, "records": records}


def cmd_reward_check(args) -> int:
    report = reward_report(_read(args.candidates, "candidate.v1"), _read(args.gt, "ground_truth.v1"),
                           args.mode, args.lam)
    with _Output(args.out) as f:
        f.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _summary(f"reward-check: {report['count']} records, mean total {report['mean_total']}")
    return EXIT_OK


def cmd_train_ground(args) -> int:
    from guire.datapipe import dumps_line
    from guire.grpo import GroundTrainConfig, train_grounding

    cfg = GroundTrainConfig(grid=args.grid, steps=args.steps, seed=args.seed, m_full=args.m_full,
                            m_crop=args.m_crop, lr=args.lr, mode=args.mode, lam=args.lam,
                            screen=tuple(args.screen), target_size=args.target_size,
                            smoothing=args.smoothing, batch=args.batch)
    with _Output(args.out) as f:
        def emit(rec):
            f.write(dumps_line({"schema_version": "step_stats.v1", **rec}) + "\n")

        res = train_grounding(cfg, on_step=emit)
    tail = [r["mean_reward"] for r in res.records[-20:]]
    _summary(f"train-ground: {args.steps} steps, final mean reward {sum(tail) / len(tail):.4f}, "
             f"containment {res.containment[-1]:.4f}")
    return EXIT_OK


def _nav_policy(args, env):
    from guire.envsim import oracle_scripts
    from guire.policies import ScriptedOracle, UniformRandom
    from guire.remote import RemotePolicy

    if args.policy == "oracle":
        return ScriptedOracle(oracle_scripts(env))
    if args.policy == "random":
        return UniformRandom(args.seed)
    return RemotePolicy(args.endpoint)


def cmd_eval_nav(args) -> int:
    from guire.datapipe import write_jsonl
    from guire.envsim import EvalConfig, success_rate

    env = _load_env(args.env)
    policy = _nav_policy(args, env)
    cfg = EvalConfig(args.max_steps, args.runs, args.seed)
    rep = success_rate(env, policy, env.tasks, cfg, keep_episodes=args.dump is not None)
    if args.dump:
        write_jsonl(args.dump, (e.trajectory.as_dict() for e in rep.episodes), "trajectory.v1")
    doc = {"policy": args.policy, "max_steps": args.max_steps, "runs": args.runs, "seed": args.seed,
           "tasks": len(env.tasks), **rep.as_dict()}
    with _Output(args.out) as f:
        f.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _summary(f"eval-nav: {args.policy} success {rep.mean:.4f} over {args.runs} runs")
    return EXIT_OK


def cmd_rollout(args) -> int:
    from guire.datapipe import write_jsonl
    from guire.forge import CorpusConfig, CurriculumSpec, Level, build_corpus, generate_tasks

    env = _load_env(args.env)
    tasks = list(env.tasks)
    if args.generated:
        depth = max(env.screen_distances(env.initial_screen).values())
        spec = CurriculumSpec(tuple(Level(i + 1, args.generated, r) for i, r in
                                    enumerate([(1, 2), (3, 4), (5, max(5, depth))])))
        tasks += generate_tasks(env, spec, args.seed)
    cfg = CorpusConfig(seed=args.seed, retry_budget=args.retry_budget, max_steps=args.max_steps,
                       threshold=args.threshold, perturbations=args.perturbations,
                       cot_mode=args.cot_mode, workers=args.workers)
    res = build_corpus(env, tasks, cfg)
    write_jsonl(args.out, res.records)
    if args.drop_log:
        write_jsonl(args.drop_log, (d.as_dict() for d in res.drops), "drop_log.v1")
    if args.trajectories:
        write_jsonl(args.trajectories, (t.as_dict() for t in res.trajectories), "trajectory.v1")
    if args.qa:
        write_jsonl(args.qa, ({"task_id": t.task_id, **asdict(q)} for t, q in zip(res.kept, res.qa)),
                    "qa_record.v1")
    s = res.summary()
    _summary(f"rollout: {s['rollouts']} rollouts, {s['kept']} kept, {s['dropped']} dropped, "
             f"{s['perturbed']} perturbed, {s['records']} records; drop reasons {s['drop_reasons']}")
    return EXIT_OK


def _source_records(path: str, lenient: bool):
    from guire.datapipe import SourceRecord

    errors: list = []
    docs = _read(path, "source_record.v1", strict=not lenient, errors=errors)
    return [SourceRecord.from_dict(d) for d in docs], errors


def cmd_unify(args) -> int:
    from guire.datapipe import unify, write_jsonl

    records, errors = _source_records(args.inp, args.lenient)
    n = write_jsonl(args.out, (unify(r).as_dict() for r in records))
    _summary(f"unify: {n} records written, {len(errors)} malformed lines skipped")
    return EXIT_OK


def cmd_compose(args) -> int:
    from pathlib import Path

    from guire.datapipe import compose_all, write_jsonl

    records, _ = _source_records(args.inp, False)
    results = compose_all(records, args.rows, args.cols, args.root)
    failed = 0
    for i, r in enumerate(results):
        failed += bool(r.errors)
        if r.image is not None and args.image_dir:
            Path(args.image_dir).mkdir(parents=True, exist_ok=True)
            name = f"composite_{i:05d}.png"
            r.image.save(Path(args.image_dir) / name)
            r.record["image_ref"] = name
    n = write_jsonl(args.out, (r.record for r in results))
    dropped = len(records) - n * args.rows * args.cols
    _summary(f"compose: {n} composites, {failed} with cell read errors, {dropped} tail records unused")
    return EXIT_OK


def _pairs(items: list[str], flag: str) -> dict[str, str]:
    out = {}
    for it in items:
        if "=" not in it:
            raise UsageError(f"{flag} expects TAG=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        out[k] = v
    return out


def cmd_mix(args) -> int:
    from guire.datapipe import dumps_line, mixture_manifest, read_jsonl, sample_mixture, write_jsonl

    paths = _pairs(args.stream, "--stream")
    try:
        weights = {k: float(v) for k, v in _pairs(args.weight, "--weight").items()}
    except ValueError as e:
        raise UsageError(f"bad --weight value: {e}") from None
    streams = {tag: read_jsonl(p) for tag, p in paths.items()}
    drawn = sample_mixture(streams, weights, args.seed, args.n)
    write_jsonl(args.out, (rec for _, rec in drawn))
    if args.manifest:
        root = os.path.dirname(os.path.abspath(args.out))
        with open(args.manifest, "w", encoding="utf-8") as f:
            f.write(dumps_line(mixture_manifest(weights, args.seed, args.n, drawn, root)) + "\n")
    counts = {t: sum(1 for tag, _ in drawn if tag == t) for t in weights}
    _summary(f"mix: {len(drawn)} items, counts {counts}")
    return EXIT_OK


COMMANDS = {
    "reward-check": cmd_reward_check,
    "train-ground": cmd_train_ground,
    "eval-nav": cmd_eval_nav,
    "rollout": cmd_rollout,
    "unify": cmd_unify,
    "compose": cmd_compose,
    "mix": cmd_mix,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    from guire.actions import ParseError
    from guire.datapipe import DataError, Exhausted
    from guire.envsim import EnvError
    from guire.forge import ForgeError
    from guire.geometry import GeometryError
    from guire.grpo import NonFiniteGradient
    from guire.remote import RemoteError
    from guire.rewards import RewardError
    from guire.schema import SchemaError

    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_layers(parser, argv)
    except UsageError as e:
        print(f"guire: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as e:
        print(f"guire: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"guire: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteGradient, FloatingPointError) as e:
        print(f"guire: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except RemoteError as e:
        print(f"guire: remote failure: {e}", file=sys.stderr)
        return EXIT_REMOTE
    except (InputError, DataError, SchemaError, EnvError, RewardError, ForgeError, GeometryError,
            ParseError, Exhausted, OSError, KeyError) as e:
        print(f"guire: input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
