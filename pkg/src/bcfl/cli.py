"""Command-line entry point: keygen, run, sweep, dag-export."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import presets
from .dag import dag_from_json, dag_to_json, to_dot
from .errors import BcflError, ConfigError, RoundError
from .secure_agg import CryptoParams, setup
from .secure_agg.serialize import dump_public, dump_secret
from .simnet import ExperimentConfig, SweepSpec, run_experiment, run_sweep, stream

EXIT_CONFIG = 2
EXIT_RUN = 1


def _load_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("--config", "give either --config or --preset, not both")
    if args.preset:
        raw = presets.load(args.preset)
    elif args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError("--config", f"no such file: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
    else:
        raise ConfigError("--config", "a config file or --preset is required")
    if getattr(args, "seed", None) is not None:
        raw.setdefault("sim", {})["seed"] = args.seed
    return ExperimentConfig.from_dict(raw)


def cmd_keygen(args) -> int:
    cfg = _load_config(args)
    c = cfg.crypto
    params = CryptoParams.generate(c.degree, c.q, c.sigma, c.base)
    km = setup(cfg.sim.hospitals, params, stream(cfg.sim.seed, "keys"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "params.json").write_text(json.dumps(params.to_dict(), indent=2, sort_keys=True))
    (out / "public.key").write_bytes(dump_public(km.pk, params))
    for i, s in enumerate(km.party_secrets):
        (out / f"party_{i}.sk").write_bytes(dump_secret(s, params, i))
    (out / "ledger.sk").write_bytes(dump_secret(km.ledger_secret, params))
    (out / "evaluator.sk").write_bytes(dump_secret(km.evaluator_secret, params))
    print(params.digest().hex())
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    res = run_experiment(cfg, args.out)
    for m in res.metrics:
        print(f"episode {m.episode} round {m.round}: accuracy {m.global_accuracy:.4f} "
              f"loss {m.global_loss:.4f} wall {m.wall_time_ms:.1f} ms confirmed {m.confirmed_tx}")
    if res.stopped_early:
        print(f"stopped early: {res.stop_reason}")
    return 0


def cmd_sweep(args) -> int:
    spec = SweepSpec.from_dict(presets.load(args.preset))
    seeds = args.seeds if args.seeds else None

    def progress(value, seed, last):
        print(f"{spec.vary}={value} seed={seed}: accuracy {last.global_accuracy:.4f}", flush=True)

    points = run_sweep(spec, args.out, seeds, progress)
    for p in points:
        print(f"{spec.vary}={p.value}: median accuracy {p.median_accuracy:.4f} "
              f"median wall {p.median_wall_time:.1f} ms")
    return 0


def cmd_dag_export(args) -> int:
    path = Path(args.run)
    if path.is_dir():
        path = path / "dag.json"
    if not path.is_file():
        raise ConfigError("--run", f"no dag.json at {args.run}")
    dag = dag_from_json(json.loads(path.read_text()))
    text = to_dot(dag) if args.format == "dot" else json.dumps(dag_to_json(dag), indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bcfl", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("--config", help="experiment JSON file")
        p.add_argument("--preset", help=f"bundled config ({', '.join(presets.names())})")

    p = sub.add_parser("keygen", help="generate and write key material")
    config_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("run", help="run one experiment")
    config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a bundled parameter sweep")
    p.add_argument("--preset", required=True, choices=["fig3", "fig4"])
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, nargs="+", help="override the preset seeds")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dag-export", help="render a run's DAG")
    p.add_argument("--run", required=True, help="run directory or dag.json")
    p.add_argument("--format", choices=["dot", "json"], default="dot")
    p.add_argument("--output")
    p.set_defaults(func=cmd_dag_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RoundError, BcflError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
