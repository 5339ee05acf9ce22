"""Command-line runner: ``hqnet-experiments --scenario NAME [--config FILE] ...``.

Config files are sectioned ``key = value`` text::

    # comment
    scenario = routing-diversified      (optional, before any section)

    [env]
    dephasing_std = 0.096, 0.29

    [sweep]
    trials = 20

Lists are comma separated.  Command-line flags override file values.
``configparser`` is not used because it cannot report the line of a bad key.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from typing import Callable, Sequence, TextIO

from .engine import ScenarioError
from .scenarios import REGISTRY, ScenarioConfig, check_keys, format_cell, header, run_scenario

SECTIONS: dict[str, tuple[str, ...]] = {
    "topology": ("rings", "length_km", "rings_range"),
    "env": ("depolarizing_rate", "dephasing_rate", "loss_init", "loss_noise", "dephasing_std",
            "loss_init_std", "loss_noise_std", "rate_time_unit_ms", "group_spread"),
    "routing": ("algorithms", "recursion_n", "calibration_probes"),
    "scheme": ("scheme", "op_fault"),
    "sweep": ("memory_ratios", "qps_values", "loss_noise_values", "steps", "trials", "sessions",
              "seed", "workers"),
}


def _tuple(item: Callable) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        parts = [p.strip() for p in text.split(",")]
        if not all(parts):
            raise ValueError("empty list element")
        return tuple(item(p) for p in parts)
    return parse


def _int(text: str) -> int:
    return int(text, 10)


PARSERS: dict[str, Callable[[str], object]] = {
    "rings": _int, "length_km": float, "rings_range": _tuple(_int),
    "depolarizing_rate": float, "dephasing_rate": float, "loss_init": float, "loss_noise": float,
    "dephasing_std": _tuple(float), "loss_init_std": _tuple(float),
    "loss_noise_std": _tuple(float), "rate_time_unit_ms": float, "group_spread": float,
    "algorithms": _tuple(str), "recursion_n": _int, "calibration_probes": _int,
    "scheme": str, "op_fault": str,
    "memory_ratios": _tuple(float), "qps_values": _tuple(float),
    "loss_noise_values": _tuple(float), "steps": _int, "trials": _int, "sessions": _int,
    "seed": _int, "workers": _int,
}


class ConfigError(ValueError):
    def __init__(self, source: str, line: int, message: str):
        super().__init__(f"{source}:{line}: {message}")
        self.source, self.line = source, line


@dataclass
class ParsedConfig:
    scenario: tuple[str, int] | None
    values: dict[str, tuple[object, int]]  # key -> (value, line)


def parse_config(text: str, source: str = "<config>") -> ParsedConfig:
    section: str | None = None
    scenario = None
    values: dict[str, tuple[object, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(source, lineno, f"malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(source, lineno, f"unknown section [{section}]; expected one of "
                                  + ", ".join(SECTIONS))
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(source, lineno, f"expected 'key = value', got {raw.strip()!r}")
        if section is None:
            if key != "scenario":
                raise ConfigError(source, lineno, f"key {key!r} must sit inside a section")
            scenario = (value, lineno)
            continue
        if key not in SECTIONS[section]:
            home = next((s for s, ks in SECTIONS.items() if key in ks), None)
            hint = f" (it belongs in [{home}])" if home else ""
            raise ConfigError(source, lineno, f"unknown key {key!r} in [{section}]{hint}")
        if key in values:
            raise ConfigError(source, lineno, f"duplicate key {key!r} "
                              f"(first set on line {values[key][1]})")
        try:
            values[key] = (PARSERS[key](value), lineno)
        except ValueError as exc:
            raise ConfigError(source, lineno, f"bad value for {key!r}: {exc}") from None
    return ParsedConfig(scenario, values)


def build_config(parsed: ParsedConfig, overrides: dict[str, object], scenario: str | None,
                 source: str = "<config>") -> ScenarioConfig:
    """Merge file values and flag overrides, validating keys against the scenario."""
    name = scenario or (parsed.scenario[0] if parsed.scenario else None)
    if name is None:
        raise ScenarioError("no scenario given (use --scenario or 'scenario =' in the config)")
    if name not in REGISTRY:
        line = parsed.scenario[1] if parsed.scenario and not scenario else None
        msg = f"unknown scenario {name!r}; choose from {', '.join(sorted(REGISTRY))}"
        raise ConfigError(source, line, msg) if line else ScenarioError(msg)
    for key, (_, line) in parsed.values.items():
        try:
            check_keys(name, [key])
        except ScenarioError as exc:
            raise ConfigError(source, line, str(exc)) from None
    merged = {k: v for k, (v, _) in parsed.values.items()}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ScenarioConfig(scenario=name, **merged)
    except ScenarioError as exc:
        # point at the offending line when a single file key explains the error
        culprits = [line for k, (_, line) in parsed.values.items()
                    if k in str(exc) and k not in overrides]
        if len(culprits) == 1:
            raise ConfigError(source, culprits[0], str(exc)) from None
        raise


def write_csv(rows: Sequence[dict], out: TextIO) -> None:
    cols = header(rows)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([format_cell(r.get(c, "")) for c in cols])


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hqnet-experiments",
                                description="Run a registered experiment and write CSV.")
    p.add_argument("--scenario", help="scenario name (see --list)")
    p.add_argument("--config", help="sectioned key = value file")
    p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    p.add_argument("--trials", type=int, help="independent trials per parameter point")
    p.add_argument("--sessions", type=int, help="communication sessions per trial")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.add_argument("--list", action="store_true", help="list scenarios and exit")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    if args.list:
        for name in sorted(REGISTRY):
            print(f"{name:22s} {REGISTRY[name].description}")
        return 0
    try:
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ScenarioError(f"cannot read config: {exc}") from None
            parsed = parse_config(text, args.config)
        else:
            parsed = ParsedConfig(None, {})
        overrides = {"seed": args.seed, "trials": args.trials, "sessions": args.sessions,
                     "workers": args.workers}
        name = args.scenario or (parsed.scenario[0] if parsed.scenario else None)
        if name in REGISTRY:
            check_keys(name, [k for k, v in overrides.items() if v is not None])
        cfg = build_config(parsed, overrides, args.scenario, args.config or "<config>")
        rows = run_scenario(cfg)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out == "-":
        write_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_csv(rows, fh)
    return 0


if __name__ == "__main__":
    sys.exit(main())
