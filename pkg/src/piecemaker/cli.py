"""Command-line front end: ``piecemaker {single,sweep,compare,threshold,covers} CONFIG``.

Configs are YAML mappings.  A minimal one::

    protocol: ghz-piecemaker
    n: 3
    p_link: 0.5
    p_depol: 0.01

``p_link`` and ``p_depol`` take a number, a list, or ``log-grid(lo, hi, count)``.
Heterogeneous links come from ``delta_L`` (a number or list, km) and ``gamma``
(dB/km) instead of ``p_link``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .graphs import DEFAULT_ORBIT_CAP, Graph, GraphError, cached_catalog, catalog_key, make_graph, save_catalog
from .montecarlo import (CellKey, Scenario, SweepTable, default_trials, delta_eps, run_paired, run_trials,
                         sweep, threshold_map)
from .network import (DEFAULT_DELTA_T_MS, DEFAULT_GAMMA_DB_PER_KM, LinkConfig, heterogeneous_lengths,
                      link_probability_from_length)
from .protocols import PROTOCOLS, Target

SCHEMA = "schema=1"
COLUMNS = ("protocol", "target", "n", "p_link", "p_depol", "delta_L", "trials", "mean_fidelity", "stderr",
           "mean_completion_rounds")
CACHE_ENV = "PIECEMAKER_CACHE"
REFERENCE_LENGTH_KM = 25.0

KNOWN_KEYS = {"protocol", "protocols", "n", "target", "rows", "cols", "dim", "edges", "p_link", "p_depol",
              "delta_L", "gamma", "delta_t", "tau", "trials", "seed", "orbit_cap", "piecemaker_qubit",
              "paired", "engine", "threshold", "cache_dir"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


@dataclass
class ScenarioConfig:
    protocols: list[str]
    target: Target
    p_links: list[float] = field(default_factory=list)
    p_depols: list[float] = field(default_factory=list)
    delta_ls: list[float] = field(default_factory=lambda: [0.0])
    heterogeneous: bool = False
    gamma: float = DEFAULT_GAMMA_DB_PER_KM
    delta_t: float = DEFAULT_DELTA_T_MS
    tau: float | None = None
    trials: int = 10_000
    seed: int = 0
    orbit_cap: int = DEFAULT_ORBIT_CAP
    piecemaker_qubit: str = "explicit"
    paired: bool = False
    engine: str = "auto"
    threshold: float = 0.5
    cache_dir: str | None = None

    @property
    def n(self) -> int:
        return self.target.n

    def cells(self) -> int:
        return len(self.p_links) * len(self.p_depols) * len(self.delta_ls)

    def link(self, p_link: float, p_depol: float, delta_l: float) -> LinkConfig:
        if self.heterogeneous:
            probs = tuple(link_probability_from_length(L, self.gamma)
                          for L in heterogeneous_lengths(self.n, delta_l))
            return LinkConfig(probs, p_depol, self.delta_t, self.tau)
        return LinkConfig.homogeneous(self.n, p_link, p_depol, delta_t=self.delta_t, tau=self.tau)


_GRID = re.compile(r"^\s*log-grid\(\s*([^,]+),\s*([^,]+),\s*([^)]+)\)\s*$")


def parse_axis(key: str, value, lo: float, hi: float, lo_open: bool) -> list[float]:
    """Number, list of numbers, or ``log-grid(lo, hi, count)``."""
    if isinstance(value, str):
        m = _GRID.match(value)
        if not m:
            raise ConfigError(key, f"expected a number, list or log-grid(lo, hi, count), got {value!r}")
        try:
            a, b, count = float(m.group(1)), float(m.group(2)), int(m.group(3))
        except ValueError:
            raise ConfigError(key, f"malformed grid spec {value!r}") from None
        if not (0 < a < b) or count < 2:
            raise ConfigError(key, "log-grid needs 0 < lo < hi and count >= 2")
        values = [10 ** (math.log10(a) + (math.log10(b) - math.log10(a)) * k / (count - 1)) for k in range(count)]
        values[-1] = b
    elif isinstance(value, (list, tuple)):
        values = value
    else:
        values = [value]
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(key, f"non-numeric value {v!r}")
        v = float(v)
        if not ((lo < v if lo_open else lo <= v) and v <= hi):
            raise ConfigError(key, f"value {v} outside {'(' if lo_open else '['}{lo}, {hi}]")
        out.append(v)
    if not out:
        raise ConfigError(key, "empty list")
    if len(set(out)) != len(out):
        raise ConfigError(key, "duplicate values")
    return out


def _int(raw: dict, key: str, default, lo: int = 0) -> int:
    v = raw.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(key, f"expected an integer >= {lo}, got {v!r}")
    return v


def _float(raw: dict, key: str, default, lo: float = 0.0, strict: bool = True):
    v = raw.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (v <= lo if strict else v < lo):
        raise ConfigError(key, f"expected a number {'>' if strict else '>='} {lo}, got {v!r}")
    return float(v)


def parse_target(raw: dict, protocols: list[str]) -> Target:
    spec = raw.get("target")
    n = raw.get("n")
    if isinstance(spec, dict):
        spec = dict(spec)
        family = spec.pop("family", "custom" if "edges" in spec else None)
        params = spec
    else:
        family = spec
        params = {k: raw[k] for k in ("rows", "cols", "dim", "edges") if k in raw}
    if n is not None and "n" not in params:
        params["n"] = n
    if family is None:
        if any(p in ("mvc", "general-piecemaker") for p in protocols):
            raise ConfigError("target", "mvc and general-piecemaker need an explicit graph target")
        family = "ghz"
    if not isinstance(family, str):
        raise ConfigError("target", f"expected a family name or mapping, got {family!r}")
    unknown = set(params) - {"n", "rows", "cols", "dim", "edges", "center"}
    if unknown:
        raise ConfigError("target", f"unknown target parameter(s) {sorted(unknown)}")
    try:
        if family.lower() == "ghz":
            if not isinstance(params.get("n"), int):
                raise ConfigError("n", "GHZ target needs an integer n")
            target = Target.ghz(params["n"])
        else:
            graph = make_graph(family, **params)
            label = family.lower()
            if label == "grid":
                label = f"grid-{params['rows']}x{params['cols']}"
            elif label == "custom":
                label = f"custom-{catalog_key(graph)}"
            else:
                label = f"{label}-{graph.n}"
            target = Target.of(graph, label)
    except (GraphError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("target", str(exc)) from None
    if n is not None and n != target.n:
        raise ConfigError("n", f"n={n} disagrees with the target's {target.n} vertices")
    if target.n < 2:
        raise ConfigError("n", "need at least two end nodes")
    if "ghz-piecemaker" in protocols and not target.is_ghz:
        raise ConfigError("protocol", "ghz-piecemaker needs a GHZ target")
    if target.hadamards and any(p in ("mvc", "general-piecemaker") for p in protocols):
        raise ConfigError("protocol", "mvc and general-piecemaker distribute graph states, not GHZ")
    return target


def parse_config_dict(raw: Any) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a key-value mapping")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if "protocol" in raw and "protocols" in raw:
        raise ConfigError("protocols", "give either 'protocol' or 'protocols', not both")
    protocols = raw.get("protocols", raw.get("protocol"))
    if protocols is None:
        raise ConfigError("protocol", "missing")
    protocols = [protocols] if isinstance(protocols, str) else list(protocols)
    key = "protocols" if "protocols" in raw else "protocol"
    for p in protocols:
        if p not in PROTOCOLS:
            raise ConfigError(key, f"unknown protocol {p!r}; choose from {', '.join(PROTOCOLS)}")
    if len(set(protocols)) != len(protocols):
        raise ConfigError(key, "duplicate protocol")
    target = parse_target(raw, protocols)

    heterogeneous = "delta_L" in raw
    if heterogeneous and "p_link" in raw:
        raise ConfigError("delta_L", "give either p_link or delta_L (length-derived links), not both")
    if not heterogeneous and "p_link" not in raw:
        raise ConfigError("p_link", "missing (or give delta_L for length-derived links)")
    if "gamma" in raw and not heterogeneous:
        raise ConfigError("gamma", "only meaningful together with delta_L")
    if "tau" in raw and "p_depol" in raw:
        raise ConfigError("tau", "give either p_depol or tau, not both")
    cfg = ScenarioConfig(protocols, target)
    cfg.heterogeneous = heterogeneous
    if heterogeneous:
        cfg.delta_ls = parse_axis("delta_L", raw["delta_L"], 0.0, math.inf, lo_open=False)
        cfg.gamma = _float(raw, "gamma", DEFAULT_GAMMA_DB_PER_KM, strict=False)
        for dl in cfg.delta_ls:
            try:
                heterogeneous_lengths(target.n, dl)
            except ValueError as exc:
                raise ConfigError("delta_L", str(exc)) from None
        cfg.p_links = [link_probability_from_length(REFERENCE_LENGTH_KM, cfg.gamma)]
    else:
        cfg.p_links = parse_axis("p_link", raw["p_link"], 0.0, 1.0, lo_open=True)
    cfg.delta_t = _float(raw, "delta_t", DEFAULT_DELTA_T_MS)
    cfg.tau = _float(raw, "tau", None)
    if cfg.tau is not None:
        cfg.p_depols = [LinkConfig((0.5,), 0.0, cfg.delta_t, cfg.tau).p_depol]
    else:
        if "p_depol" not in raw:
            raise ConfigError("p_depol", "missing (or give tau)")
        cfg.p_depols = parse_axis("p_depol", raw["p_depol"], 0.0, 1.0, lo_open=False)
    cfg.trials = _int(raw, "trials", default_trials(target.n), lo=1)
    cfg.seed = _int(raw, "seed", 0)
    cfg.orbit_cap = _int(raw, "orbit_cap", DEFAULT_ORBIT_CAP, lo=1)
    cfg.piecemaker_qubit = raw.get("piecemaker_qubit", "explicit")
    if cfg.piecemaker_qubit not in ("explicit", "virtual"):
        raise ConfigError("piecemaker_qubit", "must be 'explicit' or 'virtual'")
    cfg.paired = raw.get("paired", False)
    if not isinstance(cfg.paired, bool):
        raise ConfigError("paired", "must be true or false")
    cfg.engine = raw.get("engine", "auto")
    if cfg.engine not in ("auto", "batch", "frame", "tableau"):
        raise ConfigError("engine", "must be one of auto, batch, frame, tableau")
    cfg.threshold = _float(raw, "threshold", 0.5, strict=False)
    if cfg.threshold > 1:
        raise ConfigError("threshold", "must lie in [0, 1]")
    cfg.cache_dir = raw.get("cache_dir")
    return cfg


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("<file>", f"{path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not a well-formed key-value document: {exc}") from None
    return parse_config_dict(raw)


# ---------------------------------------------------------------------------
# output


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_atomic(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def render_csv(columns, rows) -> str:
    lines = [SCHEMA, ",".join(columns)]
    lines += [",".join(fmt(r[c]) for c in columns) for r in rows]
    return "\n".join(lines) + "\n"


def table_rows(table: SweepTable) -> list[dict]:
    rows = []
    for key, est in table.sorted_items():
        rows.append(dict(protocol=key.protocol, target=key.target, n=table.n[key.target], p_link=key.p_link,
                         p_depol=key.p_depol, delta_L=key.delta_l, trials=est.trials,
                         mean_fidelity=est.mean, stderr=est.stderr,
                         mean_completion_rounds=est.mean_completion_rounds))
    return rows


def emit(columns, rows, out: Path | None, json_out: Path | None):
    text = render_csv(columns, rows)
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic(out, text)
    if json_out is not None:
        write_atomic(json_out, json.dumps({"schema": 1, "columns": list(columns), "rows": rows}, indent=1) + "\n")


# ---------------------------------------------------------------------------
# commands


def _cache_dir(cfg: ScenarioConfig) -> Path:
    if cfg.cache_dir:
        return Path(cfg.cache_dir)
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "piecemaker"))


def _catalog(cfg: ScenarioConfig):
    if "general-piecemaker" not in cfg.protocols:
        return None
    return cached_catalog(cfg.target.graph, _cache_dir(cfg), cfg.orbit_cap)


def _sweep(cfg: ScenarioConfig, workers) -> SweepTable:
    return sweep(cfg.protocols, cfg.target, cfg.p_links, cfg.p_depols, cfg.trials, cfg.seed,
                 delta_ls=cfg.delta_ls, link_factory=cfg.link, paired=cfg.paired, workers=workers,
                 catalog=_catalog(cfg), piecemaker_qubit=cfg.piecemaker_qubit, engine=cfg.engine)


def cmd_single(cfg, args) -> int:
    if cfg.cells() != 1:
        raise ConfigError("p_link", "single needs scalar p_link/delta_L and p_depol; use sweep for grids")
    emit(COLUMNS, table_rows(_sweep(cfg, args.workers)), args.out, args.json)
    return 0


def cmd_sweep(cfg, args) -> int:
    emit(COLUMNS, table_rows(_sweep(cfg, args.workers)), args.out, args.json)
    return 0


COMPARE_COLUMNS = ("pm_protocol", "target", "n", "p_link", "p_depol", "delta_L", "trials", "pm_mean",
                   "pm_stderr", "factory_mean", "factory_stderr", "delta_F", "delta_F_stderr", "delta_eps",
                   "paired")


def cmd_compare(cfg, args) -> int:
    pms = [p for p in cfg.protocols if p != "factory"]
    if len(pms) != 1:
        raise ConfigError("protocols", "compare needs exactly one Piecemaker-family protocol (factory is added)")
    pm = pms[0]
    catalog = _catalog(cfg)
    rows = []
    for a, pl in enumerate(cfg.p_links):
        for b, pd in enumerate(cfg.p_depols):
            for c, dl in enumerate(cfg.delta_ls):
                link = cfg.link(pl, pd, dl)
                common = dict(seed=cfg.seed, engine=cfg.engine, piecemaker_qubit=cfg.piecemaker_qubit)
                if cfg.paired:
                    sa = Scenario(pm, cfg.target, link, cfg.trials, key=(a, b, c), catalog=catalog, **common)
                    sb = Scenario("factory", cfg.target, link, cfg.trials, key=(a, b, c), **common)
                    res = run_paired(sa, sb)
                    ea, eb, dse = res.pm, res.factory, res.difference.stderr
                else:
                    sa = Scenario(pm, cfg.target, link, cfg.trials, key=(a, b, c, PROTOCOLS.index(pm)),
                                  catalog=catalog, **common)
                    sb = Scenario("factory", cfg.target, link, cfg.trials,
                                  key=(a, b, c, PROTOCOLS.index("factory")), **common)
                    ea, eb = run_trials(sa, args.workers), run_trials(sb, args.workers)
                    dse = math.hypot(ea.stderr, eb.stderr)
                rows.append(dict(pm_protocol=pm, target=cfg.target.name, n=cfg.n, p_link=pl, p_depol=pd,
                                 delta_L=dl, trials=cfg.trials, pm_mean=ea.mean, pm_stderr=ea.stderr,
                                 factory_mean=eb.mean, factory_stderr=eb.stderr, delta_F=ea.mean - eb.mean,
                                 delta_F_stderr=dse, delta_eps=delta_eps(ea, eb),
                                 paired="true" if cfg.paired else "false"))
    emit(COMPARE_COLUMNS, rows, args.out, args.json)
    return 0


THRESHOLD_COLUMNS = ("protocol", "target", "n", "p_depol", "threshold", "min_p_link")


def cmd_threshold(cfg, args) -> int:
    if cfg.heterogeneous:
        raise ConfigError("delta_L", "threshold maps need a p_link grid")
    threshold = cfg.threshold if args.threshold is None else args.threshold
    if not 0 <= threshold <= 1:
        raise ConfigError("threshold", "must lie in [0, 1]")
    maps = threshold_map(_sweep(cfg, args.workers), threshold)
    rows = []
    for proto in sorted(maps):
        for pd, pl in sorted(maps[proto].min_p_link.items()):
            rows.append(dict(protocol=proto, target=cfg.target.name, n=cfg.n, p_depol=pd, threshold=threshold,
                             min_p_link=pl))
    emit(THRESHOLD_COLUMNS, rows, args.out, args.json)
    return 0


def cmd_covers(cfg, args) -> int:
    graph: Graph = cfg.target.graph
    catalog = cached_catalog(graph, _cache_dir(cfg), cfg.orbit_cap)
    path = _cache_dir(cfg) / f"covers-{catalog_key(graph)}.txt"
    if args.out is not None:
        path = save_catalog(catalog, args.out)
    sizes = sorted(set(catalog.cover_sizes()))
    print(f"{cfg.target.name}: {len(catalog)} minimal local covers, sizes {sizes} -> {path}")
    return 0


COMMANDS = {"single": cmd_single, "sweep": cmd_sweep, "compare": cmd_compare, "threshold": cmd_threshold,
            "covers": cmd_covers}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="piecemaker", description="Piecemaker vs Factory entanglement distribution")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", type=Path, help="YAML scenario file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--trials", type=int, default=None, help="override the trial count")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (PIECEMAKER_WORKERS overrides)")
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
    p.add_argument("--json", type=Path, default=None, help="also write a JSON mirror here")
    p.add_argument("--paired", action="store_true", help="share arrival rounds between protocols")
    p.add_argument("--threshold", type=float, default=None)
    return p


def run_command(command: str, cfg: ScenarioConfig, args: argparse.Namespace) -> int:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed", "must be >= 0")
        cfg.seed = args.seed
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        cfg.trials = args.trials
    if args.paired:
        cfg.paired = True
    return COMMANDS[command](cfg, args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        return run_command(args.command, cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any module failure -> nonzero exit, no partial files
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
