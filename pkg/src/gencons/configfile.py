"""YAML configuration and scenario files.

A configuration file either names a preset::

    preset: fast-3of4
    servers: 4
    clients: 2

or lists rules explicitly::

    servers: 3
    clients: 2
    rules:
      - {from: 0, to: 2, mode: classic, quorums: all}
      - {from: 3, tail: true, mode: classic, quorums: majority}

Quorum lists are either explicit (``[[S0, S1], [S2, S3]]``, bare integers also
work) or a shorthand: ``all``, ``majority``, ``size-K``, ``singletons``,
``{majority: [S3, S4, S5]}`` or ``{size: 2, of: [S0, S1, S2]}``.  A rule may
give ``quorums`` for both phases or ``phase1``/``phase2`` separately, and a
``cycle`` of such entries repeats across its range.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import yaml

from gencons.config import (
    ConfigurationError,
    Configuration,
    RegisterSetConfig,
    RegisterSetMode,
    Rule,
    majorities,
    of_size,
    preset,
    intersects,
    quorum_key,
)
from gencons.core import DEFAULT_MAX_REGISTER_SETS, parse_node, parse_state
from gencons.sim import ClientSpec, FaultPlan, LinkFault, Scenario


def _server(x: Any) -> int:
    if isinstance(x, int) and not isinstance(x, bool):
        return x
    if isinstance(x, str):
        kind, n = parse_node(x)
        if kind == "S":
            return n
    raise ConfigurationError(f"not a server: {x!r}")


def _client(x: Any) -> int:
    if isinstance(x, int) and not isinstance(x, bool):
        return x
    if isinstance(x, str):
        kind, n = parse_node(x)
        if kind == "C":
            return n
    raise ConfigurationError(f"not a client: {x!r}")


def _register(x: Any) -> int:
    if isinstance(x, int) and not isinstance(x, bool):
        return x
    if isinstance(x, str) and x[:1] == "R" and x[1:].isdigit():
        return int(x[1:])
    raise ConfigurationError(f"not a register set: {x!r}")


def parse_quorums(spec: Any, servers: int) -> list[list[int]]:
    everyone = list(range(servers))
    match spec:
        case "all":
            return [everyone]
        case "majority":
            return [sorted(q) for q in majorities(everyone)]
        case "singletons":
            return [[s] for s in everyone]
        case str() if spec.startswith("size-") and spec[5:].isdigit():
            return [sorted(q) for q in of_size(everyone, int(spec[5:]))]
        case {"majority": members}:
            return [sorted(q) for q in majorities([_server(m) for m in members])]
        case {"size": int(k), "of": members}:
            return [sorted(q) for q in of_size([_server(m) for m in members], k)]
        case list() if all(isinstance(q, list) for q in spec):
            return [[_server(s) for s in q] for q in spec]
    raise ConfigurationError(f"bad quorum specification {spec!r}")


def _register_set(entry: dict, servers: int) -> RegisterSetConfig:
    unknown = set(entry) - {"mode", "quorums", "phase1", "phase2", "check",
                            "from", "to", "tail", "cycle"}
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}")
    try:
        mode = RegisterSetMode(entry.get("mode", "classic"))
    except ValueError:
        raise ConfigurationError(f"mode must be classic or fast, not {entry.get('mode')!r}")
    if "quorums" in entry:
        if "phase1" in entry or "phase2" in entry:
            raise ConfigurationError("give either quorums or phase1/phase2")
        p1 = p2 = parse_quorums(entry["quorums"], servers)
    else:
        try:
            p1 = parse_quorums(entry["phase1"], servers)
            p2 = parse_quorums(entry["phase2"], servers)
        except KeyError as exc:
            raise ConfigurationError(f"missing {exc.args[0]}") from None
    return RegisterSetConfig(p1, p2, mode, bool(entry.get("check", True)))


def config_from_dict(data: dict, name: str | None = None) -> Configuration:
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping")
    servers = data.get("servers")
    clients = data.get("clients", 1)
    if not isinstance(servers, int) or not isinstance(clients, int):
        raise ConfigurationError("servers and clients must be integers")
    cap = data.get("max_register_sets", DEFAULT_MAX_REGISTER_SETS)
    if "preset" in data:
        extra = set(data) - {"preset", "servers", "clients", "max_register_sets"}
        if extra:
            raise ConfigurationError(f"preset files take no {sorted(extra)}")
        return preset(str(data["preset"]), servers, clients, cap)
    rules = []
    for entry in data.get("rules") or ():
        if "from" not in entry:
            raise ConfigurationError("every rule needs 'from'")
        start = int(entry["from"])
        if entry.get("tail"):
            if "to" in entry:
                raise ConfigurationError("a tail rule has no 'to'")
            stop = None
        elif "to" in entry:
            stop = int(entry["to"])
        else:
            raise ConfigurationError(f"rule from {start} needs 'to' or 'tail: true'")
        if "cycle" in entry:
            cycle = tuple(_register_set(e, servers) for e in entry["cycle"])
        else:
            cycle = (_register_set(entry, servers),)
        rules.append(Rule(start, stop, cycle))
    alloc = data.get("allocation", "round-robin")
    overrides = []
    if isinstance(alloc, dict):
        overrides = [(_register(r), _client(c)) for r, c in alloc.items()]
    elif alloc != "round-robin":
        raise ConfigurationError("allocation must be round-robin or a mapping")
    return Configuration(servers, clients, tuple(rules), tuple(overrides), cap,
                         name=data.get("name", name))


def load_config(path: str | Path) -> Configuration:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return config_from_dict(data, name=path.stem)


def _dump_quorums(qs) -> list[list[str]]:
    return [[f"S{s}" for s in quorum_key(q)] for q in qs]


def config_to_dict(cfg: Configuration) -> dict:
    rules = []
    for rl in cfg.rules:
        entries = []
        for rc in rl.cycle:
            e: dict = {"mode": rc.mode.value}
            if rc.phase1 == rc.phase2:
                e["quorums"] = _dump_quorums(rc.phase1)
            else:
                e["phase1"] = _dump_quorums(rc.phase1)
                e["phase2"] = _dump_quorums(rc.phase2)
            if rc.is_fast and not intersects([rc.phase2, rc.phase2]):
                e["check"] = False
            entries.append(e)
        head: dict = {"from": rl.start}
        if rl.stop is None:
            head["tail"] = True
        else:
            head["to"] = rl.stop
        if len(entries) == 1:
            head.update(entries[0])
        else:
            head["cycle"] = entries
        rules.append(head)
    out = {"servers": cfg.servers, "clients": cfg.clients,
           "max_register_sets": cfg.max_register_sets, "rules": rules}
    if cfg.overrides:
        out["allocation"] = {f"R{r}": f"C{c}" for r, c in cfg.overrides}
    return out


def dump_config(cfg: Configuration) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


# -- scenarios --------------------------------------------------------------


def _plan(data: dict | None) -> FaultPlan:
    data = dict(data or {})
    delay = data.pop("delay", [1, 1])
    if isinstance(delay, int):
        delay = [delay, delay]
    crashes = {_server(s): int(t) for s, t in (data.pop("crashes", None) or {}).items()}
    links = {}
    for key, rule in (data.pop("links", None) or {}).items():
        src, _, dst = str(key).partition("->")
        parse_node(src), parse_node(dst)
        links[(src, dst)] = LinkFault(rule.get("delay"), bool(rule.get("drop", False)))
    plan = FaultPlan(
        seed=int(data.pop("seed", 0)),
        min_delay=int(delay[0]),
        max_delay=int(delay[1]),
        drop=float(data.pop("drop", 0.0)),
        dup=float(data.pop("dup", 0.0)),
        crashes=crashes,
        links=links,
    )
    if data:
        raise ConfigurationError(f"unknown plan keys {sorted(data)}")
    return plan


def scenario_from_dict(data: dict, base: Path | None = None) -> Scenario:
    cfg_spec = data.get("config")
    if isinstance(cfg_spec, str):
        cfg = load_config((base or Path(".")) / cfg_spec)
    elif isinstance(cfg_spec, dict):
        cfg = config_from_dict(cfg_spec)
    else:
        raise ConfigurationError("scenario needs a config (path or mapping)")
    clients = {}
    for name, spec in (data.get("clients") or {}).items():
        if isinstance(spec, str):
            spec = {"input": spec}
        clients[_client(name)] = ClientSpec(
            str(spec["input"]), int(spec.get("start", 0)), int(spec.get("first_set", 0))
        )
    columns = {
        _server(s): tuple(parse_state("nil" if x is None else str(x)) for x in col)
        for s, col in (data.get("columns") or {}).items()
    }
    kwargs = {}
    for key in ("horizon", "timeout"):
        if key in data:
            kwargs[key] = int(data[key])
    return Scenario(
        cfg,
        clients,
        _plan(data.get("plan")),
        strategy=data.get("strategy", "generalised"),
        columns=columns,
        mutations=frozenset(int(m) for m in data.get("mutations", ())),
        **kwargs,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: scenario must be a mapping")
    return scenario_from_dict(data, path.parent)
