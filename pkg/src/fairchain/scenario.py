"""Scenario files: TOML documents describing one experiment.

Top-level keys mirror :class:`~fairchain.harness.ExperimentConfig`; the
nested tables ``[protocol]``, ``[protocol.sortition]``, ``[topology]``,
``[reputation]`` and ``[adversary]`` mirror the matching parameter objects.
``kind`` picks what ``run`` does:

* ``single``: replicates of one configuration;
* ``fairness``: one group per entry of ``node_counts``;
* ``robustness``: one group per entry of ``malicious_fractions``.

Reputation overrides go in ``[reputation.scores]`` keyed by node index or
hex node id.
"""

from __future__ import annotations

import dataclasses
import sys
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .harness import ConfigError, ExperimentConfig, ReputationSpec
from .netsim import Behavior, Topology
from .protocol.messages import MessageKind
from .protocol.node import ProtocolParams
from .sortition import SortitionParams

KINDS = ("single", "fairness", "robustness")


@dataclass(frozen=True)
class Scenario:
    config: ExperimentConfig
    kind: str = "single"
    node_counts: tuple[int, ...] = ()
    malicious_fractions: tuple[float, ...] = ()

    def groups(self) -> list[ExperimentConfig]:
        """One configuration per summary column."""
        if self.kind == "fairness":
            return [self.config.with_(node_count=n, malicious_fraction=0.0) for n in self.node_counts]
        if self.kind == "robustness":
            return [self.config.with_(malicious_fraction=f) for f in self.malicious_fractions]
        return [self.config]

    @property
    def column_title(self) -> str:
        return "Malicious nodes" if self.kind == "robustness" else "Nodes"

    def column_label(self, config: ExperimentConfig) -> str:
        if self.kind == "robustness":
            return str(config.malicious_count)
        return str(config.node_count)


def _build(cls, data: Mapping[str, Any], where: str, **resolved: Any):
    """Instantiate ``cls`` from ``data``; ``resolved`` replaces nested tables."""
    names = {f.name for f in dataclasses.fields(cls)}
    plain = {k: v for k, v in data.items() if k not in resolved}
    unknown = set(plain) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    plain.update((k, v) for k, v in resolved.items() if k in names)
    try:
        return cls(**plain)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def _table(doc: Mapping[str, Any], key: str) -> dict[str, Any]:
    value = doc.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"[{key}] must be a table")
    return dict(value)


def _enum_set(enum_cls, values, where: str) -> frozenset:
    try:
        if enum_cls is MessageKind:
            return frozenset(MessageKind[str(v).upper()] for v in values)
        return frozenset(enum_cls(str(v).lower()) for v in values)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"unknown value in {where}: {exc}") from None


def _score_key(raw: str) -> int | str:
    return int(raw) if raw.isdigit() else raw.lower()


def parse_scenario(doc: Mapping[str, Any]) -> Scenario:
    doc = dict(doc)
    kind = doc.pop("kind", "single")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")
    node_counts = tuple(doc.pop("node_counts", ()))
    fractions = tuple(float(f) for f in doc.pop("malicious_fractions", ()))
    if kind == "fairness" and not node_counts:
        raise ConfigError("a fairness scenario needs node_counts")
    if kind == "robustness" and not fractions:
        raise ConfigError("a robustness scenario needs malicious_fractions")

    protocol = _table(doc, "protocol")
    sortition = _build(SortitionParams, _table(protocol, "sortition"), "[protocol.sortition]")
    protocol_params = _build(ProtocolParams, protocol, "[protocol]", sortition=sortition)
    topology = _build(Topology, _table(doc, "topology"), "[topology]")

    reputation = _table(doc, "reputation")
    scores = _table(reputation, "scores")
    overrides = tuple((_score_key(str(k)), float(v)) for k, v in sorted(scores.items()))
    reputation_spec = _build(ReputationSpec, reputation, "[reputation]", scores=None, overrides=overrides)

    adversary = _table(doc, "adversary")
    extra: dict[str, Any] = {}
    if "behaviors" in adversary:
        extra["behaviors"] = _enum_set(Behavior, adversary.pop("behaviors"), "[adversary] behaviors")
    if "drop_kinds" in adversary:
        extra["drop_kinds"] = _enum_set(MessageKind, adversary.pop("drop_kinds"), "[adversary] drop_kinds")
    if "drop_probability" in adversary:
        extra["drop_probability"] = float(adversary.pop("drop_probability"))
    if adversary:
        raise ConfigError(f"unknown key(s) in [adversary]: {', '.join(sorted(adversary))}")

    doc.pop("adversary", None)
    config = _build(
        ExperimentConfig,
        doc,
        "scenario",
        protocol=protocol_params,
        topology=topology,
        reputation=reputation_spec,
        **extra,
    )
    scenario = Scenario(config, kind, node_counts, fractions)
    for group in scenario.groups():
        group.validate()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from exc
    try:
        return parse_scenario(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
