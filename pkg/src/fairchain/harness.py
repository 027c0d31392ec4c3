"""Experiment runner: fairness and robustness sweeps, metrics, CSV output."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
import math
import random
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .eventlog import EventLog, check_finality, check_safety
from .ledger import Block, Chain
from .netsim import ALL_BEHAVIORS, DEFAULT_DROP_KINDS, AdversarySpec, Behavior, Simulation, Topology
from .protocol.messages import GOSSIP_KINDS, MessageKind
from .protocol.node import Node, ProtocolParams
from .reputation import DEFAULT_REPUTATION, HIGH_REPUTATION, ReputationTable, eligible_voters
from .vrf import keygen

log = logging.getLogger(__name__)

CSV_HEADER = (
    "experiment_id",
    "nodes",
    "malicious_fraction",
    "replicate",
    "blocks_added",
    "proposer_diversity",
    "nodes_in_sync",
    "safety_violations",
    "rng_seed",
)


class ConfigError(ValueError):
    """An experiment configuration that violates its invariants."""


@dataclass(frozen=True)
class ReputationSpec:
    """How the static reputation table is laid out over node indices.

    Nodes ``0 .. high_count-1`` get ``high``; malicious nodes get
    ``malicious``; everyone else gets ``default``. ``overrides`` pins a score
    for a node given by index or by hex node id and wins over the above.
    """

    high_count: int = 15
    high: float = HIGH_REPUTATION
    default: float = DEFAULT_REPUTATION
    malicious: float = 0.3
    overrides: tuple[tuple[int | str, float], ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    node_count: int = 100
    malicious_fraction: float = 0.0
    duration_s: float = 600.0
    replicates: int = 5
    rng_seed: int = 2025
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    topology: Topology = field(default_factory=Topology)
    reputation: ReputationSpec = field(default_factory=ReputationSpec)
    behaviors: frozenset[Behavior] = ALL_BEHAVIORS
    drop_probability: float = 1.0
    drop_kinds: frozenset[MessageKind] = DEFAULT_DROP_KINDS
    name: str = "experiment"

    @property
    def malicious_count(self) -> int:
        return math.floor(self.node_count * self.malicious_fraction + 0.5)

    @property
    def duration_ms(self) -> int:
        return round(self.duration_s * 1000)

    def with_(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        if self.node_count <= 0:
            raise ConfigError("node_count must be positive")
        if not 0.0 <= self.malicious_fraction <= 1.0:
            raise ConfigError("malicious_fraction must be in [0, 1]")
        if self.duration_s < 0:
            raise ConfigError("duration must be non-negative")
        if self.replicates <= 0:
            raise ConfigError("replicates must be positive")
        if not self.drop_kinds <= GOSSIP_KINDS:
            raise ConfigError("drop_kinds must name gossip message kinds")
        if self.node_count > 1 and self.topology.fanout >= self.node_count:
            raise ConfigError(f"fanout {self.topology.fanout} must be below node count {self.node_count}")
        threshold = self.protocol.sortition.threshold_reputation
        if self.malicious_count and self.reputation.malicious >= threshold:
            raise ConfigError("malicious nodes must sit below the reputation threshold")
        if self.reputation.high_count + self.malicious_count > self.node_count:
            raise ConfigError("high-reputation and malicious nodes exceed node_count")
        if self.reputation.high_count < self.protocol.expected_committee_size:
            raise ConfigError(
                f"{self.reputation.high_count} high-reputation nodes cannot seat a committee of "
                f"{self.protocol.expected_committee_size}"
            )


@dataclass(frozen=True)
class Metrics:
    blocks_added: int
    proposer_diversity: int
    nodes_in_sync: int
    safety_violations: int
    honest_count: int = 0
    finality_violations: int = 0


@dataclass
class RunResult:
    config: ExperimentConfig
    replicate: int
    rng_seed: int
    metrics: Metrics
    log: EventLog | None = None
    accepted_chain: Chain | None = None


@dataclass(frozen=True)
class Row:
    experiment_id: str
    nodes: int
    malicious_fraction: float
    replicate: int
    metrics: Metrics
    rng_seed: int


def derive_seed(*parts: object) -> int:
    text = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "big")


def experiment_id(config: ExperimentConfig) -> str:
    return f"{config.name}-n{config.node_count}-m{config.malicious_fraction:g}"


def build_simulation(config: ExperimentConfig, replicate: int = 0) -> tuple[Simulation, list[bool], int]:
    """Keys, reputation table, adversary and network for one replicate."""
    config.validate()
    seed = derive_seed(config.rng_seed, config.node_count, config.malicious_fraction, replicate)
    rng = random.Random(seed)
    keys = [keygen(derive_seed(seed, "node", i)) for i in range(config.node_count)]
    rep = config.reputation
    candidates = list(range(rep.high_count, config.node_count))
    malicious_idx = set(rng.sample(candidates, config.malicious_count))

    overrides = {k.lower() if isinstance(k, str) else k: v for k, v in rep.overrides}
    scores = {}
    for i, kp in enumerate(keys):
        pinned = overrides.get(i, overrides.get(kp.node_id.hex()))
        if pinned is not None:
            scores[kp.node_id] = pinned
        elif i in malicious_idx:
            scores[kp.node_id] = rep.malicious
        elif i < rep.high_count:
            scores[kp.node_id] = rep.high
        else:
            scores[kp.node_id] = rep.default
    table = ReputationTable(scores)
    eligible = eligible_voters(table, config.protocol.sortition.threshold_reputation)
    if any(keys[i].node_id in eligible for i in malicious_idx):
        raise ConfigError("a malicious node cleared the reputation threshold")

    public_keys = {kp.node_id: kp.public_key for kp in keys}
    nodes = [Node(kp, public_keys, table, config.protocol) for kp in keys]
    adversary = AdversarySpec(
        frozenset(keys[i].node_id for i in malicious_idx), config.behaviors, config.drop_probability, config.drop_kinds
    )
    sim = Simulation(nodes, config.topology, adversary, rng_seed=seed)
    honest = [i not in malicious_idx for i in range(config.node_count)]
    return sim, honest, seed


def accepted_chain(chains: Sequence[Chain]) -> Chain:
    """Longest chain prefix held by at least half of ``chains``.

    Ties at the same height go to the lexicographically smallest head hash.
    """
    if not chains:
        return Chain()
    support: Counter[tuple[int, bytes]] = Counter()
    for chain in chains:
        for block in chain.blocks:
            support[(block.height, block.block_hash)] += 1
    need = len(chains)
    agreed = [key for key, count in support.items() if 2 * count >= need]
    height, head_hash = min(agreed, key=lambda k: (-k[0], k[1]))
    for chain in chains:
        if chain.hash_at(height) == head_hash:
            return Chain(chain.blocks[: height + 1])
    raise AssertionError("unreachable")


def compute_metrics(chains: Sequence[Chain], log: EventLog) -> tuple[Metrics, Chain]:
    accepted = accepted_chain(chains)
    head = accepted.head.block_hash
    proposers = {b.proposer_id for b in accepted.blocks[1:]}
    metrics = Metrics(
        blocks_added=accepted.height,
        proposer_diversity=len(proposers),
        nodes_in_sync=sum(1 for c in chains if c.head.block_hash == head),
        safety_violations=check_safety(log),
        honest_count=len(chains),
        finality_violations=check_finality(log),
    )
    return metrics, accepted


def run_once(config: ExperimentConfig, replicate: int = 0, keep_log: bool = False) -> RunResult:
    sim, honest, seed = build_simulation(config, replicate)
    sim.run(config.duration_ms)
    chains = [node.chain for node, ok in zip(sim.nodes, honest) if ok]
    metrics, accepted = compute_metrics(chains, sim.log)
    log.info(
        "%s rep=%d blocks=%d diversity=%d in_sync=%d/%d safety=%d",
        experiment_id(config),
        replicate,
        metrics.blocks_added,
        metrics.proposer_diversity,
        metrics.nodes_in_sync,
        metrics.honest_count,
        metrics.safety_violations,
    )
    return RunResult(config, replicate, seed, metrics, sim.log if keep_log else None, accepted)


def run_replicates(config: ExperimentConfig, keep_logs: bool = False) -> list[RunResult]:
    config.validate()
    return [run_once(config, r, keep_logs) for r in range(config.replicates)]


def to_rows(results: Sequence[RunResult]) -> list[Row]:
    return [
        Row(experiment_id(r.config), r.config.node_count, r.config.malicious_fraction, r.replicate, r.metrics, r.rng_seed)
        for r in results
    ]


def run_fairness(node_counts: Sequence[int], config: ExperimentConfig) -> list[list[RunResult]]:
    """One group of replicates per node count, no adversaries."""
    if config.malicious_fraction != 0:
        raise ConfigError("fairness runs require malicious_fraction = 0")
    configs = [config.with_(node_count=n) for n in node_counts]
    for c in configs:
        c.validate()
    return [run_replicates(c) for c in configs]


def run_robustness(malicious_fractions: Sequence[float], config: ExperimentConfig) -> list[list[RunResult]]:
    """One group of replicates per malicious fraction at a fixed node count."""
    configs = [config.with_(malicious_fraction=f) for f in malicious_fractions]
    for c in configs:
        c.validate()
    return [run_replicates(c) for c in configs]


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class Summary:
    label: str
    blocks_added: float
    proposer_diversity: float
    nodes_in_sync: float
    safety_violations: int
    honest_count: float


def summarize(group: Sequence[RunResult], label: str) -> Summary:
    n = len(group)
    return Summary(
        label,
        sum(r.metrics.blocks_added for r in group) / n,
        sum(r.metrics.proposer_diversity for r in group) / n,
        sum(r.metrics.nodes_in_sync for r in group) / n,
        sum(r.metrics.safety_violations for r in group),
        sum(r.metrics.honest_count for r in group) / n,
    )


def emit_results(rows: Sequence[Row], destination: str | Path, summaries: Sequence[Summary] = (), column_title: str = "Nodes") -> Path | None:
    """Write per-replicate rows as CSV, plus an averaged summary table beside it.

    Returns the summary path, or None when there are no summaries.
    """
    destination = Path(destination)
    try:
        with destination.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in rows:
                m = row.metrics
                writer.writerow(
                    (
                        row.experiment_id,
                        row.nodes,
                        f"{row.malicious_fraction:g}",
                        row.replicate,
                        m.blocks_added,
                        m.proposer_diversity,
                        m.nodes_in_sync,
                        m.safety_violations,
                        row.rng_seed,
                    )
                )
        if not summaries:
            return None
        summary_path = destination.with_name(destination.stem + "_summary.csv")
        with summary_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow((column_title, *(s.label for s in summaries)))
            writer.writerow(("Blocks added", *(round_half_up(s.blocks_added) for s in summaries)))
            writer.writerow(("Proposer diversity", *(round_half_up(s.proposer_diversity) for s in summaries)))
            writer.writerow(("Nodes in sync", *(round_half_up(s.nodes_in_sync) for s in summaries)))
            writer.writerow(("Safety violations", *(s.safety_violations for s in summaries)))
        return summary_path
    except OSError as exc:
        raise OSError(f"cannot write results to {destination}: {exc}") from exc
