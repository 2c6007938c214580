"""Federated round loop: sample participants, train local models (poisoned
where the roster says so), apply model-level manipulations, aggregate, and
score each round on a held-out test set.

Every random decision draws from a stream derived from the master seed plus
a stable label (purpose, round, client), so runs are reproducible end to end
and per-client work is order-independent: clients could train in parallel
and the result would be bit-identical to the sequential loop used here.
"""

from __future__ import annotations

import logging
import math
import time
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .aggregators import AggregatorKind, aggregate
from .attacks import (
    BACKDOOR_KINDS,
    AttackSpec,
    TriggerPattern,
    boost_update,
    embed_trigger,
    flip_labels_targeted,
    flip_labels_untargeted,
    neurotoxin_mask,
    split_trigger,
)
from .clustering import ClusterVerdict
from .config import ExperimentConfig, config_to_dict, malicious_count
from .data import LabeledDataset, gen_synthetic, load_idx, partition_dirichlet, partition_iid
from .errors import ConfigError, RoundError
from .model import GradientUpdate, ModelWeights, add_update, diff
from .training import (
    EvalResult,
    NetworkArchitecture,
    TrainConfig,
    evaluate,
    init_model,
    predict,
    train_local,
)

__all__ = [
    "ClientSpec",
    "FederationState",
    "RoundReport",
    "ExperimentResult",
    "Experiment",
    "sample_participants",
    "compute_asr",
    "backdoor_success_rate",
    "run_experiment",
]

logger = logging.getLogger(__name__)


def _derive_seed_sequence(master_seed: int, *path) -> np.random.SeedSequence:
    words = [int(master_seed)] + [zlib.crc32(str(p).encode()) for p in path]
    return np.random.SeedSequence(words)


def derive_rng(master_seed: int, *path) -> np.random.Generator:
    """Independent generator for one labeled purpose, e.g.
    ``derive_rng(seed, "train", round_index, client_index)``."""
    return np.random.default_rng(_derive_seed_sequence(master_seed, *path))


def derive_seed(master_seed: int, *path) -> int:
    """Single integer seed derived the same way as :func:`derive_rng`."""
    return int(_derive_seed_sequence(master_seed, *path).generate_state(1)[0])


@dataclass(frozen=True)
class ClientSpec:
    """One roster entry: the client's (possibly poisoned) local data."""

    index: int
    malicious: bool
    data: LabeledDataset


@dataclass(frozen=True)
class FederationState:
    """Server-side snapshot between rounds."""

    round_index: int
    global_model: ModelWeights
    clients: tuple[ClientSpec, ...]
    master_seed: int

    def __post_init__(self) -> None:
        total = len(self.clients)
        bad = sum(1 for c in self.clients if c.malicious)
        if total and bad * 2 >= total:
            raise ValueError(
                f"threat model violated: {bad} malicious of {total} clients "
                "(honest clients must hold a strict majority)"
            )


@dataclass(frozen=True)
class RoundReport:
    """Metrics for one completed round, evaluated on the held-out test set."""

    round_index: int
    participants: tuple[int, ...]
    mta: float
    per_class: dict[int, float]
    asr: float
    verdicts: tuple[ClusterVerdict, ...] | None
    wall_ms: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.mta <= 1.0:
            raise ValueError(f"mta must lie in [0, 1], got {self.mta}")
        if not 0.0 <= self.asr <= 1.0:
            raise ValueError(f"asr must lie in [0, 1], got {self.asr}")


@dataclass(frozen=True)
class ExperimentResult:
    reports: tuple[RoundReport, ...]
    summary: dict
    reference_reports: tuple[RoundReport, ...] | None


def sample_participants(
    num_clients: int, bounds: tuple[float, float], rng: np.random.Generator
) -> np.ndarray:
    """Draw a participation fraction uniformly from ``bounds``, round it to a
    count (at least 2, at most all), and pick that many distinct clients."""
    low, high = float(bounds[0]), float(bounds[1])
    if not 0.0 < low <= high <= 1.0:
        raise ValueError(f"participation bounds must satisfy 0 < low <= high <= 1, got {bounds}")
    if num_clients < 2:
        raise ValueError(f"need at least 2 clients to sample from, got {num_clients}")
    fraction = rng.uniform(low, high)
    count = int(math.floor(fraction * num_clients + 0.5))
    count = max(2, min(num_clients, count))
    return np.sort(rng.choice(num_clients, size=count, replace=False))


def compute_asr(
    kind: str,
    attacked: EvalResult | None = None,
    reference: EvalResult | None = None,
    triggered_rate: float | None = None,
    source_class: int | None = None,
) -> float:
    """Attack success rate in [0, 1] for the given attack kind.

    Untargeted flipping measures relative main-accuracy decay against the
    reference run; targeted flipping measures relative source-class accuracy
    decay; backdoor attacks pass through the triggered misclassification
    rate. A zero reference denominator yields 0 with a warning record.
    """
    if kind == "none":
        return 0.0
    if kind in BACKDOOR_KINDS:
        if triggered_rate is None:
            raise ValueError(f"{kind} needs a triggered evaluation rate")
        if not 0.0 <= triggered_rate <= 1.0:
            raise ValueError(f"triggered rate must lie in [0, 1], got {triggered_rate}")
        return float(triggered_rate)
    if attacked is None or reference is None:
        raise ValueError(f"{kind} needs both attacked and reference metrics")
    if kind == "ulfa":
        ref_value, atk_value = reference.accuracy, attacked.accuracy
    elif kind == "tlfa":
        if source_class is None:
            raise ValueError("tlfa needs the source class")
        ref_value = reference.per_class.get(source_class, 0.0)
        atk_value = attacked.per_class.get(source_class, 0.0)
    else:
        raise ValueError(f"unknown attack kind {kind!r}")
    if ref_value == 0.0:
        logger.warning(
            "reference accuracy is zero for %s; defining attack success rate as 0", kind
        )
        return 0.0
    return float(max(0.0, (ref_value - atk_value) / ref_value))


def backdoor_success_rate(
    model: ModelWeights,
    data: LabeledDataset,
    trigger: TriggerPattern,
    activation: str = "relu",
) -> float:
    """Fraction of test samples, excluding those whose true class is already
    the target, classified as the target once the full trigger is stamped in."""
    keep = data.labels != trigger.target_class
    if not keep.any():
        logger.warning("every test sample belongs to the target class; backdoor rate is 0")
        return 0.0
    features = data.features[keep].copy()
    features[:, np.array(trigger.positions)] = np.array(trigger.values)
    preds = predict(model, features, activation)
    return float((preds == trigger.target_class).mean())


def _validate_runtime(cfg: ExperimentConfig) -> None:
    problems = []
    attackers = malicious_count(cfg)
    if not 0.0 <= cfg.malicious_fraction < 0.5:
        problems.append(
            "malicious_fraction: must lie in [0, 0.5) so honest clients hold a "
            f"strict majority, got {cfg.malicious_fraction}"
        )
    if attackers * 2 >= cfg.clients:
        problems.append(
            f"threat model violated: {attackers} malicious of {cfg.clients} clients"
        )
    if cfg.clients < 2:
        problems.append(f"clients: must be >= 2, got {cfg.clients}")
    low, high = cfg.participation
    if not 0.0 < low <= high <= 1.0:
        problems.append(f"participation: invalid bounds {cfg.participation}")
    if cfg.attack.kind == "dba":
        if attackers < 1:
            problems.append("attack: dba needs at least one malicious client")
        if cfg.attack.dba_fragments is None:
            problems.append("attack: dba_fragments unresolved")
    if cfg.attack.kind in BACKDOOR_KINDS and cfg.attack.trigger is None:
        problems.append(f"attack: {cfg.attack.kind} needs a trigger")
    if cfg.rounds < 0:
        problems.append(f"rounds: must be >= 0, got {cfg.rounds}")
    if not cfg.training.learning_rate > 0:
        problems.append(f"training.learning_rate: must be positive, got {cfg.training.learning_rate}")
    if problems:
        raise ConfigError(problems)


def _load_datasets(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    master = cfg.seed
    if cfg.dataset.kind == "synthetic":
        train = gen_synthetic(
            cfg.dataset.classes,
            cfg.dataset.samples,
            cfg.dataset.features,
            cfg.dataset.separation,
            derive_rng(master, "data", "train"),
        )
        test = gen_synthetic(
            cfg.dataset.classes,
            cfg.dataset.test_samples,
            cfg.dataset.features,
            cfg.dataset.separation,
            derive_rng(master, "data", "test"),
        )
        return train, test
    train = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels)
    test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels)
    if cfg.dataset.train_subset is not None and cfg.dataset.train_subset < train.n:
        pick = derive_rng(master, "data", "train_subset").choice(
            train.n, size=cfg.dataset.train_subset, replace=False
        )
        train = train.subset(np.sort(pick))
    if cfg.dataset.test_subset is not None and cfg.dataset.test_subset < test.n:
        pick = derive_rng(master, "data", "test_subset").choice(
            test.n, size=cfg.dataset.test_subset, replace=False
        )
        test = test.subset(np.sort(pick))
    return train, test


def _poison_client_data(
    data: LabeledDataset,
    attack: AttackSpec,
    attacker_rank: int,
    sub_triggers: tuple[TriggerPattern, ...],
    rng: np.random.Generator,
) -> LabeledDataset:
    if attack.kind == "ulfa":
        return flip_labels_untargeted(data, attack.flip_fraction, rng)
    if attack.kind == "tlfa":
        return flip_labels_targeted(data, attack.source_class, attack.target_class)
    if attack.kind in ("mra", "neurotoxin"):
        return embed_trigger(data, attack.trigger, attack.poison_fraction, rng)
    if attack.kind == "dba":
        piece = sub_triggers[attacker_rank % len(sub_triggers)]
        return embed_trigger(data, piece, attack.poison_fraction, rng)
    return data


class Experiment:
    """Fully materialized runtime for one experiment.

    Building an Experiment loads/generates the data, partitions it across the
    roster, poisons the malicious clients' shares, and initializes the global
    model. ``run`` then executes the configured number of rounds.
    """

    def __init__(self, cfg: ExperimentConfig):
        _validate_runtime(cfg)
        self.cfg = cfg
        master = cfg.seed
        self.train_data, self.test_data = _load_datasets(cfg)
        if cfg.partition.kind == "iid":
            partition = partition_iid(
                self.train_data, cfg.clients, derive_rng(master, "partition")
            )
        else:
            partition = partition_dirichlet(
                self.train_data, cfg.clients, cfg.partition.alpha, derive_rng(master, "partition")
            )
        attackers = malicious_count(cfg)
        roster_order = derive_rng(master, "roster").permutation(cfg.clients)
        malicious_ids = set(int(i) for i in roster_order[:attackers])
        sub_triggers: tuple[TriggerPattern, ...] = ()
        if cfg.attack.kind == "dba" and attackers:
            sub_triggers = split_trigger(cfg.attack.trigger, cfg.attack.dba_fragments)
        clients = []
        rank = 0
        for k in range(cfg.clients):
            share = self.train_data.subset(partition.assignments[k])
            malicious = k in malicious_ids
            if malicious and cfg.attack.kind != "none":
                share = _poison_client_data(
                    share, cfg.attack, rank, sub_triggers, derive_rng(master, "attack", k)
                )
                rank += 1
            elif malicious:
                rank += 1
            clients.append(ClientSpec(index=k, malicious=malicious, data=share))
        self.clients = tuple(clients)
        self.architecture = NetworkArchitecture(
            layer_sizes=(self.train_data.d, *cfg.architecture.hidden, self.train_data.num_classes),
            activation=cfg.architecture.activation,
            seed=derive_seed(master, "init"),
        )
        self.initial_model = init_model(self.architecture)
        self.aggregator = AggregatorKind(
            name=cfg.aggregator.kind,
            krum_f=cfg.aggregator.krum_f,
            linkage=cfg.aggregator.linkage,
        )

    def initial_state(self) -> FederationState:
        return FederationState(
            round_index=0,
            global_model=self.initial_model,
            clients=self.clients,
            master_seed=self.cfg.seed,
        )

    def _zero_update(self) -> GradientUpdate:
        return GradientUpdate(np.zeros(v.size) for v in self.initial_model.vectors())

    def run_round(
        self,
        state: FederationState,
        reference_report: RoundReport | None = None,
        prev_global_update: GradientUpdate | None = None,
    ) -> tuple[FederationState, RoundReport, GradientUpdate]:
        """Execute one round from ``state``.

        Returns the next state, the round's report, and the realized global
        update (the Neurotoxin reference for the following round). For
        label-flipping attacks ``reference_report`` must carry the matching
        round of the no-attack reference run.
        """
        cfg = self.cfg
        started = time.perf_counter()
        t = state.round_index
        participants = sample_participants(
            cfg.clients, cfg.participation, derive_rng(state.master_seed, "participants", t)
        )
        if prev_global_update is None:
            prev_global_update = self._zero_update()
        local_models = []
        for i in participants:
            client = state.clients[int(i)]
            train_cfg = TrainConfig(
                learning_rate=cfg.training.learning_rate,
                batch_size=cfg.training.batch_size,
                epochs=cfg.local_epochs,
                seed=derive_seed(state.master_seed, "train", t, client.index),
            )
            local = train_local(
                state.global_model, client.data, train_cfg, cfg.architecture.activation
            )
            if client.malicious and cfg.attack.kind == "mra":
                gamma = cfg.attack.boost_factor
                if gamma is None:
                    gamma = float(len(participants))
                local = boost_update(local, state.global_model, gamma)
            elif client.malicious and cfg.attack.kind == "neurotoxin":
                masked = neurotoxin_mask(
                    diff(local, state.global_model), prev_global_update, cfg.attack.mask_ratio
                )
                local = add_update(state.global_model, masked)
            local_models.append(local)
        try:
            new_global, verdicts = aggregate(self.aggregator, state.global_model, local_models)
        except ValueError as exc:
            raise RoundError(
                f"round {t}: aggregation failed with {len(local_models)} participants: {exc}"
            ) from exc
        metrics = evaluate(new_global, self.test_data, cfg.architecture.activation)
        if cfg.attack.kind in BACKDOOR_KINDS:
            rate = backdoor_success_rate(
                new_global, self.test_data, cfg.attack.trigger, cfg.architecture.activation
            )
            asr = compute_asr(cfg.attack.kind, triggered_rate=rate)
        elif cfg.attack.kind in ("ulfa", "tlfa"):
            if reference_report is None:
                raise RoundError(
                    f"round {t}: {cfg.attack.kind} needs the matching reference round"
                )
            reference = EvalResult(reference_report.mta, reference_report.per_class)
            asr = compute_asr(
                cfg.attack.kind,
                attacked=metrics,
                reference=reference,
                source_class=cfg.attack.source_class,
            )
        else:
            asr = 0.0
        realized_update = diff(new_global, state.global_model)
        wall_ms = (time.perf_counter() - started) * 1000.0
        report = RoundReport(
            round_index=t,
            participants=tuple(int(i) for i in participants),
            mta=metrics.accuracy,
            per_class=dict(metrics.per_class),
            asr=asr,
            verdicts=verdicts,
            wall_ms=wall_ms,
        )
        next_state = replace(state, round_index=t + 1, global_model=new_global)
        return next_state, report, realized_update

    def run(
        self, reference_reports: tuple[RoundReport, ...] | None = None
    ) -> tuple[RoundReport, ...]:
        state = self.initial_state()
        prev_update = self._zero_update()
        reports = []
        for t in range(self.cfg.rounds):
            reference = reference_reports[t] if reference_reports else None
            state, report, prev_update = self.run_round(state, reference, prev_update)
            reports.append(report)
        self.final_state = state
        return tuple(reports)


def _summarize(
    experiment: Experiment,
    reports: tuple[RoundReport, ...],
    reference_reports: tuple[RoundReport, ...] | None,
) -> dict:
    cfg = experiment.cfg
    initial_metrics = evaluate(
        experiment.initial_model, experiment.test_data, cfg.architecture.activation
    )
    if reports:
        final_mta = reports[-1].mta
        final_asr = reports[-1].asr
    else:
        final_mta = initial_metrics.accuracy
        if cfg.attack.kind in BACKDOOR_KINDS:
            final_asr = backdoor_success_rate(
                experiment.initial_model,
                experiment.test_data,
                cfg.attack.trigger,
                cfg.architecture.activation,
            )
        else:
            final_asr = 0.0
    summary: dict = {
        "config": config_to_dict(cfg),
        "rounds_completed": len(reports),
        "initial_mta": initial_metrics.accuracy,
        "final_mta": final_mta,
        "final_asr": final_asr,
        "malicious_clients": sorted(c.index for c in experiment.clients if c.malicious),
        "mta_series": [r.mta for r in reports],
        "asr_series": [r.asr for r in reports],
        "participants": [list(r.participants) for r in reports],
    }
    if cfg.attack.kind in BACKDOOR_KINDS:
        summary["trigger"] = {
            "positions": list(cfg.attack.trigger.positions),
            "values": list(cfg.attack.trigger.values),
            "target_class": cfg.attack.trigger.target_class,
        }
    if cfg.aggregator.kind == "celtibero":
        summary["verdict_history"] = [
            {
                "round": r.round_index,
                "layers": [
                    {
                        "benign": list(v.benign),
                        "poisoned": list(v.poisoned),
                        "score_1": v.score_1,
                        "score_2": v.score_2,
                    }
                    for v in r.verdicts
                ],
            }
            for r in reports
        ]
    if reference_reports is not None:
        summary["reference"] = {
            "mta_series": [r.mta for r in reference_reports],
            "final_mta": reference_reports[-1].mta if reference_reports else initial_metrics.accuracy,
        }
    return summary


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Execute the configured federation end to end.

    Label-flipping attacks automatically execute the paired no-attack
    reference run first (same master seed, same roster, attack disabled) so
    per-round success rates compare matched rounds.
    """
    experiment = Experiment(cfg)
    reference_reports = None
    if cfg.attack.kind in ("ulfa", "tlfa"):
        reference_cfg = replace(cfg, attack=AttackSpec(kind="none"))
        reference_reports = Experiment(reference_cfg).run()
    reports = experiment.run(reference_reports)
    summary = _summarize(experiment, reports, reference_reports)
    return ExperimentResult(
        reports=reports, summary=summary, reference_reports=reference_reports
    )
