"""Multi-receiver scenario construction and semantics-coupled datasets.

A scenario places receivers in clusters.  Receivers in one cluster share
that cluster's path-parameter template up to small per-receiver jitter;
clusters differ in the time of flight of their strongest static path.
The dataset generator draws class-conditional Gaussian features built
from two ingredients: a semantics term (every coordinate shifts with the
receiver's *featurized* semantics, so data distributions literally
follow semantic distance and identical semantics give identical
distributions) and a class-signature term (gesture class y activates one
otherwise-empty feature axis, and which axis that is depends on the
receiver's cluster — class y in cluster c lights axis y + c).  The
staggered assignment collides labels across clusters: interior signature
axes carry one cluster's class y and the other's class y+1, so a single
shared model cannot label both clusters at once, while per-cluster
models can.  Because each class signature is a one-hot direction, the
optimal classifier keeps its argmax structure under arbitrarily strong
weight decay — accuracy does not hinge on a delicate regularization
trade-off.

Every receiver also exposes its exact data distribution over a shared
discrete support (class x detected-signature-axis cells, Gaussian
masses via erf), which makes total-variation distances between
receivers exactly computable rather than sample estimates.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .channel import PathComponent, PhysicalSemantics, SamplingGrid
from .config import DatasetConfig, GridConfig, ScenarioConfig
from .errors import InvalidScenario
from .mapper import featurize_semantics
from .seeding import substream

#: first feature axis of the class-signature block.  Featurized
#: semantics lay out five static-path slots of four numbers each; the
#: standard scenarios populate only the first two slots, so axes 8..19
#: are structurally zero and free to carry the class signatures.
CLASS_BLOCK_START = 8
#: last axis (exclusive) the signature block may grow into.
CLASS_BLOCK_END = 20

_BASE_STATIC = [
    # (amplitude, tof seconds, aoa)
    (1.0, 2.0e-8, 0.1),
    (0.6, 6.0e-8, -0.3),
]
_BASE_DYNAMIC = [
    # (amplitude, tof seconds, aoa, dfs Hz)
    (0.8, 3.0e-8, 0.3, 40.0),
    (0.5, 7.0e-8, -0.2, 60.0),
]


@dataclass
class LabeledDataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    num_classes: int


@dataclass
class DiscreteDistribution:
    """Exact cell probabilities over the shared (label, detected-axis) cells.

    ``threshold`` is the firing level on the class-signature axes that
    defines the cells; every receiver in a scenario shares one support,
    so the vectors are directly comparable.
    """

    probs: np.ndarray
    threshold: float
    num_classes: int


@dataclass
class ReceiverProfile:
    id: str
    semantics: PhysicalSemantics
    labeled: bool
    cluster: int
    dataset: LabeledDataset = None          # labeled receivers only
    oracle_dataset: LabeledDataset = None   # hidden eval data (unlabeled)
    distribution: DiscreteDistribution = None
    data_twin_of: str = None                # reuse this receiver's data draw


@dataclass
class Scenario:
    receivers: list
    seed: int
    noise_std: float
    phase_error_model: str
    grid: SamplingGrid
    cluster_centers: list = field(default_factory=list)
    config: ScenarioConfig = None

    def __post_init__(self):
        ids = [r.id for r in self.receivers]
        if len(set(ids)) != len(ids):
            raise InvalidScenario("receiver ids must be unique")
        if not any(r.labeled for r in self.receivers):
            raise InvalidScenario("need at least one labeled receiver")

    def labeled_receivers(self):
        return [r for r in self.receivers if r.labeled]

    def unlabeled_receivers(self):
        return [r for r in self.receivers if not r.labeled]

    def receiver(self, rid):
        for r in self.receivers:
            if r.id == rid:
                return r
        raise InvalidScenario(f"no receiver {rid!r}")


def grid_from_config(gc: GridConfig) -> SamplingGrid:
    return SamplingGrid(
        num_packets=gc.num_packets,
        num_subcarriers=gc.num_subcarriers,
        num_antennas=gc.num_antennas,
        packet_interval=gc.packet_interval,
        subcarrier_spacing=gc.subcarrier_spacing,
        carrier_freq=gc.carrier_freq,
        antenna_spacing=gc.antenna_spacing,
    )


def _cluster_center(cfg: ScenarioConfig, cluster: int) -> PhysicalSemantics:
    statics = []
    env_shift = np.zeros(len(_BASE_STATIC))
    if cfg.environment_id != 0:
        rng = substream(cfg.seed, "environment", cfg.environment_id)
        env_shift = rng.normal(
            0.0, cfg.environment_jitter, size=len(_BASE_STATIC)
        )
    for i, (amp, tof, aoa) in enumerate(_BASE_STATIC):
        shift = cfg.cluster_tof_offset * cluster if i == 0 else 0.0
        statics.append(
            PathComponent(
                amplitude=amp,
                tof=max(tof + shift + env_shift[i], 0.0),
                aoa=aoa,
                kind="static",
            )
        )
    dynamics = [
        PathComponent(amplitude=a, tof=t, aoa=o, dfs=d, kind="dynamic")
        for (a, t, o, d) in _BASE_DYNAMIC
    ]
    return PhysicalSemantics(
        environment_paths=tuple(statics),
        gesture_paths=tuple(dynamics),
        receiver_id=f"cluster{cluster}",
    )


def _jitter_semantics(center, cfg, rid):
    js = cfg.jitter_scale
    if js == 0.0:
        return replace(center, receiver_id=rid)
    rng = substream(cfg.seed, "scenario", rid)

    def perturb(p):
        amp = max(p.amplitude + js * rng.normal(0.0, cfg.amp_jitter), 1e-3)
        tof = max(p.tof + js * rng.normal(0.0, cfg.tof_jitter), 0.0)
        aoa = float(
            np.clip(p.aoa + js * rng.normal(0.0, cfg.aoa_jitter), -1.0, 1.0)
        )
        dfs = None
        if p.kind == "dynamic":
            dfs = p.dfs + js * rng.normal(0.0, cfg.dfs_jitter)
        return PathComponent(
            amplitude=amp, tof=tof, aoa=aoa, dfs=dfs, kind=p.kind
        )

    return PhysicalSemantics(
        environment_paths=tuple(perturb(p) for p in center.environment_paths),
        gesture_paths=tuple(perturb(p) for p in center.gesture_paths),
        receiver_id=rid,
    )


def make_scenario(cfg: ScenarioConfig) -> Scenario:
    """Build receivers, clusters and semantics; datasets come later.

    Receiver i joins cluster i mod num_clusters; the first num_labeled
    receivers are the labeled set.  With ``twin_unlabeled_of`` set, the
    last unlabeled receiver's semantics are an exact copy of the named
    receiver's — the zero-shot identical-semantics case.
    """
    if cfg.num_labeled < 1:
        raise InvalidScenario("need at least one labeled receiver")
    if cfg.num_labeled > cfg.num_receivers:
        raise InvalidScenario("num_labeled exceeds num_receivers")
    if cfg.num_clusters < 1:
        raise InvalidScenario("need at least one cluster")
    if cfg.phase_error_model not in ("none", "iid-uniform", "random-walk"):
        raise InvalidScenario(
            f"unknown phase_error_model {cfg.phase_error_model!r}"
        )

    centers = [_cluster_center(cfg, c) for c in range(cfg.num_clusters)]
    receivers = []
    for i in range(cfg.num_receivers):
        cluster = i % cfg.num_clusters
        rid = f"rx{i}"
        sem = _jitter_semantics(centers[cluster], cfg, rid)
        receivers.append(
            ReceiverProfile(
                id=rid,
                semantics=sem,
                labeled=i < cfg.num_labeled,
                cluster=cluster,
            )
        )

    if cfg.twin_unlabeled_of is not None:
        unlabeled = [r for r in receivers if not r.labeled]
        if not unlabeled:
            raise InvalidScenario("twin requested but no unlabeled receiver")
        source = next(
            (r for r in receivers if r.id == cfg.twin_unlabeled_of), None
        )
        if source is None:
            raise InvalidScenario(
                f"twin source {cfg.twin_unlabeled_of!r} not in scenario"
            )
        twin = unlabeled[-1]
        twin.semantics = replace(source.semantics, receiver_id=twin.id)
        twin.cluster = source.cluster
        twin.data_twin_of = source.id

    return Scenario(
        receivers=receivers,
        seed=cfg.seed,
        noise_std=cfg.noise_std,
        phase_error_model=cfg.phase_error_model,
        grid=grid_from_config(cfg.grid),
        cluster_centers=centers,
        config=cfg,
    )


def semantic_distance(sem_a, sem_b, max_paths=5) -> float:
    """Euclidean distance between featurized semantics."""
    fa = featurize_semantics(sem_a, max_paths=max_paths)
    fb = featurize_semantics(sem_b, max_paths=max_paths)
    return float(np.linalg.norm(fa - fb))


# --- dataset generation ------------------------------------------------------

def _normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _signature_axes(num_classes, num_clusters) -> int:
    """How many signature axes the scenario needs; validates capacity."""
    n_axes = num_classes + num_clusters - 1
    if CLASS_BLOCK_START + n_axes > CLASS_BLOCK_END:
        raise InvalidScenario(
            f"{num_classes} classes x {num_clusters} clusters need "
            f"{n_axes} signature axes; only "
            f"{CLASS_BLOCK_END - CLASS_BLOCK_START} are free"
        )
    return n_axes


def _class_means(feat, base_feat, num_classes, class_sep, coupling, cluster):
    """Mean matrix (num_classes, dim) for one receiver.

    Every row carries the semantics term coupling * (feat - base_feat);
    row y additionally lifts signature axis y + cluster by ``class_sep``.
    Centering on ``base_feat`` keeps feature magnitudes moderate, which
    keeps the downstream smoothness constant small enough for the
    configured learning rates; the semantics term is exactly zero on the
    signature axes because no real path occupies those feature slots.
    """
    means = np.tile(coupling * (feat - base_feat), (num_classes, 1))
    for y in range(num_classes):
        means[y, CLASS_BLOCK_START + y + cluster] += class_sep
    return means


def _exact_distribution(num_classes, class_sep, noise, n_axes, cluster):
    """Exact cell masses of one receiver's (label, detected-axis) law.

    A signature axis "fires" when its value exceeds class_sep / 2.  For
    label y the cells are: exactly axis j fired (j over the signature
    block), plus a catch-all for none-or-several.  Each probability is a
    product of independent Gaussian tail masses (erf), so two receivers'
    total-variation distance is exact arithmetic, not a sample estimate.
    Labels are uniform, hence the 1/num_classes factor.
    """
    q = _normal_cdf(0.5 * class_sep / noise)  # P(fire | active) and
    #                                           P(quiet | inactive) alike
    solo_active = q ** n_axes
    solo_other = (1.0 - q) ** 2 * q ** (n_axes - 2) if n_axes >= 2 else 0.0
    probs = np.zeros(num_classes * (n_axes + 1))
    for y in range(num_classes):
        row = np.full(n_axes, solo_other)
        row[y + cluster] = solo_active
        start = y * (n_axes + 1)
        probs[start:start + n_axes] = row
        probs[start + n_axes] = 1.0 - row.sum()  # none or several fired
    return probs / num_classes


def _draw_dataset(rng, means, per_class, noise, num_classes):
    dim = means.shape[1]
    X = np.zeros((num_classes * per_class, dim))
    y = np.zeros(num_classes * per_class, dtype=int)
    for c in range(num_classes):
        block = slice(c * per_class, (c + 1) * per_class)
        X[block] = means[c] + noise * rng.standard_normal((per_class, dim))
        y[block] = c
    perm = rng.permutation(len(y))
    return X[perm], y[perm]


def generate_datasets(
    scenario: Scenario,
    samples_per_class: int = None,
    num_classes: int = None,
    coupling: float = None,
    dataset_cfg: DatasetConfig = None,
) -> Scenario:
    """Attach datasets and exact exposed distributions to every receiver.

    Labeled receivers get train/test splits on ``dataset``; unlabeled
    receivers get the same thing hidden on ``oracle_dataset`` (used only
    to score transfer, never to train it).  Positional arguments
    override the corresponding ``dataset_cfg`` fields.
    """
    dc = dataset_cfg or DatasetConfig()
    if samples_per_class is not None:
        dc = replace(dc, samples_per_class=samples_per_class)
    if num_classes is not None:
        dc = replace(dc, num_classes=num_classes)
    if coupling is not None:
        dc = replace(dc, coupling=coupling)
    if dc.samples_per_class < 1:
        raise InvalidScenario("samples_per_class must be >= 1")
    if dc.num_classes < 2:
        raise InvalidScenario("need at least two classes")

    class_sep = 3.0 if dc.class_sep is None else dc.class_sep
    if scenario.config is not None:
        num_clusters = scenario.config.num_clusters
    else:
        num_clusters = max(r.cluster for r in scenario.receivers) + 1
    n_axes = _signature_axes(dc.num_classes, num_clusters)

    # Shared reference frame: the jitter-free templates of the base
    # environment.  Using them for centering makes feature coordinates
    # comparable across receivers and across environments (an
    # environment shift moves data relative to this frame instead of
    # silently being re-centered away).
    if scenario.config is not None:
        base_cfg = replace(scenario.config, environment_id=0)
        base_centers = [
            _cluster_center(base_cfg, c) for c in range(num_clusters)
        ]
    else:
        base_centers = scenario.cluster_centers or [
            scenario.receivers[0].semantics
        ]
    center_feats = [featurize_semantics(c) for c in base_centers]
    base_feat = np.mean(center_feats, axis=0)

    receivers = []
    for r in scenario.receivers:
        feat = featurize_semantics(r.semantics)
        means = _class_means(
            feat, base_feat, dc.num_classes, class_sep, dc.coupling,
            r.cluster,
        )
        # An identical twin reuses its source's stream so the two
        # empirical datasets coincide exactly, not just in distribution.
        if r.data_twin_of is not None:
            rng = substream(scenario.seed, "data", r.data_twin_of)
        else:
            stream_kind = "data" if r.labeled else "oracle"
            rng = substream(scenario.seed, stream_kind, r.id)
        X_tr, y_tr = _draw_dataset(
            rng, means, dc.samples_per_class, dc.feature_noise, dc.num_classes
        )
        X_te, y_te = _draw_dataset(
            rng, means, dc.test_per_class, dc.feature_noise, dc.num_classes
        )
        ds = LabeledDataset(X_tr, y_tr, X_te, y_te, dc.num_classes)
        dist = DiscreteDistribution(
            probs=_exact_distribution(
                dc.num_classes, class_sep, dc.feature_noise, n_axes,
                r.cluster,
            ),
            threshold=0.5 * class_sep,
            num_classes=dc.num_classes,
        )
        receivers.append(
            replace(
                r,
                dataset=ds if r.labeled else None,
                oracle_dataset=None if r.labeled else ds,
                distribution=dist,
            )
        )

    return replace(scenario, receivers=receivers)
