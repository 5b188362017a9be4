"""Train/test splitting, ranking metrics, evaluation reports and token-cost arithmetic."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from agentrec.corpus import Corpus
from agentrec.features import fit_normalizer
from agentrec.pipeline import DEFAULT_K, rerank, retrieve
from agentrec.ranker import Model, Scorer, Slate, TrainConfig, build_slate, train
from agentrec.trace import DecisionInstance, extract_agent_instances, extract_system_instances


def _unit_hash(seed: int, key: str) -> float:
    digest = hashlib.blake2b(f"{seed}:{key}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2**64


def split_dataset(
    instances: Sequence[DecisionInstance], train_fraction: float = 0.8, seed: int = 0
) -> tuple[list[DecisionInstance], list[DecisionInstance]]:
    """Deterministic split by hashed instance id; input order is preserved in each part."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if len(instances) < 2:
        raise ValueError("need at least 2 instances to split")
    train, test = [], []
    for inst in instances:
        (train if _unit_hash(seed, inst.instance_id) < train_fraction else test).append(inst)
    return train, test


def corpus_instances(corpus: Corpus, kind: str, skipped: list | None = None) -> list[DecisionInstance]:
    if kind == "agent":
        return extract_agent_instances(corpus.trees, corpus.pool)
    return extract_system_instances(corpus.trees, skipped)


def retrieval_success_rate(instances: Sequence[DecisionInstance], k: int, corpus: Corpus) -> float:
    """Fraction of instances whose gold candidate is in the stage-1 top-``k``."""
    if not instances:
        return 0.0
    hits = 0
    for inst in instances:
        hits += inst.gold_id in {cid for cid, _ in retrieve(inst.query, corpus, inst.kind, k)}
    return hits / len(instances)


def top_k_accuracy(
    instances: Sequence[DecisionInstance],
    model: Scorer,
    k_retrieve: int,
    k_eval: Iterable[int],
    corpus: Corpus,
) -> dict[int, float]:
    if not instances:
        raise ValueError("empty eval set")
    k_eval = sorted(set(k_eval))
    hits = dict.fromkeys(k_eval, 0)
    for inst in instances:
        ranking = rerank(model, inst.query, retrieve(inst.query, corpus, inst.kind, k_retrieve), corpus).ranking
        for k in k_eval:
            hits[k] += inst.gold_id in ranking[:k]
    return {k: hits[k] / len(instances) for k in k_eval}


@dataclass(frozen=True)
class EvalConfig:
    dataset: str = "corpus"
    k: int = DEFAULT_K
    k_eval: tuple[int, ...] = (1, 5, 10)
    seed: int = 0
    train_fraction: float = 0.8
    lower_is_better: bool = False
    deterministic: bool = True

    def digest(self) -> str:
        body = {k: v for k, v in asdict(self).items() if k != "deterministic"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class EvalReport:
    dataset: str
    kind: str
    k: int
    top_1: float
    top_k: dict[int, float]
    retrieval_sr: float
    lower_is_better: bool
    records: list[dict] = field(default_factory=list)
    config_digest: str = ""
    created: float | None = None

    @property
    def metrics(self) -> dict[str, float]:
        out = {"top_1": self.top_1, "retrieval_sr": self.retrieval_sr}
        out.update({f"top_{k}": v for k, v in self.top_k.items()})
        return out

    def to_dict(self) -> dict:
        d = {
            "dataset": self.dataset,
            "kind": self.kind,
            "k": self.k,
            "metrics": self.metrics,
            "lower_is_better": self.lower_is_better,
            "config_digest": self.config_digest,
            "records": self.records,
        }
        if self.created is not None:
            d["created"] = self.created
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def variant(self) -> str:
        return f"{self.kind}-two_stage-K{self.k}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "dataset", "variant", "value"])
        for name, value in self.metrics.items():
            writer.writerow([name, self.dataset, self.variant, repr(value)])
        return buf.getvalue()

    def summary(self) -> str:
        arrow = "lower is better" if self.lower_is_better else "higher is better"
        lines = [f"{self.dataset} [{self.variant}] ({arrow})"]
        lines += [f"  {name:<14}{value:.4f}" for name, value in self.metrics.items()]
        return "\n".join(lines)


def better(a: EvalReport, b: EvalReport) -> EvalReport:
    """The report with the better Top-1, honouring the orientation flag of ``a``."""
    if a.lower_is_better:
        return a if a.top_1 <= b.top_1 else b
    return a if a.top_1 >= b.top_1 else b


def evaluate(corpus: Corpus, model: Model, config: EvalConfig = EvalConfig()) -> EvalReport:
    """Score the held-out split of ``corpus`` with ``model``."""
    instances = corpus_instances(corpus, model.kind)
    _, test = split_dataset(instances, config.train_fraction, config.seed)
    if not test:
        raise ValueError("empty eval set")
    k_eval = sorted(set(config.k_eval) | {1})
    hits = dict.fromkeys(k_eval, 0)
    sr_hits = 0
    records = []
    for inst in test:
        stage1 = retrieve(inst.query, corpus, model.kind, config.k)
        rec = rerank(model, inst.query, stage1, corpus)
        ranking = rec.ranking
        in_stage1 = inst.gold_id in ranking
        sr_hits += in_stage1
        for k in k_eval:
            hits[k] += inst.gold_id in ranking[:k]
        records.append(
            {
                "instance_id": inst.instance_id,
                "gold": inst.gold_id,
                "chosen": rec.chosen,
                "gold_stage1_rank": [cid for cid, _ in stage1].index(inst.gold_id) + 1 if in_stage1 else None,
                "gold_rerank_rank": ranking.index(inst.gold_id) + 1 if in_stage1 else None,
            }
        )
    n = len(test)
    top_k = {k: hits[k] / n for k in k_eval}
    return EvalReport(
        dataset=config.dataset,
        kind=model.kind,
        k=config.k,
        top_1=top_k[1],
        top_k=top_k,
        retrieval_sr=sr_hits / n,
        lower_is_better=config.lower_is_better,
        records=records,
        config_digest=config.digest(),
        created=None if config.deterministic else time.time(),
    )


TOKEN_VARIANTS = ("ctx", "item", "direct", "two_stage", "direct_graph", "two_stage_graph")


@dataclass(frozen=True)
class TokenCostParams:
    """Inputs of the per-decision-node prompt token count.

    N/K: agent pool and shortlist sizes; M/K_g: subgraph pool and shortlist;
    L: tokens per item; s: nodes per subgraph; L_s: tokens per subgraph node;
    ctx_nodes: context nodes; L_g: tokens per context node.
    """

    N: float | None = None
    K: float | None = None
    M: float | None = None
    K_g: float | None = None
    L: float | None = None
    s: float | None = None
    L_s: float | None = None
    ctx_nodes: float = 0
    L_g: float | None = None

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.K is not None and self.N is not None and self.K > self.N:
            raise ValueError("K must not exceed N")
        if self.K_g is not None and self.M is not None and self.K_g > self.M:
            raise ValueError("K_g must not exceed M")


_REQUIRED = {
    "ctx": ("ctx_nodes", "L_g"),
    "item": ("L",),
    "direct": ("N", "L"),
    "two_stage": ("N", "K", "L"),
    "direct_graph": ("M", "s", "L_s"),
    "two_stage_graph": ("M", "K_g", "s", "L_s"),
}


def token_cost(params: TokenCostParams, variant: str, expected: bool = False) -> int | float:
    """Prompt tokens consumed at one decision node.

    With ``expected=True`` real-valued (average) counts are accepted and a float
    is returned; the arithmetic is exact on the decimal inputs either way.
    """
    if variant not in _REQUIRED:
        raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(TOKEN_VARIANTS)}")
    missing = [p for p in _REQUIRED[variant] if getattr(params, p) is None]
    if params.ctx_nodes and params.L_g is None:
        missing.append("L_g")
    if missing:
        raise ValueError(f"variant {variant!r} needs: {', '.join(dict.fromkeys(missing))}")

    def q(name: str) -> Fraction:
        value = getattr(params, name)
        if value is None:
            return Fraction(0)
        if not expected and value != int(value):
            raise ValueError(f"{name}={value} is not an integer; use expected mode for averages")
        return Fraction(str(value))

    ctx = q("ctx_nodes") * q("L_g")
    item = q("L") + ctx
    graph_item = q("s") * q("L_s") + ctx
    total = {
        "ctx": ctx,
        "item": item,
        "direct": q("N") * item,
        "two_stage": (q("N") + q("K")) * item,
        "direct_graph": q("M") * graph_item,
        "two_stage_graph": (q("M") + q("K_g")) * graph_item,
    }[variant]
    return float(total) if expected else int(total)


def training_slates(
    corpus: Corpus,
    instances: Sequence[DecisionInstance],
    k: int,
    normalizer,
) -> list[Slate]:
    """Stage-1 top-``k`` slates; a missed gold replaces the last retrieved candidate."""
    slates = []
    for inst in instances:
        ids = [cid for cid, _ in retrieve(inst.query, corpus, inst.kind, k)]
        if inst.gold_id not in ids:
            ids[-1] = inst.gold_id
        candidates = [corpus.candidate(inst.kind, cid) for cid in ids]
        slates.append(build_slate(inst.query, candidates, inst.gold_id, corpus, normalizer))
    return slates


def train_model(corpus: Corpus, kind: str, config: TrainConfig = TrainConfig()) -> tuple[Model, list[Slate]]:
    """Split, fit the normalizer on the training side, build slates and train."""
    instances = corpus_instances(corpus, kind)
    train_set, _ = split_dataset(instances, config.train_fraction, config.seed)
    if not train_set:
        raise ValueError("empty training split")
    if kind == "system":
        graphs = [corpus.systems_by_id[inst.gold_id] for inst in train_set]
    else:
        graphs = corpus.systems
    normalizer = fit_normalizer(graphs, corpus.pool)
    slates = training_slates(corpus, train_set, config.k, normalizer)
    model = train(
        slates,
        config,
        normalizer=normalizer,
        encoder_dim=corpus.encoder.dim,
        sidecar_digest=corpus.encoder.digest,
    )
    return model, slates
