"""Linear slate ranker trained with softmax cross-entropy.

A candidate's score is ``w . [rel, hist, coop, struct]`` where ``coop`` and
``struct`` themselves depend on the inner weights ``w_coop`` and ``w_struct``
(see :mod:`agentrec.features`). All 15 weights are trained jointly by plain
mini-batch gradient descent on

    loss(slate) = -s(gold) + logsumexp(s) + lam * ||theta||^2

summed over the slates of each batch.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Literal, Mapping, Protocol, Sequence

import numpy as np

from agentrec.corpus import Corpus, SystemCandidate
from agentrec.features import (
    LOGIT_CLIP,
    N_COOP,
    N_STRUCT,
    NormalizationStats,
    RawFeatures,
    raw_features,
    sigmoid,
)
from agentrec.trace import AgentRecord

MODEL_VERSION = 1
N_OUTER = 4
N_PARAMS = N_OUTER + N_COOP + N_STRUCT

Kind = Literal["agent", "system"]


class ModelFileError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1e-4
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0
    k: int = 20
    train_fraction: float = 0.8

    @classmethod
    def from_dict(cls, d: Mapping) -> TrainConfig:
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


class Scorer(Protocol):
    """Anything that scores the candidates of a slate; the linear Model is one."""

    kind: str

    def scores(self, raw: RawFeatures) -> np.ndarray: ...


@dataclass(frozen=True)
class Model:
    kind: Kind
    w: tuple[float, ...] = (0.25,) * N_OUTER
    w_coop: tuple[float, ...] = (1 / N_COOP,) * N_COOP
    w_struct: tuple[float, ...] = (1 / N_STRUCT,) * N_STRUCT
    normalizer: NormalizationStats = field(default_factory=NormalizationStats)
    encoder_dim: int = 256
    sidecar_digest: str = ""
    train_config: TrainConfig = field(default_factory=TrainConfig)
    loss_curve: tuple[float, ...] = ()
    version: int = MODEL_VERSION

    def __post_init__(self) -> None:
        if self.kind not in ("agent", "system"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        for name, n in (("w", N_OUTER), ("w_coop", N_COOP), ("w_struct", N_STRUCT)):
            vals = tuple(float(x) for x in getattr(self, name))
            if len(vals) != n:
                raise ValueError(f"{name} needs {n} values, got {len(vals)}")
            if not all(math.isfinite(x) for x in vals):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, vals)
        object.__setattr__(self, "loss_curve", tuple(float(x) for x in self.loss_curve))

    @property
    def theta(self) -> np.ndarray:
        return np.array(self.w + self.w_coop + self.w_struct)

    def with_theta(self, theta: np.ndarray) -> Model:
        theta = [float(x) for x in theta]
        return replace(
            self,
            w=tuple(theta[:N_OUTER]),
            w_coop=tuple(theta[N_OUTER : N_OUTER + N_COOP]),
            w_struct=tuple(theta[N_OUTER + N_COOP :]),
        )

    def features(self, raw: RawFeatures) -> np.ndarray:
        return raw.assemble(self.w_coop, self.w_struct)

    def scores(self, raw: RawFeatures) -> np.ndarray:
        f = self.features(raw)
        w = self.w
        return w[0] * f[..., 0] + w[1] * f[..., 1] + w[2] * f[..., 2] + w[3] * f[..., 3]


def candidate_kind(c) -> Kind:
    return "agent" if isinstance(c, AgentRecord) else "system"


def score(model: Model, query: str, candidate: AgentRecord | SystemCandidate, corpus: Corpus) -> float:
    if candidate_kind(candidate) != model.kind:
        raise ValueError(f"model kind {model.kind!r} cannot score a {candidate_kind(candidate)} candidate")
    raw = raw_features(query, [candidate], corpus, model.normalizer)
    return float(model.scores(raw)[0])


@dataclass(frozen=True)
class Slate:
    query: str
    candidate_ids: tuple[str, ...]
    gold_index: int
    raw: RawFeatures
    kind: Kind = "agent"

    def __post_init__(self) -> None:
        n = len(self.candidate_ids)
        if n == 0:
            raise ValueError("slate has no candidates")
        if len(set(self.candidate_ids)) != n:
            raise ValueError("slate has duplicate candidate ids")
        if not 0 <= self.gold_index < n:
            raise ValueError(f"gold_index {self.gold_index} out of range for {n} candidates")
        if len(self.raw) != n:
            raise ValueError("feature rows do not match candidates")

    @property
    def gold_id(self) -> str:
        return self.candidate_ids[self.gold_index]


def build_slate(
    query: str,
    candidates: Sequence[AgentRecord | SystemCandidate],
    gold_id: str,
    corpus: Corpus,
    normalizer: NormalizationStats | None,
) -> Slate:
    ids = tuple(c.id for c in candidates)
    return Slate(
        query=query,
        candidate_ids=ids,
        gold_index=ids.index(gold_id),
        raw=raw_features(query, candidates, corpus, normalizer),
        kind=candidate_kind(candidates[0]),
    )


@dataclass
class _Packed:
    """Slates padded to a common width; ``mask`` marks real candidates."""

    rel: np.ndarray
    hist: np.ndarray
    coop_fixed: np.ndarray
    coop_stats: np.ndarray
    struct_stats: np.ndarray
    mask: np.ndarray
    gold: np.ndarray

    @classmethod
    def of(cls, slates: Sequence[Slate]) -> _Packed:
        s, width = len(slates), max(len(sl.candidate_ids) for sl in slates)
        out = cls(
            rel=np.zeros((s, width)),
            hist=np.zeros((s, width)),
            coop_fixed=np.zeros((s, width)),
            coop_stats=np.zeros((s, width, N_COOP)),
            struct_stats=np.zeros((s, width, N_STRUCT)),
            mask=np.zeros((s, width), dtype=bool),
            gold=np.array([sl.gold_index for sl in slates]),
        )
        for i, sl in enumerate(slates):
            k = len(sl.candidate_ids)
            out.rel[i, :k] = sl.raw.rel
            out.hist[i, :k] = sl.raw.hist
            out.coop_fixed[i, :k] = sl.raw.coop_fixed
            out.coop_stats[i, :k] = sl.raw.coop_stats
            out.struct_stats[i, :k] = sl.raw.struct_stats
            out.mask[i, :k] = True
        return out

    def take(self, idx: np.ndarray) -> _Packed:
        return _Packed(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    @property
    def raw(self) -> RawFeatures:
        return RawFeatures(self.rel, self.hist, self.coop_fixed, self.coop_stats, self.struct_stats)


def _loss_and_grad(model: Model, packed: _Packed, lam: float, need_grad: bool = True):
    """Per-slate losses (S,) and the gradient of their sum w.r.t. theta."""
    w = np.asarray(model.w)
    logits = (packed.struct_stats * np.asarray(model.w_struct)).sum(axis=-1)
    f = model.features(packed.raw)
    s = model.scores(packed.raw)
    s = np.where(packed.mask, s, -np.inf)
    top = s.max(axis=1, keepdims=True)
    e = np.where(packed.mask, np.exp(s - top), 0.0)
    z = e.sum(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(z[:, 0])
    rows = np.arange(len(packed.gold))
    theta = model.theta
    reg = lam * float(theta @ theta)
    losses = lse - s[rows, packed.gold] + reg
    if not need_grad:
        return losses, None

    diff = e / z
    diff[rows, packed.gold] -= 1.0
    g_w = np.einsum("sk,skf->f", diff, f)
    g_coop = w[2] * np.einsum("sk,skf->f", diff, packed.coop_stats)
    sig = f[..., 3]
    dsig = np.where(np.abs(logits) < LOGIT_CLIP, sig * (1.0 - sig), 0.0)
    g_struct = w[3] * np.einsum("sk,skf->f", diff * dsig, packed.struct_stats)
    grad = np.concatenate([g_w, g_coop, g_struct]) + len(rows) * 2.0 * lam * theta
    return losses, grad


def slate_loss(model: Model, slate: Slate, lam: float | None = None) -> float:
    lam = model.train_config.lam if lam is None else lam
    losses, _ = _loss_and_grad(model, _Packed.of([slate]), lam, need_grad=False)
    return float(losses[0])


def gradient(model: Model, slate: Slate, lam: float | None = None) -> np.ndarray:
    """Analytic gradient of ``slate_loss`` over theta = (w, w_coop, w_struct)."""
    lam = model.train_config.lam if lam is None else lam
    _, grad = _loss_and_grad(model, _Packed.of([slate]), lam)
    return grad


def ranked(scores: np.ndarray, ids: Sequence[str]) -> list[int]:
    """Candidate positions by descending score; ties go to the smallest id."""
    return sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))


def slate_top1(model: Scorer, slates: Sequence[Slate]) -> float:
    if not slates:
        return 0.0
    hits = sum(ranked(model.scores(sl.raw), sl.candidate_ids)[0] == sl.gold_index for sl in slates)
    return hits / len(slates)


def train(
    slates: Sequence[Slate],
    config: TrainConfig = TrainConfig(),
    normalizer: NormalizationStats | None = None,
    encoder_dim: int = 256,
    sidecar_digest: str = "",
) -> Model:
    if not slates:
        raise ValueError("cannot train on an empty dataset")
    kinds = {sl.kind for sl in slates}
    if len(kinds) != 1:
        raise ValueError(f"slates mix kinds: {sorted(kinds)}")
    model = Model(
        kind=kinds.pop(),
        normalizer=normalizer or NormalizationStats(),
        encoder_dim=encoder_dim,
        sidecar_digest=sidecar_digest,
        train_config=config,
    )
    packed = _Packed.of(slates)
    rng = np.random.default_rng(config.seed)
    theta = model.theta
    curve = []
    for _ in range(config.epochs):
        order = rng.permutation(len(slates))
        for start in range(0, len(order), config.batch_size):
            batch = packed.take(order[start : start + config.batch_size])
            _, grad = _loss_and_grad(model.with_theta(theta), batch, config.lam)
            theta = theta - config.lr * grad
        losses, _ = _loss_and_grad(model.with_theta(theta), packed, config.lam, need_grad=False)
        curve.append(float(losses.mean()))
    return replace(model.with_theta(theta), loss_curve=tuple(curve))


def _dumps(obj, indent: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("non-finite value in model")
        return format(obj, ".17g")
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in obj):
            return "[" + ", ".join(_dumps(x) for x in obj) + "]"
        return "[\n" + ",\n".join(pad + _dumps(x, indent + 1) for x in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def model_to_dict(model: Model) -> dict:
    return {
        "version": model.version,
        "kind": model.kind,
        "w": list(model.w),
        "w_coop": list(model.w_coop),
        "w_struct": list(model.w_struct),
        "normalizer": model.normalizer.to_dict(),
        "encoder": {"dim": model.encoder_dim, "sidecar_digest": model.sidecar_digest},
        "train_config": asdict(model.train_config),
        "loss_curve": list(model.loss_curve),
    }


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(_dumps(model_to_dict(model)) + "\n", encoding="utf-8")


def _field(doc: Mapping, name: str):
    if name not in doc:
        raise ModelFileError(f"missing field {name!r}")
    return doc[name]


def load_model(path: str | Path) -> Model:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"corrupt model file {path}: {exc.msg} at line {exc.lineno}") from exc
    if not isinstance(doc, dict):
        raise ModelFileError("model file must hold a JSON object")
    version = _field(doc, "version")
    if version != MODEL_VERSION:
        raise ModelFileError(f"field 'version': expected {MODEL_VERSION}, found {version!r}")
    enc = _field(doc, "encoder")
    try:
        normalizer = NormalizationStats.from_dict(_field(doc, "normalizer"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"field 'normalizer': {exc}") from exc
    kwargs = {}
    for name in ("kind", "w", "w_coop", "w_struct", "train_config", "loss_curve"):
        kwargs[name] = _field(doc, name)
    try:
        return Model(
            kind=kwargs["kind"],
            w=kwargs["w"],
            w_coop=kwargs["w_coop"],
            w_struct=kwargs["w_struct"],
            normalizer=normalizer,
            encoder_dim=int(_field(enc, "dim")),
            sidecar_digest=str(_field(enc, "sidecar_digest")),
            train_config=TrainConfig.from_dict(kwargs["train_config"]),
            loss_curve=kwargs["loss_curve"],
            version=version,
        )
    except (TypeError, ValueError) as exc:
        raise ModelFileError(str(exc)) from exc
