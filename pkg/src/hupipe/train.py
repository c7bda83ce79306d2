"""Multi-task training and staged encoder transfer.

A training plan is an INI file. ``[pipeline]`` holds :class:`PipelineConfig`
overrides (plus ``scale = md|lg`` and an optional ``test`` corpus); every
``[stage NAME]`` section, in file order, is one training stage::

    [pipeline]
    scale = md
    epochs = 10

    [stage silver]
    train = silver.conllu
    components = senter, tagger, morph, lemmatizer

    [stage main]
    train = ud-train.conllu, ner-train.tsv
    dev = ud-dev.conllu
    components = tagger, morph, parser, ner
    reuse = silver
    freeze = encoder

Stage keys: ``train`` and ``dev`` (comma-separated corpus paths, relative to
the plan file; ``.conllu`` files are treebanks, others NER TSV),
``components`` (heads trained in the stage), ``reuse`` (earlier stage whose
embed+encoder tensors initialize this one; its other heads are carried over
untouched), ``freeze`` (``encoder`` keeps shared tensors fixed) and
``metric`` (dev metric for checkpoint selection; by default the mean of the
trained components' metrics).
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import read_corpus
from .doc import Doc, merge_docs
from .eval import EvalReport, compute_metrics
from .lemmatizer import CasingPolicy, LemmaDict, collect_tree_labels
from .nn import ParamStore, adam_step
from .pipeline import COMPONENTS, SCALES, Pipeline, PipelineConfig, blank_copy
from .tagger import ConfigError, collect_inventories

log = logging.getLogger(__name__)

STAGE_METRIC = {
    "senter": "sent_f", "tagger": "upos", "morph": "morph",
    "lemmatizer": "lemma", "parser": "las", "ner": "ner_f",
}


@dataclass
class Stage:
    name: str
    train: List[Path]
    components: List[str]
    dev: List[Path] = field(default_factory=list)
    reuse: Optional[str] = None
    freeze: List[str] = field(default_factory=list)
    metric: Optional[str] = None


@dataclass
class TrainPlan:
    stages: List[Stage]
    overrides: Dict[str, str] = field(default_factory=dict)
    test: List[Path] = field(default_factory=list)

    def __post_init__(self):
        done = set()
        for stage in self.stages:
            if stage.reuse is not None and stage.reuse not in done:
                raise ConfigError(f"stage {stage.name!r} reuses {stage.reuse!r}, "
                                  "which is not an earlier stage")
            unknown = set(stage.components) - set(COMPONENTS)
            if unknown:
                raise ConfigError(f"stage {stage.name!r}: unknown components {sorted(unknown)}")
            if not stage.train:
                raise ConfigError(f"stage {stage.name!r} has no training corpus")
            done.add(stage.name)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "TrainPlan":
        path = Path(path)
        parser = configparser.ConfigParser()
        if not parser.read(path, encoding="utf-8"):
            raise FileNotFoundError(path)
        base = path.parent

        def paths(value: str) -> List[Path]:
            return [base / p.strip() for p in value.split(",") if p.strip()]

        def items(value: str) -> List[str]:
            return [p.strip() for p in value.split(",") if p.strip()]

        overrides = dict(parser["pipeline"]) if parser.has_section("pipeline") else {}
        test = paths(overrides.pop("test", ""))
        stages = []
        for section in parser.sections():
            if not section.startswith("stage"):
                continue
            sec = parser[section]
            name = section[len("stage"):].strip() or f"stage{len(stages)}"
            stages.append(Stage(
                name=name,
                train=paths(sec.get("train", "")),
                components=items(sec.get("components", "")),
                dev=paths(sec.get("dev", "")),
                reuse=sec.get("reuse") or None,
                freeze=items(sec.get("freeze", "")),
                metric=sec.get("metric") or None,
            ))
        if not stages:
            raise ConfigError(f"{path}: no [stage ...] sections")
        return cls(stages, overrides, test)

    def config(self, **extra) -> PipelineConfig:
        """Pipeline config from the plan's ``[pipeline]`` section and ``extra``."""
        values: Dict[str, object] = {}
        fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
        raw = {**self.overrides, **{k: v for k, v in extra.items() if v is not None}}
        scale = raw.pop("scale", None)
        for key, value in raw.items():
            if key not in fields:
                raise ConfigError(f"unknown pipeline option {key!r}")
            values[key] = _coerce(fields[key], value)
        # the scale preset wins over an explicit width
        if scale is not None:
            if scale not in SCALES:
                raise ConfigError(f"unknown scale {scale!r}")
            values["width"] = SCALES[scale]
        return PipelineConfig(**values)


def _coerce(f: dataclasses.Field, value):
    if not isinstance(value, str):
        return value
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    if kind == "bool":
        return value.strip().lower() in ("1", "true", "yes", "on")
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind.startswith("List"):
        return [v.strip() for v in value.split(",") if v.strip()]
    if kind.startswith("Dict"):
        out = {}
        for item in value.split(","):
            if item.strip():
                k, _, v = item.partition("=")
                out[k.strip()] = float(v)
        return out
    return value


def group_docs(docs: Sequence[Doc], per_doc: int) -> List[Doc]:
    """Merge consecutive sentence docs so sentence boundaries become learnable."""
    if per_doc <= 1:
        return list(docs)
    return [merge_docs(docs[i:i + per_doc]) for i in range(0, len(docs), per_doc)]


def minibatches(docs: Sequence[Doc], size: int, rng: np.random.Generator) -> List[List[Doc]]:
    """Shuffle, then cut batches by padded token count (count * longest doc)."""
    order = rng.permutation(len(docs))
    batches, batch, longest = [], [], 0
    for i in order:
        doc = docs[i]
        new_longest = max(longest, len(doc))
        if batch and new_longest * (len(batch) + 1) > size:
            batches.append(batch)
            batch, new_longest = [], len(doc)
        batch.append(doc)
        longest = new_longest
    if batch:
        batches.append(batch)
    return batches


def evaluate(nlp: Pipeline, gold: Sequence[Doc], threads: int = 1) -> EvalReport:
    keep_sents = nlp.senter is None
    pred = nlp([blank_copy(d, keep_sents=keep_sents) for d in gold], threads=threads)
    return compute_metrics(gold, pred)


def stage_score(report: EvalReport, stage: Stage) -> float:
    if stage.metric:
        names = [stage.metric]
    else:
        names = [STAGE_METRIC[c] for c in stage.components]
    values = [getattr(report, n) for n in names]
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else 0.0


def transfer_encoder(source: Union[Pipeline, str, Path], config: PipelineConfig,
                     inventories: Dict[str, List[str]], trees=None, lemma_dict=None,
                     freeze: bool = False) -> Pipeline:
    """Fresh pipeline whose embed+encoder tensors and hash seeds come from ``source``."""
    if not isinstance(source, Pipeline):
        source = Pipeline.from_disk(source)
    src = source.config
    mismatched = [
        (name, getattr(src, name), getattr(config, name))
        for name in ("width", "depth", "window", "pieces", "ngram_buckets", "attr_buckets",
                     "num_hashes", "min_n", "max_n")
        if getattr(src, name) != getattr(config, name)
    ]
    if mismatched:
        detail = ", ".join(f"{n}: source {a} vs target {b}" for n, a, b in mismatched)
        raise ConfigError(f"cannot transfer encoder ({detail})")
    target = Pipeline(config, inventories, ParamStore(seed=config.seed),
                      source.embedder.seeds, trees, lemma_dict)
    for name in source.shared_names():
        if target.store[name].shape != source.store[name].shape:
            raise ConfigError(f"cannot transfer {name}: shape {source.store[name].shape} "
                              f"vs {target.store[name].shape}")
        target.store[name] = source.store[name]
    if freeze:
        target.store.frozen.update(target.shared_names())
    return target


def _load(paths: Sequence[Path], per_doc: int) -> Tuple[List[Doc], List[Doc]]:
    """Sentence docs and their per-file groupings."""
    docs: List[Doc] = []
    grouped: List[Doc] = []
    for p in paths:
        part = read_corpus(p)
        docs.extend(part)
        grouped.extend(group_docs(part, per_doc))
    return docs, grouped


def _build_stage_pipeline(stage: Stage, config: PipelineConfig, train_docs: Sequence[Doc],
                          source: Optional[Pipeline]) -> Pipeline:
    comps = list(stage.components)
    inventories = collect_inventories(train_docs)
    carried = []
    if source is not None:
        carried = [c for c in source.components if c not in comps]
        for c in carried:
            for key in {"tagger": ["upos"], "morph": ["feats"], "parser": ["deprel"],
                        "ner": ["ents"]}.get(c, []):
                inventories[key] = source.inventories[key]
    all_comps = [c for c in COMPONENTS if c in comps or c in carried]
    if "morph" in all_comps and "tagger" not in all_comps:
        raise ConfigError("the morph head requires the tagger component")
    for comp, key in (("tagger", "upos"), ("parser", "deprel"), ("ner", "ents")):
        if comp in comps and not inventories.get(key):
            raise ConfigError(f"stage {stage.name!r}: no supervision for {comp!r}")
    if "morph" in comps and not inventories.get("feats"):
        raise ConfigError(f"stage {stage.name!r}: no supervision for 'morph'")
    trees = lemma_dict = None
    if "lemmatizer" in comps:
        policy = CasingPolicy(enabled=config.truecase)
        trees, _ = collect_tree_labels(train_docs, policy)
        if not len(trees):
            raise ConfigError(f"stage {stage.name!r}: no supervision for 'lemmatizer'")
        lemma_dict = LemmaDict.learn(train_docs, policy, config.dict_min_freq,
                                     config.dict_min_share, config.dict_key)
    elif "lemmatizer" in carried:
        trees, lemma_dict = source.lemmatizer.table, source.lemmatizer.lemma_dict
    stage_config = dataclasses.replace(config, components=all_comps)
    if source is None:
        return Pipeline(stage_config, inventories, ParamStore(seed=config.seed),
                        trees=trees, lemma_dict=lemma_dict)
    nlp = transfer_encoder(source, stage_config, inventories, trees, lemma_dict,
                           freeze="encoder" in stage.freeze)
    for name in source.store.names():
        if name.startswith(tuple(f"{c}." for c in carried)):
            nlp.store[name] = source.store[name]
            nlp.store.frozen.add(name)
    return nlp


def train_stage(stage: Stage, config: PipelineConfig, source: Optional[Pipeline] = None,
                train_docs: Optional[Sequence[Doc]] = None,
                dev_docs: Optional[Sequence[Doc]] = None) -> Tuple[Pipeline, List[dict]]:
    """Train one stage; returns the best pipeline and per-epoch history."""
    k = config.sents_per_doc
    if train_docs is None:
        train_docs, docs = _load(stage.train, k)
    else:
        train_docs = list(train_docs)
        docs = group_docs(train_docs, k)
    if dev_docs is None:
        _, dev = _load(stage.dev, k)
    else:
        dev = group_docs(list(dev_docs), k)
    if not train_docs:
        raise ConfigError(f"stage {stage.name!r}: empty training corpus")
    nlp = _build_stage_pipeline(stage, config, train_docs, source)
    rng = np.random.default_rng(config.seed)
    lemma_gold = ({id(d): nlp.lemmatizer.gold_labels(d) for d in docs}
                  if nlp.lemmatizer is not None and "lemmatizer" in stage.components else None)
    history = []
    best_score, best_params = -np.inf, None
    for epoch in range(config.epochs):
        totals: Dict[str, float] = {}
        for batch in minibatches(docs, config.batch_size, rng):
            losses = nlp.update(batch, stage.components, lemma_gold)
            for k, v in losses.items():
                totals[k] = totals.get(k, 0.0) + v
            adam_step(nlp.store, config.lr, config.beta1, config.beta2, config.eps,
                      config.grad_clip)
        record = {"stage": stage.name, "epoch": epoch, "losses": totals}
        if dev:
            report = evaluate(nlp, dev)
            score = stage_score(report, stage)
            record.update(score=score, dev=report.as_dict())
            if score > best_score:
                best_score = score
                best_params = {n: nlp.store[n].copy() for n in nlp.store.names()}
        log.info("stage %s epoch %d losses %s score %s", stage.name, epoch,
                 {k: round(v, 4) for k, v in totals.items()}, record.get("score"))
        history.append(record)
    if best_params is not None:
        for n, v in best_params.items():
            nlp.store[n] = v
    nlp.store.frozen.clear()
    return nlp, history


def train_multitask(plan: TrainPlan, config: Optional[PipelineConfig] = None,
                    out_dir: Optional[Union[str, Path]] = None) -> Tuple[Pipeline, List[dict]]:
    """Run every stage of ``plan``; writes the final model to ``out_dir``."""
    config = config if config is not None else plan.config()
    finished: Dict[str, Pipeline] = {}
    history: List[dict] = []
    nlp = None
    for stage in plan.stages:
        source = finished[stage.reuse] if stage.reuse else None
        nlp, hist = train_stage(stage, config, source)
        history.extend(hist)
        finished[stage.name] = nlp
    if out_dir is not None:
        nlp.to_disk(out_dir)
    return nlp, history
