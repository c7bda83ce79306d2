"""Throughput and peak-memory benchmarking, plus best-of-N training runs."""

from __future__ import annotations

import dataclasses
import json
import resource
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

from .corpus import read_corpus
from .doc import Doc
from .eval import EvalReport
from .pipeline import Pipeline, PipelineConfig, blank_copy


def peak_rss_bytes() -> int:
    """High-water resident set size of this process image.

    Prefers ``VmHWM`` because Linux carries ``ru_maxrss`` over from the parent
    across fork and exec.
    """
    try:
        with open("/proc/self/status", encoding="ascii") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # kilobytes on Linux, bytes on macOS
    return int(rss if sys.platform == "darwin" else rss * 1024)


@dataclass
class BenchReport:
    tokens_per_sec: float
    min_tokens_per_sec: float
    max_tokens_per_sec: float
    stdev_tokens_per_sec: float
    repetitions: int
    tokens: int
    docs: int
    peak_memory_bytes: int
    load_seconds: float
    parse_seconds: float
    scale: str
    width: int
    threads: int
    seed: int
    runs: List[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def table(self) -> str:
        return "\n".join([
            f"scale      {self.scale} (d={self.width}, threads={self.threads}, seed={self.seed})",
            f"tokens/s   {self.tokens_per_sec:.1f} (min {self.min_tokens_per_sec:.1f}, "
            f"max {self.max_tokens_per_sec:.1f}, stdev {self.stdev_tokens_per_sec:.1f}, "
            f"reps {self.repetitions})",
            f"corpus     {self.tokens} tokens in {self.docs} docs",
            f"peak mem   {self.peak_memory_bytes / 2 ** 20:.1f} MiB",
            f"load       {self.load_seconds:.3f} s, parse {self.parse_seconds:.3f} s",
        ])


def benchmark_throughput(model: Union[str, Path, Pipeline], corpus: Union[str, Path, Sequence[Doc]],
                         repetitions: int = 3, threads: int = 1) -> BenchReport:
    """Time full annotation of ``corpus``; one untimed warm-up pass precedes the runs."""
    if repetitions < 3:
        raise ValueError("at least 3 repetitions are required")
    t0 = time.perf_counter()
    nlp = model if isinstance(model, Pipeline) else Pipeline.from_disk(model)
    load_seconds = time.perf_counter() - t0
    t0 = time.perf_counter()
    docs = list(corpus) if not isinstance(corpus, (str, Path)) else read_corpus(corpus)
    parse_seconds = time.perf_counter() - t0
    if not docs:
        raise ValueError("benchmark corpus is empty")
    n_tokens = sum(len(d) for d in docs)
    keep = nlp.senter is None
    nlp([blank_copy(d, keep) for d in docs], threads=threads)
    runs = []
    for _ in range(repetitions):
        batch = [blank_copy(d, keep) for d in docs]
        start = time.perf_counter()
        nlp(batch, threads=threads)
        runs.append(n_tokens / max(time.perf_counter() - start, 1e-9))
    return BenchReport(
        tokens_per_sec=statistics.fmean(runs),
        min_tokens_per_sec=min(runs),
        max_tokens_per_sec=max(runs),
        stdev_tokens_per_sec=statistics.stdev(runs),
        repetitions=repetitions,
        tokens=n_tokens,
        docs=len(docs),
        peak_memory_bytes=peak_rss_bytes(),
        load_seconds=load_seconds,
        parse_seconds=parse_seconds,
        scale=nlp.config.scale,
        width=nlp.config.width,
        threads=threads,
        seed=nlp.config.seed,
        runs=runs,
    )


@dataclass
class MultiRunReport:
    seeds: List[int]
    runs: List[EvalReport]
    best: EvalReport

    def to_json_lines(self) -> str:
        lines = [json.dumps({"run": i, "seed": s, **r.as_dict()}, sort_keys=True)
                 for i, (s, r) in enumerate(zip(self.seeds, self.runs))]
        lines.append(json.dumps({"run": "max", "seeds": self.seeds, **self.best.as_dict()},
                                sort_keys=True))
        return "\n".join(lines)


def multi_run_max(plan, config: Optional[PipelineConfig] = None, runs: int = 3,
                  eval_docs: Optional[Sequence[Doc]] = None) -> MultiRunReport:
    """Train ``runs`` times with seeds ``base + i`` and keep the per-metric maximum.

    Evaluation uses ``eval_docs``, else the plan's test corpus, else the last
    stage's dev corpus.
    """
    from .train import evaluate, group_docs, train_multitask

    if runs < 1:
        raise ValueError("runs must be >= 1")
    config = config if config is not None else plan.config()
    if eval_docs is None:
        paths = plan.test or plan.stages[-1].dev
        if not paths:
            raise ValueError("no evaluation corpus: pass eval_docs or set a test/dev corpus")
        eval_docs = [d for p in paths for d in read_corpus(p)]
    gold = group_docs(list(eval_docs), config.sents_per_doc)
    seeds, reports = [], []
    for i in range(runs):
        seed = config.seed + i
        nlp, _ = train_multitask(plan, dataclasses.replace(config, seed=seed))
        seeds.append(seed)
        reports.append(evaluate(nlp, gold))
    return MultiRunReport(seeds, reports, EvalReport.maximum(reports))
