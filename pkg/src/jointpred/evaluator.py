"""The testbed loop: sample problems, train agents, estimate KL-loss.

For each of J sampled environments a training set is drawn and the agent is
trained once.  Then N test blocks of tau inputs are drawn; for each block the
exact log-likelihood under the environment and the estimated log-likelihood
under the agent are compared.  The KL estimate is the mean log ratio.

All randomness is derived from a single seed through named streams, so any
cell can be rerun in isolation and results never depend on scheduling.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import likelihood
from .agents import AgentSpec, EnvMeta, agent_id, make_trainer, sample_probs
from .agents.base import int_seed, rng_for
from .generative import Dataset, GenerativeConfig, MlpPrior, env_log_likelihood, sample_data

log = logging.getLogger(__name__)

# stream ids
ENV, TRAIN_DATA, AGENT, TEST, SAMPLER, HYPERPLANE = range(6)


class CellError(RuntimeError):
    pass


@dataclass(frozen=True)
class TestbedSweepConfig:
    temperatures: tuple[float, ...] = (0.01, 0.1, 0.5)
    train_sizes: tuple[int, ...] = (1, 3, 10, 30, 100, 300, 1000)
    taus: tuple[int, ...] = (1, 100)
    num_problems: int = 10
    num_test_samples: int = 1000
    num_models: int = 1000
    num_hyperplanes: int = 7
    seed: int = 0
    input_dim: int = 2
    num_classes: int = 2
    switch_tau: int = 10

    def __post_init__(self):
        for name in ("num_problems", "num_test_samples", "num_models", "input_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.num_hyperplanes < 0:
            raise ValueError("num_hyperplanes must be nonnegative")
        if not self.temperatures or not self.train_sizes or not self.taus:
            raise ValueError("temperatures, train_sizes and taus must be nonempty")
        if min(self.taus) < 1 or min(self.train_sizes) < 1 or min(self.temperatures) <= 0:
            raise ValueError("taus and train_sizes must be >= 1, temperatures > 0")

    __test__ = False


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated cell, or an aggregate over cells when ``beta`` and
    ``train_size`` are None."""

    agent: str
    beta: float | None
    train_size: int | None
    tau: int
    kl_or_nll: float
    stderr: float
    count: int
    seconds: float = field(default=0.0, compare=False)
    seed: int = 0
    failed: bool = False
    dataset: str = ""

    @property
    def is_aggregate(self) -> bool:
        return self.beta is None and self.train_size is None


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    n = values.shape[0]
    mean = float(np.mean(values))
    if n < 2 or not np.all(np.isfinite(values)):
        return mean, 0.0 if n < 2 else float("nan")
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


def _agent_log_likelihood(sampler, block: Dataset, num_models, method, num_hyperplanes,
                          switch_tau, sampler_rng, plane_rng) -> float:
    if method == "exact":
        mix = sampler.mixture(block.inputs)
        if mix is None:
            raise ValueError("exact evaluation needs an agent with an explicit mixture belief")
        weights, probs = mix
        terms = likelihood.mc_log_terms(probs, block.labels)
        with np.errstate(divide="ignore"):
            v = terms + np.log(weights)
        top = np.max(v)
        return float(top + np.log(np.sum(np.exp(v - top)))) if np.isfinite(top) else float(top)
    probs = sample_probs(sampler, block.inputs, num_models, sampler_rng)
    return likelihood.estimate_log_likelihood(
        probs, block.labels, method, num_hyperplanes, plane_rng, switch_tau
    )


def run_problems(
    agent,
    beta: float,
    train_size: int,
    taus: Sequence[int],
    num_problems: int,
    num_test_samples: int,
    num_models: int,
    num_hyperplanes: int,
    seed: int,
    *,
    prior=None,
    estimator: str = "auto",
    switch_tau: int = 10,
) -> list[EvalRecord]:
    """Evaluate one agent on one (beta, T) setting for several tau at once.

    The agent is trained once per sampled problem and reused for every tau.
    """
    if prior is None:
        prior = MlpPrior(GenerativeConfig(temperature=beta))
    trainer = make_trainer(agent)
    name = agent_id(agent)
    agent_seed = int(getattr(agent, "seed", 0))
    ratios = {tau: np.empty(num_problems * num_test_samples) for tau in taus}
    elapsed = {tau: 0.0 for tau in taus}
    train_time = 0.0
    for j in range(num_problems):
        env = prior.sample(rng_for(seed, ENV, j))
        data = sample_data(env, train_size, rng_for(seed, TRAIN_DATA, j))
        meta = EnvMeta(prior.input_dim, prior.num_classes, float(beta), train_size, environment=env)
        t0 = time.perf_counter()
        try:
            sampler = trainer(data, meta, int_seed(seed, AGENT, j, agent_seed))
        except Exception as exc:
            raise CellError(f"{name}: training failed on problem j={j} (seed={seed}): {exc}") from exc
        train_time += time.perf_counter() - t0
        for tau in taus:
            t0 = time.perf_counter()
            for n in range(num_test_samples):
                block = sample_data(env, tau, rng_for(seed, TEST, j, n, tau))
                p_env = env_log_likelihood(env, block)
                p_agent = _agent_log_likelihood(
                    sampler, block, num_models, estimator, num_hyperplanes, switch_tau,
                    rng_for(seed, SAMPLER, j, n, tau), rng_for(seed, HYPERPLANE, j, n, tau),
                )
                ratios[tau][j * num_test_samples + n] = p_env - p_agent
            elapsed[tau] += time.perf_counter() - t0
    records = []
    for tau in taus:
        mean, se = _mean_stderr(ratios[tau])
        records.append(EvalRecord(
            agent=name, beta=float(beta), train_size=int(train_size), tau=int(tau),
            kl_or_nll=mean, stderr=se, count=num_problems * num_test_samples,
            seconds=elapsed[tau] + train_time / len(taus), seed=int(seed),
        ))
    return records


def run_cell(agent, beta, train_size, tau, num_problems, num_test_samples, num_models,
             num_hyperplanes, seed, **kwargs) -> EvalRecord:
    """KL-loss estimate for one (agent, beta, T, tau) cell.

    Monte Carlo is used for tau below ``switch_tau`` and random partitioning
    otherwise, unless ``estimator`` is set to ``"mc"``, ``"partition"`` or
    ``"exact"`` (the last needs a sampler with an explicit mixture).
    """
    (rec,) = run_problems(agent, beta, train_size, (tau,), num_problems, num_test_samples,
                          num_models, num_hyperplanes, seed, **kwargs)
    return rec


def cell_seed(master: int, beta: float, train_size: int) -> int:
    """Seed shared by every agent and tau evaluated at (beta, T)."""
    return int_seed(master, int(round(beta * 1e9)), int(train_size))


def _run_group(args):
    agent, beta, train_size, sweep = args
    seed = cell_seed(sweep.seed, beta, train_size)
    prior = MlpPrior(GenerativeConfig(sweep.input_dim, sweep.num_classes, beta))
    try:
        return run_problems(
            agent, beta, train_size, sweep.taus, sweep.num_problems, sweep.num_test_samples,
            sweep.num_models, sweep.num_hyperplanes, seed, prior=prior, switch_tau=sweep.switch_tau,
        )
    except Exception as exc:
        log.error("cell failed: %s", exc)
        return [
            EvalRecord(agent_id(agent), float(beta), int(train_size), int(tau), float("nan"),
                       float("nan"), 0, 0.0, seed, failed=True)
            for tau in sweep.taus
        ]


def aggregate(records: Sequence[EvalRecord]) -> list[EvalRecord]:
    """Mean over cells per (agent, tau, dataset); failed cells are excluded."""
    groups: dict[tuple, list[EvalRecord]] = {}
    for r in records:
        if not r.is_aggregate and not r.failed:
            groups.setdefault((r.agent, r.tau, r.dataset), []).append(r)
    out = []
    for (name, tau, ds), rs in sorted(groups.items()):
        vals = np.array([r.kl_or_nll for r in rs])
        ses = np.array([r.stderr for r in rs])
        out.append(EvalRecord(
            agent=name, beta=None, train_size=None, tau=tau,
            kl_or_nll=float(np.mean(vals)),
            stderr=float(math.sqrt(np.sum(ses**2)) / len(rs)),
            count=sum(r.count for r in rs),
            seconds=sum(r.seconds for r in rs),
            seed=rs[0].seed if len({r.seed for r in rs}) == 1 else 0,
            dataset=ds,
        ))
    return out


def sort_key(r: EvalRecord):
    return (
        r.agent, r.dataset, r.is_aggregate,
        -1.0 if r.beta is None else r.beta,
        -1 if r.train_size is None else r.train_size,
        r.tau,
    )


def run_sweep(sweep: TestbedSweepConfig, agents: Sequence, workers: int = 1,
              progress=None) -> list[EvalRecord]:
    """Every (agent, beta, T, tau) cell plus per-(agent, tau) aggregate rows.

    Output order depends only on record keys, never on scheduling.
    """
    if not agents:
        raise ValueError("need at least one agent")
    tasks = [(a, b, t, sweep) for a in agents for b in sweep.temperatures for t in sweep.train_sizes]
    cells: list[EvalRecord] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(_run_group, tasks):
                cells.extend(recs)
                if progress:
                    for r in recs:
                        progress(r)
    else:
        for task in tasks:
            recs = _run_group(task)
            cells.extend(recs)
            if progress:
                for r in recs:
                    progress(r)
    return sorted(cells + aggregate(cells), key=sort_key)


# -- real data ---------------------------------------------------------------

def evaluate_nll_real(
    agent,
    train: Dataset,
    test: Dataset,
    tau: int,
    num_test_samples: int,
    num_models: int,
    num_hyperplanes: int = 10,
    seed: int = 0,
    *,
    num_classes: int | None = None,
    coverage: bool = False,
    estimator: str = "auto",
    switch_tau: int = 10,
    temperature: float = 1.0,
    dataset_name: str = "",
) -> EvalRecord:
    """Mean negative log-likelihood of test blocks under the trained agent.

    Blocks are drawn without replacement inside a block and independently
    across blocks.  With ``coverage=True`` the test set is instead split into
    consecutive blocks of a random permutation, so every point is used once
    (``num_test_samples`` is then ignored).
    """
    if len(test) < tau:
        raise ValueError(f"test set has {len(test)} rows, fewer than tau={tau}")
    k = num_classes or int(max(train.labels.max(), test.labels.max())) + 1
    meta = EnvMeta(train.input_dim, k, temperature, len(train))
    t0 = time.perf_counter()
    sampler = make_trainer(agent)(train, meta, int_seed(seed, AGENT, 0, int(getattr(agent, "seed", 0))))
    block_rng = rng_for(seed, TEST)
    if coverage:
        perm = block_rng.permutation(len(test))
        blocks = [perm[i:i + tau] for i in range(0, len(test) - tau + 1, tau)]
    else:
        blocks = [block_rng.choice(len(test), size=tau, replace=False) for _ in range(num_test_samples)]
    nll = np.empty(len(blocks))
    for n, idx in enumerate(blocks):
        block = test.subset(idx)
        nll[n] = -_agent_log_likelihood(
            sampler, block, num_models, estimator, num_hyperplanes, switch_tau,
            rng_for(seed, SAMPLER, n, tau), rng_for(seed, HYPERPLANE, n, tau),
        )
    mean, se = _mean_stderr(nll)
    return EvalRecord(
        agent=agent_id(agent), beta=None,
        train_size=len(train), tau=int(tau), kl_or_nll=mean, stderr=se, count=len(blocks),
        seconds=time.perf_counter() - t0, seed=int(seed), dataset=dataset_name,
    )
