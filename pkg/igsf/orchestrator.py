# igsf/orchestrator.py
"""
Runs configured filters over an experiment's Monte Carlo runs and writes the results.

- run_filter_on_problem(problem, filter_cfg, seed, run, jitter) -> FilterRun
- ExperimentOrchestrator(config).run_experiment() -> RunArtifacts
- ExperimentOrchestrator(config).main_run()      -> per-filter CSV + meta.json files
- ExperimentOrchestrator(config).compare()       -> the above plus summary.csv

Runs are independent: every random draw comes from a stream keyed by (seed, run, mixand,
purpose), so the worker count never changes a result.
"""

import pathlib
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np

# Import modules (not bare functions) so monkeypatching in tests works correctly
import igsf.experiments as _experiments
import igsf.filters.bank as _bank
import igsf.filters.baselines as _baselines
import igsf.filters.kalman as _kalman
import igsf.reporting as _reporting
from igsf import monitoring
from igsf.config import serialize_config
from igsf.errors import ConfigError, IgsfError
from igsf.experiments import metrics
from igsf.experiments.problem import Problem, RunArtifacts
from igsf.filters.adp import AdpSchedule
from igsf.monitoring import logger
from igsf.numerics import RngStream, derive_stream_id
from igsf.schemas import IGSF_KINDS, Config, FilterConfig, MetaDocument

METRICS_FILE = "metrics.prom"


def stream_family(kind: str) -> str:
    """igsf-bank, igsf-adp and igsf share streams so a one-mixand bank reproduces igsf-adp exactly."""
    return "igsf" if kind in IGSF_KINDS else kind


def make_stream_factory(seed: int, run: int, kind: str):
    family = stream_family(kind)

    def stream_for(eta: int, purpose: str) -> RngStream:
        return RngStream.for_purpose(seed, run, eta, f"{family}:{purpose}")

    return stream_for


def propagate_stream_id(run: int, kind: str) -> int:
    return derive_stream_id(run, 0, f"{stream_family(kind)}:propagate")


def adp_schedule(f: FilterConfig) -> AdpSchedule:
    return AdpSchedule(alpha1=f.alpha1, kind=f.schedule, iterations=f.iterations)


def run_filter_on_problem(problem: Problem, f: FilterConfig, seed: int, run: int,
                          jitter: float) -> _bank.FilterRun:
    stream_for = make_stream_factory(seed, run, f.kind)
    common = (problem.model, problem.mm, problem.observations, problem.times)

    if f.kind in IGSF_KINDS:
        options = _bank.BankOptions(jitter=jitter, epsilon=f.epsilon, init_spread=f.init_spread,
                                    prediction_term=f.prediction_term)

        def init(sf):
            return _bank.initial_bank(problem.prior_mean, problem.prior_cov, f.n_particles, f.n_mixands,
                                      lambda eta: sf(eta, "init"), f.init_spread, jitter)

        return _bank.run_filter(*common, init, adp_schedule(f), stream_for, options, f.label)
    if f.kind == "enkf":
        return _baselines.run_enkf(*common, problem.prior_mean, problem.prior_cov, f.n_particles,
                                   stream_for, jitter, f.label)
    if f.kind in ("sir", "asir"):
        return _baselines.run_particle_filter(f.kind, *common, problem.prior_mean, problem.prior_cov,
                                              f.n_particles, stream_for, jitter, f.label)
    if f.kind == "gspf":
        return _baselines.run_gspf(*common, problem.prior_mean, problem.prior_cov, f.n_particles,
                                   f.n_mixands, stream_for, jitter, f.init_spread, f.label)
    if f.kind == "kalman":
        if problem.linear is None:
            raise ConfigError("the kalman filter needs a linear-Gaussian problem", "filters")
        lg = problem.linear
        res = _kalman.kalman_filter(lg.F, lg.Q, lg.H, lg.R, problem.prior_mean, problem.prior_cov,
                                    problem.observations, jitter)
        T = res.means.shape[0]
        return _bank.FilterRun(f.label, res.means, np.ones((T, 1)), res.means[:, None, :].copy())
    raise ConfigError(f"unknown filter kind '{f.kind}'", "filters")


class ExperimentOrchestrator:
    def __init__(self, config: Config):
        self.config = config

    @property
    def experiment_dir(self) -> pathlib.Path:
        return pathlib.Path(self.config.out_dir) / self.config.experiment

    def run_single(self, run: int) -> Tuple[Problem, Dict[str, np.ndarray]]:
        """Generate the truth for one run and apply every configured filter to it."""
        cfg = self.config
        start = time.time()
        try:
            problem = _experiments.make_problem(cfg.experiment, cfg.params, cfg.seed, run)
            estimates = {}
            for f in cfg.filters:
                try:
                    estimates[f.label] = run_filter_on_problem(problem, f, cfg.seed, run, cfg.jitter).estimates
                except IgsfError as e:
                    e.details.setdefault("filter", f.label)
                    e.details.setdefault("run", run)
                    raise
        except Exception:
            monitoring.observe_run(start, cfg.experiment, "error")
            raise
        monitoring.observe_run(start, cfg.experiment, "ok")
        monitoring.set_last_run_steps(problem.steps)
        logger.info("Run complete", extra={"experiment": cfg.experiment, "run": run,
                                           "steps": problem.steps, "seconds": round(time.time() - start, 3)})
        return problem, estimates

    def run_experiment(self) -> RunArtifacts:
        cfg = self.config
        runs = range(cfg.runs)
        if cfg.workers > 1 and cfg.runs > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(self.run_single, runs))
        else:
            results = [self.run_single(r) for r in runs]

        first = results[0][0]
        artifacts = RunArtifacts(
            experiment=cfg.experiment,
            times=np.asarray(first.times, dtype=float),
            component_names=list(first.component_names),
            rmse_components=list(first.rmse_components),
            truths=np.stack([p.truth for p, _ in results]),
            observations=np.stack([p.observations for p, _ in results]),
        )
        for f in cfg.filters:
            est = np.stack([e[f.label] for _, e in results])
            artifacts.estimates[f.label] = est
            artifacts.rmse[f.label] = metrics.rmse_series(est, artifacts.truths, artifacts.rmse_components)
        artifacts.meta["stream_ids"] = [(r, p.truth_stream_id) for r, (p, _) in enumerate(results)]
        return artifacts

    def _meta(self, artifacts: RunArtifacts, f: FilterConfig, elapsed: Optional[float]) -> Dict:
        cfg = self.config
        stream_ids = [{"run": r, "truth": str(truth_id), "propagate": str(propagate_stream_id(r, f.kind))}
                      for r, truth_id in artifacts.meta["stream_ids"]]
        doc = MetaDocument(
            experiment=cfg.experiment,
            filter=f,
            config=cfg.model_dump(mode="json"),
            seed=cfg.seed,
            runs=cfg.runs,
            run_stream_ids=stream_ids,
            schedule_values=adp_schedule(f).values() if f.kind in IGSF_KINDS else [],
            component_names=artifacts.component_names,
            rmse_components=list(artifacts.rmse_names()),
            steps=artifacts.steps,
            elapsed_seconds=elapsed,
        )
        return doc.model_dump(mode="json")

    def write_outputs(self, artifacts: RunArtifacts, elapsed: Optional[float] = None) -> List[pathlib.Path]:
        written = []
        for f in self.config.filters:
            directory = self.experiment_dir / f.label
            _reporting.write_filter_outputs(artifacts, f.label, directory, self._meta(artifacts, f, elapsed))
            written.append(directory)
        _reporting.atomic_write_text(self.experiment_dir / "config.json", serialize_config(self.config))
        monitoring.write_metrics_textfile(self.experiment_dir / METRICS_FILE)
        return written

    def main_run(self) -> RunArtifacts:
        start = time.time()
        logger.info("Experiment started", extra={"experiment": self.config.experiment, "runs": self.config.runs,
                                                 "filters": [f.label for f in self.config.filters]})
        artifacts = self.run_experiment()
        self.write_outputs(artifacts, round(time.time() - start, 6))
        logger.info("Experiment complete", extra={"experiment": self.config.experiment,
                                                  "out_dir": str(self.experiment_dir)})
        return artifacts

    def compare(self) -> pathlib.Path:
        if len(self.config.filters) < 2:
            raise ConfigError("compare needs at least two filters", "filters")
        artifacts = self.main_run()
        return _reporting.write_csv(_reporting.summary_frame(artifacts),
                                    self.experiment_dir / _reporting.SUMMARY_FILE)
