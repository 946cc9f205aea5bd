import time
from pathlib import Path
from typing import Any, Callable, Dict, List, TypeVar

import numpy as np

from ..core.config import RunConfig
from ..core.io import read_frame, read_json, write_csv, write_json
from ..core.logging import StructuredLogger
from ..models import mc_oracle
from ..models.heston_engine import heston_call
from ..models.vstoxx_pricer import expected_variance, vstoxx_future
from ..schemas.heston import HestonParams
from .analysis import run_analysis
from .calibrator import calibration_frame, records_from_frame, run_timeseries
from .features import build_feature_table, feature_frame, load_daily_data
from .synthetic import SyntheticConfig, generate_synthetic, write_bundle

T = TypeVar("T")

ONE_POINT = 1.0


class PipelineService:
    """Runs the pipeline stages for one RunConfig and keeps per-command metrics."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.config_hash = config.config_hash()
        self.logger = StructuredLogger("pipeline_service")
        self.metrics: Dict[str, Any] = {
            "total_commands": 0,
            "successful_commands": 0,
            "failed_commands": 0,
            "total_latency": 0.0,
            "commands": {},
        }

    def _run(self, name: str, step: Callable[[], T]) -> T:
        start_time = time.perf_counter()
        self.metrics["total_commands"] += 1
        self.metrics["commands"][name] = self.metrics["commands"].get(name, 0) + 1
        self.logger.info("Command started", command=name, config_hash=self.config_hash, seed=self.config.seed)
        try:
            result = step()
        except Exception as e:
            latency_ms = (time.perf_counter() - start_time) * 1000
            self.metrics["failed_commands"] += 1
            self.metrics["total_latency"] += latency_ms
            self.logger.error(
                "Command failed",
                command=name,
                error_type=type(e).__name__,
                error=str(e),
                latency_ms=round(latency_ms, 2),
            )
            raise
        latency_ms = (time.perf_counter() - start_time) * 1000
        self.metrics["successful_commands"] += 1
        self.metrics["total_latency"] += latency_ms
        self.logger.info("Command completed", command=name, latency_ms=round(latency_ms, 2))
        return result

    def _write_csv(self, frame, name: str) -> Path:
        return write_csv(frame, self.config.out_dir / name, self.config_hash, self.config.seed)

    def _write_json(self, payload: Dict[str, Any], name: str) -> Path:
        return write_json(payload, self.config.out_dir / name, self.config_hash, self.config.seed)

    def generate(self) -> List[Path]:
        def step() -> List[Path]:
            synthetic = SyntheticConfig(
                n_days=self.config.days,
                seed=self.config.seed,
                effect_strength=self.config.effect_strength,
                noise_scale=self.config.noise_scale,
            )
            bundle = generate_synthetic(synthetic)
            return write_bundle(bundle, self.config.out_dir, self.config_hash, self.config.seed)

        return self._run("gen", step)

    def calibrate(self) -> Path:
        def step() -> Path:
            data = load_daily_data(self.config.data_dir)
            records = run_timeseries(
                data.days,
                seed=self.config.seed,
                w_sigma=self.config.w_sigma,
                w_idx=self.config.w_idx,
                popsize=self.config.de_popsize,
                maxiter=self.config.de_maxiter,
                tol=self.config.de_tol,
                threads=self.config.worker_count(),
                n_nodes=self.config.quad_nodes,
                grid_points=self.config.future_grid_points,
            )
            return self._write_csv(calibration_frame(records), self.config.calibration_file)

        return self._run("calibrate", step)

    def analyze(self) -> List[Path]:
        def step() -> List[Path]:
            data = load_daily_data(self.config.data_dir)
            records = records_from_frame(read_frame(self.config.calibration_path))
            rows, errors = build_feature_table(data.days, records, data.flows)
            table = feature_frame(rows)
            result = run_analysis(
                table,
                seed=self.config.seed,
                test_fraction=self.config.test_fraction,
                folds=self.config.folds,
                n_alphas=self.config.n_alphas,
                alpha_eps=self.config.alpha_eps,
                n_trees=self.config.n_trees,
                n_repeats=self.config.n_repeats,
                threads=self.config.worker_count(),
            )
            table = table.assign(date=[d.isoformat() for d in table["date"]])
            metrics = {**result.metrics(), "rows": len(table), "skipped_rows": errors}
            return [
                self._write_csv(table, "features.csv"),
                self._write_csv(result.correlation.reset_index(names="column"), "correlation.csv"),
                self._write_csv(result.path_frame(), "lasso_path.csv"),
                self._write_csv(result.cv_frame(), "cv_scores.csv"),
                self._write_csv(result.importance_frame(), "importance.csv"),
                self._write_csv(result.predictions, "predictions.csv"),
                self._write_json(metrics, "metrics.json"),
            ]

        return self._run("analyze", step)

    def oracle(self) -> Dict[str, Any]:
        def step() -> Dict[str, Any]:
            cfg = self.config
            params = HestonParams(kappa=cfg.kappa, theta=cfg.theta, xi=cfg.xi, rho=cfg.rho, v0=cfg.v0)
            common = dict(n_paths=cfg.mc_paths, n_steps=cfg.mc_steps, seed=cfg.seed,
                          antithetic=cfg.antithetic, threads=cfg.worker_count())
            if cfg.oracle_target == "future":
                estimate = mc_oracle.mc_vstoxx_future(params, cfg.tau, **common)
                reference = vstoxx_future(params, cfg.tau, cfg.future_grid_points)
            elif cfg.oracle_target == "call":
                estimate = mc_oracle.mc_call(params, cfg.forward, cfg.strike, cfg.tau, **common)
                reference = heston_call(params, cfg.forward, cfg.strike, cfg.tau, cfg.quad_nodes)
            else:
                estimate = mc_oracle.mc_expected_variance(params, cfg.tau, **common)
                reference = expected_variance(params, cfg.tau)
            payload = {
                **estimate.model_dump(),
                "target": cfg.oracle_target,
                "tau": cfg.tau,
                "params": params.model_dump(),
                "semi_analytic": reference,
                "z_score": (estimate.value - reference) / estimate.std_error if estimate.std_error > 0 else None,
            }
            self._write_json(payload, "oracle.json")
            return payload

        return self._run("oracle", step)

    def report(self) -> Path:
        def step() -> Path:
            calibration = read_frame(self.config.calibration_path)
            analysis = read_json(self.config.out_dir / "metrics.json")
            diffs = calibration["diff_price"].dropna().to_numpy(dtype=float)
            deviation = {
                "days": int(len(calibration)),
                "calibrated_days": int(diffs.size),
                "mean_diff": float(diffs.mean()) if diffs.size else None,
                "mean_abs_diff": float(np.abs(diffs).mean()) if diffs.size else None,
                "max_abs_diff": float(np.abs(diffs).max()) if diffs.size else None,
                "fraction_within_one_point": float((np.abs(diffs) <= ONE_POINT).mean()) if diffs.size else None,
            }
            payload = {
                "deviation": deviation,
                "shrinkage_at_best_alpha": analysis.get("shrinkage_at_best_alpha"),
                "explained_variance": analysis.get("explained_variance"),
                "importance_ranking": analysis.get("importance_ranking"),
            }
            return self._write_json(payload, "report.json")

        return self._run("report", step)
