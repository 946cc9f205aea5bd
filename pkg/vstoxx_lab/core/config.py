import hashlib
import json
from pathlib import Path
from typing import Literal, Union

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="VSTOXX_LAB_", protected_namespaces=("settings_",))

    app_name: str = "VSTOXX Lab"
    app_version: str = "1.0.0"
    log_level: str = "INFO"

    # Upper bound for worker pools when a run does not set its own
    max_threads: int = 8


settings = Settings()

# neither the worker count nor file locations change results
HASH_EXCLUDED = {"threads", "data_dir", "out_dir"}


class RunConfig(BaseSettings):
    """Configuration of one seeded, file-driven pipeline run.

    Stored as flat ``RUN_<FIELD>=value`` lines. Values passed to the
    constructor (CLI flags) take precedence over the file.
    """

    model_config = SettingsConfigDict(
        env_prefix="RUN_",
        extra="forbid",
        protected_namespaces=(),
    )

    # Paths
    data_dir: Path = Path("data")
    out_dir: Path = Path("out")
    calibration_file: str = "calibration.csv"

    # Reproducibility and parallelism
    seed: int = 7
    threads: int = Field(1, ge=1)

    # Synthetic market
    days: int = Field(500, ge=50)
    effect_strength: float = Field(1.0, ge=0.0)
    noise_scale: float = Field(0.05, ge=0.0)

    # Calibration
    w_sigma: float = Field(10000.0, gt=0.0)
    w_idx: float = Field(2.0, ge=0.0)
    quad_nodes: int = Field(256, ge=16)
    future_grid_points: int = Field(10_000, ge=100)
    de_popsize: int = Field(15, ge=2)
    de_maxiter: int = Field(200, ge=1)
    de_tol: float = Field(1e-8, ge=0.0)

    # Monte Carlo oracle
    oracle_target: Literal["future", "call", "variance"] = "future"
    mc_paths: int = Field(1_000_000, ge=1)
    mc_steps: int = Field(500, ge=1)
    antithetic: bool = False
    kappa: float = 2.0
    theta: float = 0.04
    xi: float = 0.5
    rho: float = -0.7
    v0: float = 0.09
    tau: float = Field(21 / 365, ge=0.0)
    forward: float = Field(100.0, gt=0.0)
    strike: float = Field(100.0, gt=0.0)

    # Learners
    test_fraction: float = Field(0.30, gt=0.0, lt=1.0)
    folds: int = Field(5, ge=2)
    n_alphas: int = Field(100, ge=2)
    alpha_eps: float = Field(1e-4, gt=0.0, lt=1.0)
    n_trees: int = Field(250, ge=1)
    n_repeats: int = Field(30, ge=1)

    @classmethod
    def load(cls, path: Union[str, Path, None] = None, **overrides) -> "RunConfig":
        """Read a config file (if given) and apply flag overrides on top."""
        if path is None:
            return cls(_env_file=None, **overrides)
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        return cls(_env_file=str(path), **overrides)

    def dump(self, path: Union[str, Path]) -> None:
        lines = []
        for key, value in self.model_dump(mode="json").items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"RUN_{key.upper()}={value}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def config_hash(self) -> str:
        payload = self.model_dump(mode="json", exclude=HASH_EXCLUDED)
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    @property
    def calibration_path(self) -> Path:
        return self.out_dir / self.calibration_file

    def worker_count(self) -> int:
        return max(1, min(self.threads, settings.max_threads))
