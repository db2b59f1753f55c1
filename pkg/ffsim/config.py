from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Logging
    log_level: str = "INFO"

    # Simulation safety
    step_cap: int = 1_000_000  # Attempted steps after which a RunToMastery session aborts

    # Parallelism
    default_jobs: int = 1  # Worker processes when neither config nor CLI sets `jobs`

    # AFM fitting defaults
    fit_l2: float = 1e-3  # L2 penalty on theta and beta
    fit_tol: float = 1e-5  # Projected-gradient max-norm at which the fit stops
    fit_max_iterations: int = 5000

    # Slow-operation threshold for timing logs
    slow_operation_seconds: float = 30.0

    model_config = SettingsConfigDict(env_file=".env", env_prefix="FFSIM_", extra="ignore")


settings = Settings()
