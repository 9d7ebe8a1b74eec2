from pydantic_settings import BaseSettings
import jax

class Settings(BaseSettings):
    # App settings
    APP_NAME: str = "Finsler Workbench"
    LOG_LEVEL: str = "INFO"

    # Batch runs
    REPORT_DIR: str = "./reports"
    DEFAULT_SEED: int = 0
    DEFAULT_JOBS: int = 1
    CSV_FLOAT_FORMAT: str = "%.17g"
    EVALUATOR_CACHE_SIZE: int = 256

    # finsler-core
    HOMOGENEITY_TOL: float = 1e-10
    EULER_TOL: float = 1e-10
    DIFFEO_ROUNDTRIP_TOL: float = 1e-8
    DIFFEO_JACOBIAN_TOL: float = 1e-5
    FD_STEP: float = 1e-5
    FD_DERIVATIVE_TOL: float = 1e-6
    AUDIT_RADIUS: float = 1.0
    AUDIT_RESOLUTION: int = 7

    # Legendre inverse
    LEGENDRE_TOL: float = 1e-10
    LEGENDRE_MAX_ITER: int = 50
    LEGENDRE_SWEEP_DIRECTIONS: int = 64
    ARMIJO_C: float = 1e-4
    ARMIJO_FACTOR: float = 0.5
    CONDITION_LIMIT: float = 1e12

    # Dirichlet solver
    SOLVER_TOL: float = 1e-8
    SOLVER_MAX_ITER: int = 400
    NEWTON_MAX_ITER: int = 50
    DET_THRESHOLD: float = 0.1
    GAUSS_ORDER: int = 3

    # Berwald tools
    BERWALD_TOL: float = 1e-7
    SZABO_TOL: float = 1e-5
    RICCI_TOL: float = 1e-6
    INDICATRIX_NODES: int = 128
    INDICATRIX_MEASURE: str = "cone"  # cone | surface

    class Config:
        env_file = ".env"
        case_sensitive = True

# Create settings instance
settings = Settings()

# All tolerances assume double precision
jax.config.update("jax_enable_x64", True)
