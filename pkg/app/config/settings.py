from typing import Tuple

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment-based configuration for Scene Arrange"""

    model_config = SettingsConfigDict(env_file=".env", env_prefix="ARRANGE_", case_sensitive=False)

    # Environment detection
    environment: str = "production"

    # Camera
    focal_length: float = 1.0
    near_plane: float = 1e-3

    # Rendering
    resolution: int = 256  # working resolution, longer image side
    score_resolution: int = 64  # restart scoring resolution
    sharpness: float = 70.0  # soft rasterizer, NDC units
    edge_filter_size: int = 7

    # Pose fitting
    restarts: int = 10000
    restarts_refined: int = 20
    iters_fit: int = 100
    elevation_range: Tuple[float, float] = (-30.0, 30.0)

    # Joint arrangement
    iters_joint: int = 400
    lr: float = 1e-3
    human_scale_weight: float = 10.0
    collision_tolerance: float = 1e-6
    collision_samples: int = 6  # per triangle edge; 0 keeps vertex-only depths

    # Scale learning
    histogram_bins: int = 20

    # Execution
    jobs: int = 1
    seed: int = 0

    # Logging
    log_level: str = "INFO"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)

        # Development runs log everything
        if self.environment == "development":
            self.log_level = "DEBUG"


# Global settings instance
settings = Settings()
