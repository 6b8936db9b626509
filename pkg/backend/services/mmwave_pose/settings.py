"""
Environment Settings
Centralized environment-driven defaults for the mmWave pose pipeline
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

# Load environment variables from the service-level .env (if present)
env_path = Path(__file__).parent / '.env'
load_dotenv(env_path)
load_dotenv()


class ConfigError(Exception):
    """Raised when a configuration value or file is invalid"""
    pass


@dataclass
class EnvironmentSettings:
    """Runtime settings that come from the environment rather than config files"""
    output_dir: Path
    workers: int
    log_level: str
    run_slow_tests: bool

    @property
    def uses_worker_pool(self) -> bool:
        return self.workers > 1


def _int_from_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == '':
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"Environment variable {name} must be an integer, got {raw!r}")


def load_settings(output_dir: Optional[str] = None) -> EnvironmentSettings:
    """Read settings from the environment, allowing an explicit output dir override"""
    workers = _int_from_env('MMWAVE_POSE_WORKERS', 1)
    if workers < 1:
        raise ConfigError(f"MMWAVE_POSE_WORKERS must be >= 1, got {workers}")

    return EnvironmentSettings(
        output_dir=Path(output_dir or os.getenv('MMWAVE_POSE_OUTPUT_DIR', 'runs')),
        workers=workers,
        log_level=os.getenv('MMWAVE_POSE_LOG_LEVEL', 'INFO').upper(),
        run_slow_tests=os.getenv('MMWAVE_POSE_RUN_SLOW', '0') == '1',
    )
