"""
Configuration management for the omniview toolkit.
"""

import os
from typing import Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field

DEFAULT_SEED = 20190617

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
AP_MODES = ("all_points", "voc07_11pt")


class LoggingConfig(BaseModel):
    """Logging settings."""

    log_level: str = Field(default="INFO", description="Logging level")


class PipelineConfig(BaseModel):
    """Settings shared by every data-producing subcommand."""

    seed: int = Field(default=DEFAULT_SEED, description="Root seed for all randomness")
    workers: int = Field(default=4, description="Concurrent per-image workers")


class EvaluationConfig(BaseModel):
    """Detector evaluation defaults."""

    iou_threshold: float = Field(default=0.5, description="Match threshold")
    mode: str = Field(default="all_points", description="AP interpolation mode")


class PostprocessConfig(BaseModel):
    """Non-maximum suppression defaults."""

    iou_threshold: float = Field(default=0.5, description="Suppression threshold")
    score_threshold: float = Field(default=0.01, description="Minimum kept score")


class FisheyeConfig(BaseModel):
    """Fisheye synthesis defaults."""

    samples_per_edge: int = Field(default=8, description="Box remapping edge samples")


class BenchConfig(BaseModel):
    """Latency benchmark defaults."""

    warmup: int = Field(default=10, description="Untimed warmup iterations")
    repeat: int = Field(default=50, description="Timed iterations")
    overhead_ms: float = Field(default=0.0, description="Fixed pre/post-processing cost")


class Config(BaseModel):
    """Main configuration container."""

    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    postprocess: PostprocessConfig = Field(default_factory=PostprocessConfig)
    fisheye: FisheyeConfig = Field(default_factory=FisheyeConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)


def load_config(config_path: Optional[str] = None) -> Config:
    """
    Load configuration from environment variables and optional YAML file.

    Args:
        config_path: Optional path to YAML configuration file

    Returns:
        Config: Loaded configuration object
    """
    # Load environment variables from .env file
    load_dotenv()

    config = Config(
        logging=LoggingConfig(
            log_level=os.getenv("OMNIVIEW_LOG_LEVEL", os.getenv("LOG_LEVEL", "INFO")),
        ),
        pipeline=PipelineConfig(
            seed=int(os.getenv("OMNIVIEW_SEED", str(DEFAULT_SEED))),
            workers=int(os.getenv("OMNIVIEW_WORKERS", "4")),
        ),
        evaluation=EvaluationConfig(
            iou_threshold=float(os.getenv("OMNIVIEW_EVAL_IOU", "0.5")),
            mode=os.getenv("OMNIVIEW_EVAL_MODE", "all_points"),
        ),
        bench=BenchConfig(
            warmup=int(os.getenv("OMNIVIEW_BENCH_WARMUP", "10")),
            repeat=int(os.getenv("OMNIVIEW_BENCH_REPEAT", "50")),
        ),
    )

    # Override with YAML file if provided
    if config_path and os.path.exists(config_path):
        with open(config_path, 'r') as f:
            yaml_config = yaml.safe_load(f) or {}

        for section_name, values in yaml_config.items():
            section = getattr(config, section_name, None)
            if section is None or not isinstance(values, dict):
                continue
            for key, value in values.items():
                if hasattr(section, key):
                    setattr(section, key, value)

    return config


def validate_config(config: Config) -> None:
    """
    Validate configuration settings.

    Args:
        config: Configuration to validate

    Raises:
        ValueError: If configuration is invalid
    """
    if config.logging.log_level.upper() not in LOG_LEVELS:
        raise ValueError(f"Unknown log level: {config.logging.log_level}")

    if config.pipeline.workers < 1:
        raise ValueError("pipeline.workers must be at least 1")

    if not 0.0 < config.evaluation.iou_threshold <= 1.0:
        raise ValueError("evaluation.iou_threshold must be in (0, 1]")

    if config.evaluation.mode not in AP_MODES:
        raise ValueError(f"evaluation.mode must be one of {', '.join(AP_MODES)}")

    if not 0.0 < config.postprocess.iou_threshold <= 1.0:
        raise ValueError("postprocess.iou_threshold must be in (0, 1]")

    if not 0.0 < config.postprocess.score_threshold <= 1.0:
        raise ValueError("postprocess.score_threshold must be in (0, 1]")

    if config.fisheye.samples_per_edge < 2:
        raise ValueError("fisheye.samples_per_edge must be at least 2")

    if config.bench.warmup < 0:
        raise ValueError("bench.warmup must be non-negative")

    if config.bench.repeat < 1:
        raise ValueError("bench.repeat must be at least 1")

    if config.bench.overhead_ms < 0:
        raise ValueError("bench.overhead_ms must be non-negative")
