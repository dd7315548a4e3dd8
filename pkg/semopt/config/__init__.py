"""Configuration module for semopt."""

from semopt.config.loader import get_config_path, load_config, save_config
from semopt.config.schema import Config, ModelSpec, SampleConfig

__all__ = ["Config", "ModelSpec", "SampleConfig", "load_config", "save_config", "get_config_path"]
