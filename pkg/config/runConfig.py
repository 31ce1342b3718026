"""Run configuration: JSON file validated by a pydantic schema.

Values resolve as command-line flags > config file > bundled defaults.
"""

import copy
import json
import logging
import os
from typing import List, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config.jsonFiles import DefaultRun
from func.errors import ConfigError

load_dotenv()


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    geometryScale: float = Field(100.0, gt=0)
    youngsModulus: float = Field(200000.0, gt=0)
    poissonsRatio: float = Field(0.3, ge=0, lt=0.5)
    thickness: float = Field(10.0, gt=0)
    totalLoad: float = Field(1000.0, gt=0)
    canvasHeight: int = Field(192, ge=8)
    canvasWidth: int = Field(256, ge=8)
    epsilon: float = Field(0.02, gt=0, lt=0.5)
    baseCaseCount: int = Field(63, ge=1, le=72)
    ##Explicit pool case ids; when set they replace the first baseCaseCount cases
    baseCaseIds: Optional[List[str]] = None
    ##Mask radius around point forces, in coarse element lengths
    singularRadius: float = Field(1.0, ge=0)
    testFraction: float = Field(0.25, gt=0, lt=1)
    trussTemplate: str = "truss_cantilever_v1"


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    variant: Literal["unet", "unetpp"] = "unet"
    depth: int = Field(4, ge=2)
    baseChannels: int = Field(16, ge=4)
    physicsInformed: bool = True
    physicsWeight: float = Field(1.0, ge=0)

    def variantName(self):
        name = "UNet" if self.variant == "unet" else "UNet++"
        return f"PI-{name}" if self.physicsInformed else name

    def checkCanvas(self, height, width):
        step = 2**self.depth
        if height % step or width % step:
            raise ValueError(
                f"canvas {height}x{width} is not divisible by 2^depth = {step}"
            )


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(200, ge=1)
    batchSize: int = Field(8, ge=1)
    learningRate: float = Field(1e-3, gt=0)
    lrDecayEpoch: int = Field(150, ge=0)
    lrDecayFactor: float = Field(0.1, gt=0, le=1)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adamEpsilon: float = Field(1e-8, gt=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    runDir: str = "runs/default"
    seed: int = 0
    data: DataConfig = DataConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()

    @model_validator(mode="after")
    def _canvasFitsDepth(self):
        self.model.checkCanvas(self.data.canvasHeight, self.data.canvasWidth)
        return self

    def path(self, *parts):
        return os.path.join(self.runDir, *parts)


##Command-line flag -> (section, key)
FLAG_KEYS = {
    "runDir": (None, "runDir"),
    "seed": (None, "seed"),
    "epochs": ("train", "epochs"),
    "batchSize": ("train", "batchSize"),
    "learningRate": ("train", "learningRate"),
    "variant": ("model", "variant"),
    "physicsInformed": ("model", "physicsInformed"),
    "physicsWeight": ("model", "physicsWeight"),
    "depth": ("model", "depth"),
    "baseChannels": ("model", "baseChannels"),
    "epsilon": ("data", "epsilon"),
}


def _merge(base, update):
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def loadRunConfig(path=None, overrides=None):
    """Read, merge and validate a run configuration.

    Unknown keys anywhere in the file are rejected.
    """
    raw = copy.deepcopy(DefaultRun)
    if path is not None:
        try:
            with open(path, "r") as file:
                fromFile = json.load(file)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        if not isinstance(fromFile, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        _merge(raw, fromFile)

    for flag, value in (overrides or {}).items():
        if value is None:
            continue
        if flag not in FLAG_KEYS:
            raise ConfigError(f"unknown override '{flag}'")
        section, key = FLAG_KEYS[flag]
        target = raw if section is None else raw.setdefault(section, {})
        target[key] = value

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid run config: {e}")
    logging.info(f"Run config loaded (run dir {config.runDir}, seed {config.seed}, model {config.model.variantName()})")
    return config


def workerThreads():
    """Worker cap from PISTRESS_THREADS, defaulting to the CPU count."""
    value = os.getenv("PISTRESS_THREADS")
    if not value:
        return max(1, os.cpu_count() or 1)
    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f"PISTRESS_THREADS must be an integer, got '{value}'")
    if threads < 1:
        raise ConfigError(f"PISTRESS_THREADS must be at least 1, got {threads}")
    return threads
