"""
Bundled training recipes, reported best-epoch results and the cosine schedule.
"""

import math
from enum import Enum
from functools import lru_cache
from typing import List, Optional

from pydantic import BaseModel, Field

from .errors import ArgumentError, RecipeLookupError
from .utils import load_json, package_data_path


class ModelName(str, Enum):
    MOSSD = "moSSD"
    RESSSD = "resSSD"
    RFCN = "R-FCN"


class TrainingRecipe(BaseModel):
    """Learning rate and epoch budget of one fine-tuning run."""

    model: ModelName
    dataset: str
    base_learning_rate: float = Field(gt=0)
    epochs: int = Field(gt=0)
    feature_extractor_locked: bool = False


class ReferenceResult(BaseModel):
    """Reported test mAP@0.5 (percent) and the epoch it was reached at."""

    model: ModelName
    dataset: str
    feature_extractor_locked: bool = False
    map_percent: float = Field(ge=0, le=100)
    best_epoch: int = Field(gt=0)


@lru_cache(maxsize=1)
def _bundled() -> dict:
    return load_json(package_data_path("recipes.json"))


def recipes() -> List[TrainingRecipe]:
    """All bundled training recipes."""
    return [TrainingRecipe.model_validate(row) for row in _bundled()["recipes"]]


def reference_results() -> List[ReferenceResult]:
    """All bundled reference results."""
    return [ReferenceResult.model_validate(row) for row in _bundled()["results"]]


def _key(model: str, dataset: str, fe_locked: bool) -> str:
    return f"{model} + {dataset}" + (" (FE locked)" if fe_locked else "")


def _model_name(model: object) -> str:
    return model.value if isinstance(model, ModelName) else str(model)


def recipe_lookup(model: str, dataset: str, fe_locked: bool = False) -> TrainingRecipe:
    """
    Training recipe for a model/dataset/FE-lock combination.

    Raises:
        RecipeLookupError: If no bundled recipe matches
    """
    name = _model_name(model)
    for recipe in recipes():
        if (
            recipe.model.value == name
            and recipe.dataset == dataset
            and recipe.feature_extractor_locked == fe_locked
        ):
            return recipe
    raise RecipeLookupError(f"No training recipe for {_key(name, dataset, fe_locked)}")


def reference_result(model: str, dataset: str, fe_locked: bool = False) -> ReferenceResult:
    """
    Reported result for a model/dataset/FE-lock combination.

    Raises:
        RecipeLookupError: If no bundled result matches
    """
    name = _model_name(model)
    for result in reference_results():
        if result.model.value == name and result.dataset == dataset and result.feature_extractor_locked == fe_locked:
            return result
    raise RecipeLookupError(f"No reference result for {_key(name, dataset, fe_locked)}")


def cosine_lr(step: int, total_steps: int, base: float) -> float:
    """
    Cosine-decayed learning rate: base * 0.5 * (1 + cos(pi * step / total_steps)).

    Raises:
        ArgumentError: If step is outside [0, total_steps] or total_steps/base are not positive
    """
    if total_steps <= 0:
        raise ArgumentError(f"total_steps must be positive, got {total_steps}")
    if base <= 0:
        raise ArgumentError(f"base learning rate must be positive, got {base}")
    if not 0 <= step <= total_steps:
        raise ArgumentError(f"step {step} outside [0, {total_steps}]")
    return base * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def lr_schedule(recipe: TrainingRecipe, steps_per_epoch: int, total_steps: Optional[int] = None) -> List[float]:
    """Per-step learning rates over a recipe's full run."""
    if steps_per_epoch <= 0:
        raise ArgumentError(f"steps_per_epoch must be positive, got {steps_per_epoch}")
    total = total_steps or recipe.epochs * steps_per_epoch
    return [cosine_lr(step, total, recipe.base_learning_rate) for step in range(total)]
