"""Experiment configuration: a versioned JSON document with one model
block, one task block and one run block.

Validation reports the first missing or malformed field by its dotted
path, so a bad config fails with a pointer rather than a stack trace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .background import validate_generator
from .errors import ConfigInvalid
from .regime import RegimeModel
from .resample import (
    ContinuousResampleSpec,
    RatePairLaw,
    ResampleModel,
    ScaledResampleLaw,
    TransitionLaw,
    Uniform,
)

SCHEMA_VERSION = 1
MODEL_KINDS = ("regime", "resample", "resample-ct")
TASK_NAMES = ("moments", "stationary", "transient", "simulate", "diffusion",
              "ldp", "reproduce-paper")


@dataclass
class RunBlock:
    seed: int = 1
    replications: int = 10_000
    horizon: float | None = None
    slots: int | None = None
    n_edges: list[int] = field(default_factory=lambda: [45])
    delta: float = 1.0
    out_dir: str = "out"
    bins: object = "fd"
    scaled: bool = False


@dataclass
class ExperimentConfig:
    model_kind: str
    model: dict
    task_name: str
    task: dict
    run: RunBlock

    # -- model builders ------------------------------------------------------

    def regime_model(self, n_edges: int | None = None) -> RegimeModel:
        if self.model_kind != "regime":
            raise ConfigInvalid("task needs a regime model", field="model.kind")
        n = n_edges if n_edges is not None else self.run.n_edges[0]
        return RegimeModel(
            chain=validate_generator(np.array(self.model["Q"], dtype=float)),
            up_rates=np.array(self.model["up_rates"], dtype=float),
            down_rates=np.array(self.model["down_rates"], dtype=float),
            n_edges=n,
            delta=self.run.delta,
        )

    def resample_model(self, n_edges: int | None = None) -> ResampleModel:
        if self.model_kind != "resample":
            raise ConfigInvalid("task needs a resample model", field="model.kind")
        n = n_edges if n_edges is not None else self.run.n_edges[0]
        law = TransitionLaw.from_atoms(
            [(a["p"], a["r"], a["weight"]) for a in self.model["atoms"]]
        )
        return ResampleModel(law=law, n_edges=n)

    def rate_pair_law(self) -> RatePairLaw:
        if self.model_kind != "resample-ct":
            raise ConfigInvalid("task needs a resample-ct model", field="model.kind")
        rates = self.model["rates"]
        if "atoms" in rates:
            return RatePairLaw.from_atoms(
                [(a["up"], a["down"], a["weight"]) for a in rates["atoms"]]
            )
        return RatePairLaw.independent(
            _named_marginal(rates["up"], "model.rates.up"),
            _named_marginal(rates["down"], "model.rates.down"),
        )

    def scaled_law(self) -> ScaledResampleLaw:
        return ScaledResampleLaw(self.rate_pair_law(), delta=self.run.delta)

    def continuous_spec(self, n_edges: int | None = None) -> ContinuousResampleSpec:
        n = n_edges if n_edges is not None else self.run.n_edges[0]
        period = self.model.get("period")
        if period is None:
            period = float(n) ** -self.run.delta
        return ContinuousResampleSpec(rates=self.rate_pair_law(), period=float(period))


def _named_marginal(doc, path: str) -> Uniform:
    if not isinstance(doc, dict) or "uniform" not in doc:
        raise ConfigInvalid(
            "continuous marginals must be {'uniform': [lo, hi]}", field=path
        )
    lo, hi = doc["uniform"]
    return Uniform(float(lo), float(hi))


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ConfigInvalid(f"missing field: {path}", field=path)
    return doc[key]


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"config file not found: {path}", field=None) from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}", field=None) from exc
    return parse_config(doc)


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigInvalid("config must be a JSON object", field="schema")
    schema = _require(doc, "schema", "schema")
    if schema != SCHEMA_VERSION:
        raise ConfigInvalid(f"unsupported schema version {schema!r}", field="schema")

    model = _require(doc, "model", "model")
    kind = _require(model, "kind", "model.kind")
    if kind not in MODEL_KINDS:
        raise ConfigInvalid(f"model.kind must be one of {MODEL_KINDS}", field="model.kind")
    if kind == "regime":
        for key in ("Q", "up_rates", "down_rates"):
            _require(model, key, f"model.{key}")
    elif kind == "resample":
        atoms = _require(model, "atoms", "model.atoms")
        _validate_atom_list(atoms, ("p", "r", "weight"), "model.atoms")
    else:
        rates = _require(model, "rates", "model.rates")
        if "atoms" in rates:
            _validate_atom_list(rates["atoms"], ("up", "down", "weight"), "model.rates.atoms")
        else:
            _require(rates, "up", "model.rates.up")
            _require(rates, "down", "model.rates.down")

    task = _require(doc, "task", "task")
    task_name = _require(task, "name", "task.name")
    if task_name not in TASK_NAMES:
        raise ConfigInvalid(f"task.name must be one of {TASK_NAMES}", field="task.name")

    run_doc = doc.get("run", {})
    if not isinstance(run_doc, dict):
        raise ConfigInvalid("run must be an object", field="run")
    run = RunBlock()
    if "seed" in run_doc:
        run.seed = int(run_doc["seed"])
    if "replications" in run_doc:
        run.replications = int(run_doc["replications"])
        if run.replications < 1:
            raise ConfigInvalid("run.replications must be >= 1", field="run.replications")
    if "horizon" in run_doc:
        run.horizon = float(run_doc["horizon"])
        if run.horizon <= 0:
            raise ConfigInvalid("run.horizon must be positive", field="run.horizon")
    if "slots" in run_doc:
        run.slots = int(run_doc["slots"])
        if run.slots < 1:
            raise ConfigInvalid("run.slots must be >= 1", field="run.slots")
    if "n_edges" in run_doc:
        value = run_doc["n_edges"]
        run.n_edges = [int(v) for v in (value if isinstance(value, list) else [value])]
        if not run.n_edges or min(run.n_edges) < 1:
            raise ConfigInvalid("run.n_edges must be positive", field="run.n_edges")
    if "delta" in run_doc:
        run.delta = float(run_doc["delta"])
        if run.delta <= 0:
            raise ConfigInvalid("run.delta must be positive", field="run.delta")
    if "out_dir" in run_doc:
        run.out_dir = str(run_doc["out_dir"])
    if "bins" in run_doc:
        run.bins = run_doc["bins"]
        if not (run.bins == "fd" or isinstance(run.bins, int)):
            raise ConfigInvalid("run.bins must be 'fd' or an integer", field="run.bins")
    if "scaled" in run_doc:
        run.scaled = bool(run_doc["scaled"])

    return ExperimentConfig(model_kind=kind, model=model, task_name=task_name,
                            task=task, run=run)


def _validate_atom_list(atoms, keys, path: str):
    if not isinstance(atoms, list) or not atoms:
        raise ConfigInvalid(f"{path} must be a nonempty list", field=path)
    for i, atom in enumerate(atoms):
        for key in keys:
            if key not in atom:
                raise ConfigInvalid(f"missing field: {path}[{i}].{key}",
                                    field=f"{path}[{i}].{key}")
