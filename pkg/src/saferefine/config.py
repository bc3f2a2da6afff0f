"""Run configuration: one JSON file wiring policy, backends, and paths.

Shape::

    {
      "dataset": "prompts.jsonl",
      "output_dir": "runs",
      "worker_limit": 4,
      "rng_seed": 1234,
      "failure_budget": 0,
      "policy": {"tau_ama": 2, "tau_sra": 2,
                 "mandatory_refinement_ama": 6, "max_iterations": 5},
      "generator": {"backend": "scripted", "label": "gen-a"},
      "evaluators": [
        {"role": "ethics", "backend": "scripted", "trajectories": "traj.jsonl"},
        {"role": "risk",   "backend": "scripted", "trajectories": "traj.jsonl"}
      ],
      "simulator": {"profile": "profile_a"}
    }

Backends: ``remote`` (needs an ``endpoint`` section), ``scripted``
(evaluators need ``trajectories``), ``simulate`` (uses the ``simulator``
section or an inline ``params``). Exactly one generator and exactly two
evaluators, one ethics and one risk. Secrets enter only through the
environment variable named by ``endpoint.auth_env``; command-line flags
override file values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .agents.base import Evaluator, EvaluatorRole, Generator
from .agents.remote import EndpointConfig, RemoteEvaluator, RemoteGenerator, load_template
from .agents.scripted import ScriptedEvaluator, ScriptedGenerator, load_trajectories
from .agents.simulator import (
    SimulatedEvaluator,
    SimulatedGenerator,
    SimulatorParams,
    default_simulator_params,
)
from .engine import LoopConfig
from .errors import ConfigError
from .rubric import ThresholdPolicy

BACKENDS = ("remote", "scripted", "simulate")


@dataclass
class RunConfig:
    """Parsed and validated run configuration."""

    dataset_path: Path | None
    output_dir: Path
    worker_limit: int
    rng_seed: int
    failure_budget: int
    policy: ThresholdPolicy
    generator_spec: dict[str, Any]
    evaluator_specs: list[dict[str, Any]]
    simulator_spec: dict[str, Any] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __post_init__(self) -> None:
        if self.worker_limit < 1:
            raise ConfigError(f"worker_limit must be >= 1, got {self.worker_limit}")
        if self.failure_budget < 0:
            raise ConfigError(f"failure_budget must be >= 0, got {self.failure_budget}")
        backend = self.generator_spec.get("backend")
        if backend not in BACKENDS:
            raise ConfigError(f"generator backend must be one of {BACKENDS}, got {backend!r}")
        roles = []
        for spec in self.evaluator_specs:
            if spec.get("backend") not in BACKENDS:
                raise ConfigError(
                    f"evaluator backend must be one of {BACKENDS}, got {spec.get('backend')!r}"
                )
            try:
                roles.append(EvaluatorRole(spec.get("role", "")))
            except ValueError:
                raise ConfigError(
                    f"evaluator role must be 'ethics' or 'risk', got {spec.get('role')!r}"
                ) from None
        if sorted(r.value for r in roles) != ["ethics", "risk"]:
            raise ConfigError(
                "exactly two evaluators are required, one with role 'ethics' "
                f"and one with role 'risk'; got {[r.value for r in roles]}"
            )

    # -- digest ----------------------------------------------------------

    def digest_record(self, dataset_digest: str) -> dict[str, Any]:
        """Semantic configuration content feeding the run manifest digest.

        Excludes worker_limit and output paths: they change how a run is
        executed, never what it computes.
        """
        return {
            "policy": self.policy.to_record(),
            "generator": self.generator_spec,
            "evaluators": self.evaluator_specs,
            "rng_seed": self.rng_seed,
            "dataset_digest": dataset_digest,
        }

    @property
    def generator_label(self) -> str:
        return self.generator_spec.get("label") or self.generator_spec.get("backend", "generator")

    # -- agent construction ----------------------------------------------

    def _resolve(self, raw_path: str) -> Path:
        path = Path(raw_path)
        return path if path.is_absolute() else self.base_dir / path

    def _simulator_params(self, spec: Mapping[str, Any]) -> SimulatorParams:
        params_rec = spec.get("params") or self.simulator_spec.get("params")
        if params_rec:
            return SimulatorParams.from_record(params_rec)
        profile = spec.get("profile") or self.simulator_spec.get("profile") or "profile_a"
        return default_simulator_params(profile=profile, rng_seed=self.rng_seed)

    def build_generator(self) -> Generator:
        spec = self.generator_spec
        backend = spec["backend"]
        label = self.generator_label
        if backend == "scripted":
            return ScriptedGenerator(label=label)
        if backend == "simulate":
            return SimulatedGenerator(label=label)
        endpoint = self._endpoint(spec)
        kwargs: dict[str, Any] = {}
        if spec.get("generate_template"):
            kwargs["generate_template"] = load_template(self._resolve(spec["generate_template"]))
        if spec.get("refine_template"):
            kwargs["refine_template"] = load_template(self._resolve(spec["refine_template"]))
        return RemoteGenerator(endpoint, label=label, **kwargs)

    def build_evaluator(self, spec: Mapping[str, Any]) -> Evaluator:
        role = EvaluatorRole(spec["role"])
        backend = spec["backend"]
        if backend == "scripted":
            traj_path = spec.get("trajectories")
            if not traj_path:
                raise ConfigError(f"scripted {role.value} evaluator needs a trajectories path")
            return ScriptedEvaluator(load_trajectories(self._resolve(traj_path)), role)
        if backend == "simulate":
            return SimulatedEvaluator(self._simulator_params(spec), role)
        template = None
        if spec.get("prompt_template"):
            template = load_template(self._resolve(spec["prompt_template"]))
        return RemoteEvaluator(self._endpoint(spec), role, prompt_template=template)

    def _endpoint(self, spec: Mapping[str, Any]) -> EndpointConfig:
        endpoint = spec.get("endpoint")
        if not endpoint:
            raise ConfigError(f"remote backend needs an 'endpoint' section: {spec}")
        try:
            return EndpointConfig.from_record(endpoint)
        except KeyError as exc:
            raise ConfigError(f"endpoint section is missing field {exc}") from None

    def build_loop(self) -> LoopConfig:
        evaluators = {
            EvaluatorRole(spec["role"]): self.build_evaluator(spec)
            for spec in self.evaluator_specs
        }
        return LoopConfig(
            generator=self.build_generator(),
            ethics_evaluator=evaluators[EvaluatorRole.ETHICS],
            risk_evaluator=evaluators[EvaluatorRole.RISK],
            policy=self.policy,
        )


def parse_run_config(record: Mapping[str, Any], base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(record, Mapping):
        raise ConfigError("run configuration must be a JSON object")
    generator = record.get("generator")
    if not isinstance(generator, Mapping):
        raise ConfigError("configuration needs a 'generator' object")
    evaluators = record.get("evaluators")
    if not isinstance(evaluators, list):
        raise ConfigError("configuration needs an 'evaluators' list")
    dataset = record.get("dataset")
    return RunConfig(
        dataset_path=Path(dataset) if dataset else None,
        output_dir=Path(record.get("output_dir", "runs")),
        worker_limit=int(record.get("worker_limit", 1)),
        rng_seed=int(record.get("rng_seed", 0)),
        failure_budget=int(record.get("failure_budget", 0)),
        policy=ThresholdPolicy.from_record(record.get("policy", {})),
        generator_spec=dict(generator),
        evaluator_specs=[dict(e) for e in evaluators],
        simulator_spec=dict(record.get("simulator", {})),
        base_dir=base_dir,
    )


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration file {path} is not valid JSON: {exc}") from None
    config = parse_run_config(record, base_dir=path.parent)
    if config.dataset_path is not None and not config.dataset_path.is_absolute():
        config.dataset_path = path.parent / config.dataset_path
    if not config.output_dir.is_absolute():
        config.output_dir = path.parent / config.output_dir
    return config
