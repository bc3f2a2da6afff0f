"""Run-config parsing, validation, and agent construction details."""

from __future__ import annotations

import json
import threading

import pytest

from saferefine.agents import EvaluatorRole, SamplingConfig
from saferefine.agents.remote import EndpointConfig, RemoteGenerator
from saferefine.config import load_run_config, parse_run_config
from saferefine.errors import ConfigError, RangeError

from test_adapters_remote import StubServer, chat_ok


def _base_record(**overrides):
    record = {
        "dataset": "d.jsonl",
        "generator": {"backend": "scripted", "label": "g"},
        "evaluators": [
            {"role": "ethics", "backend": "scripted", "trajectories": "t.jsonl"},
            {"role": "risk", "backend": "scripted", "trajectories": "t.jsonl"},
        ],
    }
    record.update(overrides)
    return record


def test_parse_minimal_config():
    config = parse_run_config(_base_record())
    assert config.generator_label == "g"
    assert config.worker_limit == 1
    assert config.policy.tau_ama == 2


def test_policy_values_flow_through():
    config = parse_run_config(_base_record(policy={"tau_ama": 1, "max_iterations": 3}))
    assert config.policy.tau_ama == 1
    assert config.policy.max_iterations == 3
    assert config.policy.tau_sra == 2  # unstated fields keep defaults


def test_unknown_backend_rejected():
    with pytest.raises(ConfigError):
        parse_run_config(_base_record(generator={"backend": "telepathy"}))


def test_missing_role_rejected():
    record = _base_record()
    record["evaluators"][0]["role"] = "vibes"
    with pytest.raises(ConfigError):
        parse_run_config(record)


def test_two_risk_evaluators_rejected():
    record = _base_record()
    record["evaluators"][0]["role"] = "risk"
    with pytest.raises(ConfigError):
        parse_run_config(record)


def test_one_evaluator_rejected():
    record = _base_record()
    record["evaluators"] = record["evaluators"][:1]
    with pytest.raises(ConfigError):
        parse_run_config(record)


def test_scripted_evaluator_needs_trajectories():
    record = _base_record()
    del record["evaluators"][0]["trajectories"]
    config = parse_run_config(record)
    with pytest.raises(ConfigError):
        config.build_loop()


def test_remote_backend_needs_endpoint():
    record = _base_record(generator={"backend": "remote", "label": "r"})
    config = parse_run_config(record)
    with pytest.raises(ConfigError):
        config.build_generator()


def test_digest_ignores_worker_limit_but_not_policy():
    a = parse_run_config(_base_record(worker_limit=1))
    b = parse_run_config(_base_record(worker_limit=8))
    c = parse_run_config(_base_record(policy={"tau_ama": 1}))
    assert a.digest_record("ds") == b.digest_record("ds")
    assert a.digest_record("ds") != c.digest_record("ds")
    assert a.digest_record("ds") != a.digest_record("other-dataset")


def test_relative_paths_resolve_against_config_dir(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    (sub / "d.jsonl").write_text(
        '{"id": "a", "text": "x", "principle": 1}\n', encoding="utf-8"
    )
    config_path = sub / "run.json"
    config_path.write_text(json.dumps(_base_record()), encoding="utf-8")
    config = load_run_config(config_path)
    assert config.dataset_path == sub / "d.jsonl"
    assert config.output_dir == sub / "runs"


def test_prompt_templates_load_from_files(tmp_path):
    stub = StubServer()
    try:
        template_path = tmp_path / "gen.txt"
        template_path.write_text("CUSTOM TEMPLATE >>> {query} <<<", encoding="utf-8")
        record = _base_record(
            generator={
                "backend": "remote",
                "label": "r",
                "endpoint": {"base_url": stub.url, "model": "m"},
                "generate_template": str(template_path),
            }
        )
        config = parse_run_config(record, base_dir=tmp_path)
        generator = config.build_generator()
        stub.script.append(chat_ok("hello"))
        from conftest import make_query

        generator.generate(make_query("q1", text="the question"))
        sent = stub.requests[0]["body"]["messages"][0]["content"]
        assert sent == "CUSTOM TEMPLATE >>> the question <<<"
    finally:
        stub.close()


def test_inline_simulator_params_record():
    from saferefine.agents.simulator import default_simulator_params

    params_record = default_simulator_params("profile_b", rng_seed=55).to_record()
    record = _base_record(
        generator={"backend": "simulate", "label": "s"},
        evaluators=[
            {"role": "ethics", "backend": "simulate"},
            {"role": "risk", "backend": "simulate"},
        ],
        simulator={"params": params_record},
    )
    config = parse_run_config(record)
    loop = config.build_loop()
    assert loop.ethics_evaluator.params.rng_seed == 55
    assert loop.risk_evaluator.params.to_record() == params_record


def test_sampling_config_validation():
    with pytest.raises(RangeError):
        SamplingConfig(temperature=-0.1)
    with pytest.raises(RangeError):
        SamplingConfig(top_p=0.0)
    with pytest.raises(RangeError):
        SamplingConfig(top_p=1.5)
    with pytest.raises(RangeError):
        SamplingConfig(max_tokens=0)
    defaults = SamplingConfig()
    assert (defaults.temperature, defaults.top_p, defaults.max_tokens) == (0.7, 0.9, 512)


def test_remote_inflight_bound_is_enforced():
    """With max_inflight=2, six concurrent calls never overlap more than twice
    inside the server handler."""
    stub = StubServer()
    state = {"active": 0, "peak": 0}
    lock = threading.Lock()

    def tracked():
        import time

        with lock:
            state["active"] += 1
            state["peak"] = max(state["peak"], state["active"])
        time.sleep(0.05)
        with lock:
            state["active"] -= 1
        return chat_ok("ok")

    try:
        stub.script.extend([tracked] * 6)
        cfg = EndpointConfig(
            base_url=stub.url, model="m", max_inflight=2, timeout_s=5.0, backoff_base_s=0.001
        )
        generator = RemoteGenerator(cfg)
        from conftest import make_query

        threads = [
            threading.Thread(target=generator.generate, args=(make_query(f"q{i}"),))
            for i in range(6)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert state["peak"] <= 2
        assert len(stub.requests) == 6
    finally:
        stub.close()
