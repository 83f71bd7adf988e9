"""Config parsing: defaults, range errors, invariants, round trip."""

import pytest

from steerbo.config import (
    CampaignConfig,
    ConfigError,
    parse_config,
    serialize_config,
    thread_rngs,
)


def test_minimal_document_defaults():
    cfg = parse_config("problem_name: ackley10")
    assert cfg.d == 10
    assert cfg.horizon == 100
    assert cfg.p_fb == 0.1
    assert cfg.gamma0 == 1.0
    assert cfg.selector == "random"
    assert cfg.n_init == 10
    assert cfg.pool_size == 1024
    assert (cfg.lb, cfg.ub) == (-32.768, 32.768)


def test_problem_bounds_resolved():
    cfg = parse_config("problem_name: hartmann6")
    assert cfg.d == 6
    assert (cfg.lb, cfg.ub) == (0.0, 1.0)


def test_p_fb_out_of_range():
    with pytest.raises(ConfigError, match="p_fb"):
        parse_config("problem_name: ackley10\np_fb: 1.5")


def test_human_expert_requires_live_mode():
    with pytest.raises(ConfigError, match="expert_kind"):
        parse_config("problem_name: ackley10\nexpert_kind: human\nmode: sim")
    with pytest.raises(ConfigError, match="expert_kind"):
        parse_config("problem_name: ackley10\nexpert_kind: none\nmode: live")
    cfg = parse_config("problem_name: ackley10\nexpert_kind: human\nmode: live")
    assert cfg.mode == "live"


def test_unknown_key_named_in_error():
    with pytest.raises(ConfigError, match="granularity"):
        parse_config("problem_name: ackley10\ngranularity: 3")


def test_unknown_problem_rejected():
    with pytest.raises(ValueError, match="unknown problem"):
        parse_config("problem_name: rosenbrock99")


def test_dimension_mismatch_rejected():
    with pytest.raises(ConfigError, match="d:"):
        parse_config("problem_name: ackley10\nd: 7")


def test_bad_integer_rejected():
    with pytest.raises(ConfigError, match="horizon"):
        parse_config("problem_name: ackley10\nhorizon: 2.5")


def test_invariant_floors():
    with pytest.raises(ConfigError, match="n_init"):
        parse_config("problem_name: ackley10\nn_init: 1")
    with pytest.raises(ConfigError, match="pool_size"):
        parse_config("problem_name: ackley10\npool_size: 1")
    with pytest.raises(ConfigError, match="gamma_decay"):
        parse_config("problem_name: ackley10\ngamma_decay: 0")


def test_round_trip_equality():
    text = """
problem_name: levy10
horizon: 42
p_fb: 0.25
expert_kind: constraint
constraint_c: 22.0
selector: bald
surrogate_kind: laplace_mlp
gamma_decay: 0.97
seed: 11
"""
    cfg = parse_config(text)
    assert parse_config(serialize_config(cfg)) == cfg


def test_round_trip_preserves_null_constraint():
    cfg = parse_config("problem_name: ackley10")
    assert cfg.constraint_c is None
    assert parse_config(serialize_config(cfg)) == cfg


def test_nested_values_rejected():
    with pytest.raises(ConfigError, match="nested"):
        parse_config("problem_name: ackley10\nseed: {a: 1}")


def test_thread_rngs_independent_and_deterministic():
    bo1, fb1 = thread_rngs(123)
    bo2, fb2 = thread_rngs(123)
    assert bo1.random(5).tolist() == bo2.random(5).tolist()
    assert fb1.random(5).tolist() == fb2.random(5).tolist()
    bo3, fb3 = thread_rngs(123)
    assert bo3.random(5).tolist() != fb3.random(5).tolist()


def test_fingerprint_campaign_flag():
    cfg = CampaignConfig(problem_name="pool.csv", d=16)
    assert cfg.is_fingerprint_campaign
