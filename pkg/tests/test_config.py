import numpy as np
import pytest

from invpomdp.config import (ConfigError, ProblemConfig, load_config, non_gaussian_config,
                             parse_config, substream)


def test_defaults_match_parameter_table():
    c = ProblemConfig()
    assert (c.fixed_cost, c.unit_cost, c.len_episode, c.max_action) == (1.0, 0.1, 4, 12.0)
    assert (c.initial_mean, c.initial_var) == (2.0, 4.0)
    assert (c.demand_mean, c.demand_var, c.noise_var) == (1.0, 1.0, 1.0)
    assert (c.holding_slope_pos, c.backorder_slope) == (1.0, 5.0)
    assert (c.grid_lower, c.grid_upper, c.delta, c.min_zvalue) == (-20.0, 30.0, 0.5, 1e-4)
    assert (c.batch_size, c.exploration_noise, c.tau) == (512, 8.0, 0.005)
    assert (c.eps_start, c.eps_end, c.eps_decay, c.cti, c.ati) == (0.9, 0.05, 200.0, 3, 1)
    assert (c.lr_actor, c.lr_critic, c.beta1, c.beta2) == (1e-5, 1e-3, 0.999, 0.999)
    assert c.discount == 0.99


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    assert load_config(p) == ProblemConfig()
    assert load_config(None) == ProblemConfig()


def test_comments_and_overrides():
    c = parse_config("# header\nfixed_cost = 2.5  # K\n\nlen_episode=6\ndemand_kind = exponential\n")
    assert c.fixed_cost == 2.5 and c.len_episode == 6 and c.demand_kind == "exponential"
    assert isinstance(c.len_episode, int)


@pytest.mark.parametrize("text, key", [
    ("delta=0", "delta"),
    ("noise_var = -1", "noise_var"),
    ("eps_end = 0.95", "eps_start"),
    ("discount = 1.5", "discount"),
    ("len_episode = 2.5", "len_episode"),
    ("demand_kind = poisson", "demand_kind"),
])
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_unknown_key_and_non_numeric():
    with pytest.raises(ConfigError, match="unknown key 'bogus'"):
        parse_config("bogus = 1")
    with pytest.raises(ConfigError, match="fixed_cost"):
        parse_config("fixed_cost = one")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("fixed_cost 1")


def test_symbol_alias_round_trips_through_dump():
    c = parse_config("sigma_eta_sq=2")
    assert c.noise_var == 2.0
    assert parse_config(c.dumps()) == c


def test_dump_round_trip_is_exact():
    c = ProblemConfig(unit_cost=0.1 + 0.2, discount=0.95, rng_seed=17)
    assert parse_config(c.dumps()) == c


def test_non_gaussian_config():
    c = non_gaussian_config()
    assert c.demand_kind == "exponential" and c.demand_mean == 1.0 and c.noise_var == 1.0
    assert not c.is_gaussian


def test_substreams_replay_and_separate():
    a = substream(3, "demand", 5).standard_normal(4)
    assert np.array_equal(a, substream(3, "demand", 5).standard_normal(4))
    assert not np.array_equal(a, substream(3, "noise", 5).standard_normal(4))
    assert not np.array_equal(a, substream(3, "demand", 6).standard_normal(4))
    assert not np.array_equal(a, substream(4, "demand", 5).standard_normal(4))
