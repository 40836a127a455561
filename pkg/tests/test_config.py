import pytest

from flbreak.config import (
    DEFAULT_GRID_LATENCIES,
    ConfigError,
    ExperimentConfig,
    config_digest,
    load_config,
    parse_config,
)


def write(tmp_path, text):
    path = tmp_path / "cfg.yaml"
    path.write_text(text)
    return path


def test_load_minimal_config_applies_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "master_seed: 5\n"))
    assert cfg.master_seed == 5
    assert cfg.strategy.num_clients == 10
    assert cfg.tcp.syn_retries == 6
    assert cfg.tcp.keepalive_time == 7200.0
    assert cfg.link.queue_limit == 200
    assert cfg.sweep is None and cfg.tcp_grid is None


def test_full_sections_parse(tmp_path):
    cfg = load_config(
        write(
            tmp_path,
            """
master_seed: 3
strategy: {num_clients: 4, num_rounds: 2, payload_bytes: 50000}
link: {one_way_delay: 0.1, loss_prob: 0.2}
tcp: {syn_retries: 3, connect_deadline: 25.0}
chaos:
  - {at: 10.0, kind: kill_clients, fraction: 0.5}
  - {at: 20.0, kind: blackhole, duration: 5.0}
sweep: {axis: delay_s, values: [0.1, 0.5]}
""",
        )
    )
    assert cfg.tcp.syn_retries == 3
    assert len(cfg.chaos) == 2
    assert cfg.sweep.axis == "delay_s"
    assert cfg.sweep.seed_count() == 1  # non-loss axis defaults to one seed


def test_loss_axis_defaults_to_five_seeds():
    cfg = parse_config({"sweep": {"axis": "loss_pct", "values": [0, 10]}})
    assert cfg.sweep.seed_count() == 5


def test_field_error_reports_path(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(write(tmp_path, "link: {loss_prob: 1.5}\n"))
    assert "link.loss_prob" in str(err.value)


def test_yaml_syntax_error_reports_line(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(write(tmp_path, "strategy: {num_clients: 4\nlink: {}\n"))
    assert "line" in str(err.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/cfg.yaml")


def test_non_mapping_root(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "- just\n- a list\n"))


def test_sweep_and_grid_are_mutually_exclusive():
    with pytest.raises(ConfigError):
        parse_config(
            {
                "sweep": {"axis": "delay_s", "values": [0.1, 0.2]},
                "tcp_grid": {"param": "syn_retries", "values": [3]},
            }
        )


def test_grid_rejects_unknown_param():
    with pytest.raises(ConfigError):
        parse_config({"tcp_grid": {"param": "tcp_frobnicate", "values": [1]}})


def test_sysctl_spellings_accepted():
    cfg = parse_config(
        {
            "tcp": {"tcp_syn_retries": 3, "tcp_keepalive_time": 600.0, "tcp_sack": False, "tcp_rmem": 65536},
            "tcp_grid": {"param": "tcp_keepalive_intvl", "values": [5, 75]},
        }
    )
    assert cfg.tcp.syn_retries == 3
    assert cfg.tcp.keepalive_time == 600.0
    assert cfg.tcp.sack_enabled is False
    assert cfg.tcp.rmem_bytes == 65536
    assert cfg.tcp_grid.param == "keepalive_intvl"  # normalized


def test_default_grid_latencies_span_17_points():
    assert len(DEFAULT_GRID_LATENCIES) == 17
    assert DEFAULT_GRID_LATENCIES[0] == 0.0
    assert DEFAULT_GRID_LATENCIES[-1] == 0.8


def test_digest_stable_and_sensitive():
    a = ExperimentConfig(master_seed=1)
    b = ExperimentConfig(master_seed=1)
    c = ExperimentConfig(master_seed=2)
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest(c)
    assert len(config_digest(a)) == 16
