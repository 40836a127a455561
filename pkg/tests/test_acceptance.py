"""Acceptance gate: every operational claim the simulator is built around,
checked at its stated tolerance. One test per criterion; each prints a
PASS line (run with -v to see one line per criterion either way).
"""

import random
import time

import numpy as np
import pytest
import yaml

from conftest import established_pair, make_pair
from flbreak.chaos import ChaosAction
from flbreak.cli import main as cli_main
from flbreak.data import aggregate_fedavg, logistic_grad, logistic_loss
from flbreak.fl import ExperimentSetup, StrategyConfig, run_training
from flbreak.link import LinkConfig
from flbreak.tcp import ConnState, TcpParams

COMPLETING_DELAYS = [0.005, 0.3, 1.0, 3.0, 5.0]
FAILING_DELAYS = [6.0, 10.0]
LOSS_SEEDS = [1, 2, 3, 4, 5]


def _pass(num, msg):
    print(f"ACCEPTANCE {num:02d} PASS: {msg}")


def _median(xs):
    return sorted(xs)[len(xs) // 2]


@pytest.fixture(scope="module")
def latency_results():
    started = time.monotonic()
    results = {}
    for delay in COMPLETING_DELAYS + FAILING_DELAYS:
        results[delay] = run_training(ExperimentSetup(master_seed=1, link=LinkConfig(one_way_delay=delay)))
    return results, time.monotonic() - started


@pytest.fixture(scope="module")
def loss_results():
    results = {}
    for loss in [0.0, 0.10, 0.40, 0.50, 0.60]:
        results[loss] = [
            run_training(ExperimentSetup(master_seed=seed, link=LinkConfig(loss_prob=loss)))
            for seed in LOSS_SEEDS
        ]
    return results


def test_criterion_01_latency_breaking_point(latency_results):
    results, elapsed = latency_results
    times = []
    for delay in COMPLETING_DELAYS:
        res = results[delay]
        assert res.failure_kind is None, f"delay {delay} unexpectedly failed: {res.failure_kind}"
        assert res.rounds_completed == 20
        times.append(res.total_time)
    assert results[0.005].final_accuracy >= 0.93  # clean-baseline learning quality
    assert all(a < b for a, b in zip(times, times[1:])), f"not strictly increasing: {times}"
    for delay in FAILING_DELAYS:
        res = results[delay]
        assert res.failure_kind == "ConnectTimeout"
        assert res.rounds_completed == 0
    assert elapsed < 60.0, f"latency sweep took {elapsed:.1f}s, budget is 60s"
    _pass(1, f"delays <=5 s complete ({times[0]:.0f}..{times[-1]:.0f} s, increasing); 6 and 10 s -> ConnectTimeout")


def test_criterion_02_latency_leaves_learning_untouched(latency_results):
    results, _ = latency_results
    accs = {delay: results[delay].final_accuracy for delay in COMPLETING_DELAYS}
    distinct = set(accs.values())
    assert len(distinct) == 1, f"accuracy varies with delay: {accs}"
    _pass(2, f"final accuracy bit-identical ({distinct.pop()}) across all completing delays")


def test_criterion_03_packet_loss_bands(loss_results):
    base_times = [r.total_time for r in loss_results[0.0]]
    base_accs = [r.final_accuracy for r in loss_results[0.0]]
    assert all(r.failure_kind is None for r in loss_results[0.0])
    base_med = _median(base_times)

    low = loss_results[0.10]
    assert all(r.failure_kind is None for r in low)
    low_med = _median([r.total_time for r in low])
    assert low_med <= 1.25 * base_med, f"10% loss: {low_med:.0f} vs 1.25x base {1.25 * base_med:.0f}"
    assert abs(_median([r.final_accuracy for r in low]) - _median(base_accs)) <= 0.01

    for loss in (0.40, 0.50):
        band = loss_results[loss]
        completed = [r for r in band if r.failure_kind is None]
        assert len(completed) >= 3, f"{loss:.0%} loss: only {len(completed)}/5 seeds completed"
        med = _median([r.total_time for r in completed])
        assert med >= 2.0 * base_med, f"{loss:.0%} loss med {med:.0f} < 2x base {2 * base_med:.0f}"

    allowed = {"RetriesExceeded", "BufferStall", "DeadlineNoQuorum"}
    failing = [r for r in loss_results[0.60] if r.failure_kind is not None]
    assert len(failing) >= 3, f"60% loss: only {len(failing)}/5 seeds failed"
    for r in failing:
        assert r.failure_kind in allowed, f"unexpected failure kind {r.failure_kind}"
    _pass(3, f"loss bands hold (10%: {low_med / base_med:.2f}x; 60%: {len(failing)}/5 seeds fail in {allowed})")


def test_criterion_04_client_failure_tolerance(loss_results):
    baseline = loss_results[0.0][0]  # seed 1, defaults

    def killed(fraction, min_fit=0.1):
        strategy = StrategyConfig(min_fit_fraction=min_fit)
        chaos = [ChaosAction(at=45.0, kind="kill_clients", fraction=fraction)]
        return run_training(ExperimentSetup(master_seed=1, strategy=strategy, chaos=chaos))

    survived = killed(0.90)
    assert survived.failure_kind is None
    assert survived.rounds_completed == 20
    assert survived.total_time > baseline.total_time
    assert abs(survived.final_accuracy - baseline.final_accuracy) <= 0.02

    overkill = killed(0.95)
    assert overkill.failure_kind == "InsufficientClients"

    strict_quorum = killed(0.90, min_fit=0.5)
    assert strict_quorum.failure_kind is not None
    _pass(4, f"90% kill completes (acc drift {abs(survived.final_accuracy - baseline.final_accuracy):.4f}); 95% kill and min_fit=0.5 fail")


def test_criterion_05_handshake_giveup_arithmetic():
    p = make_pair(link=LinkConfig(loss_prob=1.0), params=TcpParams(connect_deadline=1e12))
    p.connect(horizon=500.0)
    ok, reason, t = p.connect_result
    assert ok is False and reason == "ConnectTimeout"
    assert t == 127.0
    _pass(5, "total SYN loss gives up at exactly 127.0 s (initial_rto * (2^(syn_retries+1) - 1))")


def test_criterion_06_keepalive_arithmetic():
    p, conn = established_pair()
    aborts = []
    conn.abort_handler = lambda reason: aborts.append((reason, p.sim.now()))
    last = conn.last_receipt
    p.path.set_blackhole(float("inf"))
    p.sim.run(until_time=20000.0)
    assert aborts[0][0] == "DeadPeer"
    assert aborts[0][1] - last == 7875.0
    _pass(6, "dead peer detected exactly 7875.0 s after last receipt (7200 + 9*75)")


def test_criterion_07_tuning_restores_training(latency_results):
    results, _ = latency_results
    assert results[6.0].failure_kind == "ConnectTimeout"  # defaults fail
    tuned = TcpParams(connect_deadline=60.0, syn_retries=10)
    res = run_training(ExperimentSetup(master_seed=1, link=LinkConfig(one_way_delay=6.0), tcp=tuned))
    assert res.failure_kind is None
    assert res.rounds_completed == 20
    _pass(7, f"connect_deadline=60 + syn_retries=10 completes 20 rounds at 6 s delay ({res.total_time:.0f} s)")


def test_criterion_08_keepalive_tuning_reduces_recovery():
    blackhole = [ChaosAction(at=65.0, kind="blackhole", duration=60.0)]
    totals = {}
    for intvl in (5.0, 15.0, 75.0):
        tcp = TcpParams(keepalive_time=30.0, keepalive_intvl=intvl)
        res = run_training(ExperimentSetup(master_seed=1, tcp=tcp, chaos=blackhole))
        assert res.failure_kind is None
        totals[intvl] = res.total_time
    assert totals[5.0] < totals[15.0] < totals[75.0], totals
    _pass(8, f"60 s blackhole recovery: intvl 5 -> {totals[5.0]:.1f} s < 15 -> {totals[15.0]:.1f} s < 75 -> {totals[75.0]:.1f} s")


def test_criterion_09_transport_reliability_oracle():
    rng = random.Random(2024)
    completed = 0
    attempted = 0
    for i in range(1000):
        loss = rng.uniform(0.0, 0.4)
        delay = rng.uniform(0.0, 0.2)
        size = rng.randint(1, 10000)
        params = TcpParams(connect_deadline=1e12)
        p = make_pair(seed=20000 + i, link=LinkConfig(loss_prob=loss, one_way_delay=delay), params=params)
        conn = p.connect(horizon=500.0)
        if conn.state != ConnState.ESTABLISHED or p.server_end(conn) is None:
            continue
        attempted += 1
        payload = rng.getrandbits(8 * size).to_bytes(size, "big")
        got = []
        p.server_end(conn).message_handler = lambda m: got.append(m)
        t0 = p.sim.now()
        conn.send_message(payload)
        p.sim.run(until_time=t0 + 30000.0)
        if conn.state == ConnState.ESTABLISHED:
            assert len(got) == 1, f"instance {i}: {len(got)} messages delivered"
            assert got[0] == payload, f"instance {i}: payload corrupted"
            completed += 1
    assert completed >= 900, f"only {completed} of {attempted} transfers completed"
    _pass(9, f"{completed}/1000 random transfers delivered byte-exact and in order (rest aborted cleanly)")


def test_criterion_10_fedavg_and_gradient_oracles():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(50):
        updates = [(rng.standard_normal(9), int(rng.integers(1, 100))) for _ in range(int(rng.integers(1, 6)))]
        got = aggregate_fedavg(updates)
        total = sum(n for _, n in updates)
        for j in range(9):
            expect = sum(float(w[j]) * n for w, n in updates) / total
            worst = max(worst, abs(got[j] - expect))
    assert worst <= 1e-12, f"fedavg deviates from oracle by {worst}"

    grad_worst = 0.0
    for _ in range(20):
        x = rng.standard_normal((8, 5))
        y = (rng.random(8) < 0.5).astype(np.float64)
        params = rng.standard_normal(6) * 0.7
        analytic = logistic_grad(params, x, y)
        h = 1e-6
        for j in range(6):
            up, down = params.copy(), params.copy()
            up[j] += h
            down[j] -= h
            numeric = (logistic_loss(up, x, y) - logistic_loss(down, x, y)) / (2 * h)
            grad_worst = max(grad_worst, abs(analytic[j] - numeric) / max(1.0, abs(numeric)))
    assert grad_worst <= 1e-4, f"gradient deviates from finite differences by {grad_worst}"
    _pass(10, f"fedavg within {worst:.2e} of oracle; gradient within {grad_worst:.2e} of finite differences")


def test_criterion_11_determinism_byte_identical_csv(tmp_path):
    cfg = {
        "master_seed": 42,
        "strategy": {
            "num_clients": 6,
            "num_rounds": 4,
            "payload_bytes": 60000,
            "base_compute": 5.0,
            "round_deadline": 300.0,
            "dataset_samples": 600,
        },
        "link": {"loss_prob": 0.25, "one_way_delay": 0.05},
        "chaos": [{"at": 12.0, "kind": "kill_clients", "fraction": 0.34}],
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli_main(["run", "--config", str(path), "--out", str(out), "--quiet"]) == 0
        outs.append(out)
    assert (outs[0] / "runs.csv").read_bytes() == (outs[1] / "runs.csv").read_bytes()
    assert (outs[0] / "rounds.csv").read_bytes() == (outs[1] / "rounds.csv").read_bytes()
    _pass(11, "two executions of the same config + seed emit byte-identical CSVs")


def test_criterion_12_traffic_arithmetic():
    strategy = StrategyConfig(num_rounds=1)
    res = run_training(ExperimentSetup(master_seed=1, strategy=strategy))
    assert res.failure_kind is None
    target = 3_000_000
    assert abs(res.bytes_up - target) <= 0.05 * target, f"uplink {res.bytes_up} outside 5% of 3 MB"
    _pass(12, f"clean round uplink = {res.bytes_up} bytes, within 5% of 3 MB")
