import csv

import pytest

import ics_blackhole as ibh


def test_ciphertext_length():
    assert ibh.ciphertext_length(0) == 29
    assert ibh.ciphertext_length(100) == 129


def test_mine_patterns_worked_example():
    p = [1, 2, 1, 2, 3, 4, 1, 2, 1, 2, 3, 4, 5, 6]
    assert ibh.mine_patterns([1, 2, 1, 2] + p + p) == [([1, 2], 2), (p, 2)]


def test_mine_patterns_undecomposable():
    with pytest.raises(ibh.SniperError):
        ibh.mine_patterns([1, 2, 3, 4])


def test_merge_candidates():
    base = ibh.mine_patterns([1, 2, 1, 2, 3, 4, 3, 4, 5, 6, 5, 6, 3, 4, 3, 4, 5, 6, 5, 6])
    cands = ibh.merge_candidates(base)
    assert [len(c) for c in cands] == [2, 5]
    assert cands[0][1][0] == [3, 4, 3, 4, 5, 6, 5, 6, 3, 4, 3, 4, 5, 6, 5, 6]


def test_process_delay_run_and_score(tmp_path):
    out = ibh.run_scenario("process-delay", seed=1, drop_duration_s=600, out_dir=str(tmp_path),
                           settings={"emit_ground_truth": "true"})
    report = out["report"]
    assert report["recall"] == "1.000000"
    assert float(report["precision"]) == pytest.approx(6 / 26, abs=1e-3)
    assert 27.7 <= float(report["output_reduction_pct"]) <= 47.7

    with open(tmp_path / "report.csv", newline="") as f:
        rows = dict(csv.reader(f))
    assert rows["precision"] == report["precision"]


def test_score_counts_unique_packets():
    pkt = lambda seq, critical, dropped: {"src": "192.168.1.10", "dst": "192.168.2.20", "seq": seq,
                                          "plc_state": 1, "repetition": 125, "critical": critical,
                                          "dropped": dropped}
    packets = [pkt(s, s <= 2, True) for s in range(1, 31)] + [pkt(1, True, True)]
    s = ibh.score(packets, 1, 125)
    assert s["recall"] == 1.0
    assert s["precision"] == pytest.approx(2 / 30)
    assert s["dropped_total"] == 30

    nothing = ibh.score([pkt(1, True, False)], 1, 125)
    assert nothing["recall"] == 0.0
    assert nothing["precision"] is None


def test_bad_setting():
    with pytest.raises(ibh.ScenarioError):
        ibh.run_scenario("baseline", settings={"warp_factor": "9"})
