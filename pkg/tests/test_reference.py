import numpy as np

from chainsim.reference import (MicroInstance, compare_on_instances, random_instance,
                                run_engine_on_instance, run_reference)


def test_hand_checked_instance():
    # one warm batch-2 container, two simultaneous-ish arrivals, 10 ms stage
    inst = MicroInstance(
        chains={"c0": (("m0", 1000),)},          # 10 ms MET
        chain_slack_cms={"c0": 2500},            # batch floor(2.5) = 2
        arrivals=((0, "c0"), (100, "c0")),       # t=0 ms and t=1 ms
        warm_containers={"m0": 1},
        batch={"m0": 2},
        cold_cms={"m0": 10_000},
        spawn_on_demand=False,
    )
    completions, spawned = run_reference(inst)
    assert spawned == 0
    assert completions[0] == 1000          # 10 ms
    assert completions[1] == 2000          # queued behind the first

    eng, eng_spawned = run_engine_on_instance(inst)
    assert eng_spawned == 0
    assert abs(eng[0] - 10.0) < 0.011 and abs(eng[1] - 20.0) < 0.011


def test_one_to_one_spawns_per_request():
    inst = MicroInstance(
        chains={"c0": (("m0", 500),)},
        chain_slack_cms={"c0": 750},
        arrivals=((0, "c0"), (7, "c0"), (14, "c0")),
        warm_containers={},
        batch={"m0": 1},
        cold_cms={"m0": 5000},  # 50 ms cold
        spawn_on_demand=True,
    )
    completions, spawned = run_reference(inst)
    assert spawned == 3
    eng, eng_spawned = run_engine_on_instance(inst)
    assert eng_spawned == 3
    for rid, cms in completions.items():
        assert abs(eng[rid] - cms / 100.0) < 0.011


def test_generated_instances_are_well_formed():
    rng = np.random.default_rng(7)
    for _ in range(20):
        inst = random_instance(rng)
        times = [t for t, _ in inst.arrivals]
        assert len(set(times)) == len(times)
        assert all(cid in inst.chains for _, cid in inst.arrivals)
        completions, _ = run_reference(inst)
        assert len(completions) == len(inst.arrivals)
        assert all(c >= t for c, (t, _) in zip(
            (completions[i] for i in range(len(inst.arrivals))), inst.arrivals))


def test_engine_matches_reference_on_sample():
    assert compare_on_instances(n_instances=15, seed=99) == []
