import random

import pytest

from harness import (build_random_processes, lmk_equivalence_case,
                     oomk_equivalence_case, small_pool)

from vnodesim import frames as fr
from vnodesim.frames import alloc_frames
from vnodesim.killers import (DEFAULT_ADJ_LADDER, DEFAULT_MINFREE, KillerConfigError,
                              LmkConfig, execute_kill, lmk_scan, oom_badness,
                              oomk_select)
from vnodesim.lifecycle import DeadProcess, LifecycleState, Process, Trust
from vnodesim.reclaim import LruState

S = LifecycleState


def proc(pid, state, alive=True):
    from vnodesim.lifecycle import DEFAULT_ADJ_TABLE
    return Process(pid=pid, name=f"p{pid}", trust=Trust.OFFICIAL, state=state,
                   adj=DEFAULT_ADJ_TABLE[state], alive=alive)


def pool_with_residents(residents, total=524288):
    """residents: {pid: (anon, file)} on a single node."""
    pool = small_pool([total])
    lru = LruState(pool)
    for pid, (anon, file) in residents.items():
        if anon:
            alloc_frames(pool, 0, anon, pid, fr.ANON, lru=lru)
        if file:
            alloc_frames(pool, 0, file, pid, fr.FILE_CLEAN, lru=lru)
    return pool, lru


class TestLmkConfig:
    def test_defaults_valid(self):
        cfg = LmkConfig()
        assert cfg.minfree == DEFAULT_MINFREE
        assert cfg.minfree[-1] == 85760  # 335 MiB top rung

    def test_ladder_shape_enforced(self):
        with pytest.raises(KillerConfigError):
            LmkConfig(minfree=(10, 5), adj_ladder=(9, 0))
        with pytest.raises(KillerConfigError):
            LmkConfig(minfree=(5, 10), adj_ladder=(0, 9))
        with pytest.raises(KillerConfigError):
            LmkConfig(minfree=(5, 10), adj_ladder=(9,))


class TestLmkScan:
    def test_fires_below_top_rung_picks_cached_over_foreground(self):
        # 312.5 MiB free, file low: below the 335 MiB rung, so everyone is a
        # candidate; the cached app must win over the foreground one.
        residents = {1: (10000, 0), 2: (30000, 0)}
        pool, _ = pool_with_residents(residents)
        procs = {1: proc(1, S.CACHED), 2: proc(2, S.FOREGROUND)}
        burn = 524288 - 40000 - 80000  # leave exactly 80000 free
        alloc_frames(pool, 0, burn, 99, fr.ANON)
        procs[99] = proc(99, S.SERVICE)
        assert pool.free_count[0] == 80000
        assert lmk_scan(pool, procs, LmkConfig()) == 1

    def test_above_all_rungs_returns_none(self):
        pool, _ = pool_with_residents({1: (1000, 0)})
        procs = {1: proc(1, S.CACHED)}
        assert lmk_scan(pool, procs, LmkConfig()) is None

    def test_big_file_count_blocks_firing(self):
        # Free below the rung but the page cache above it: no kill.
        pool, _ = pool_with_residents({1: (400000, 0), 2: (0, 100000)})
        procs = {1: proc(1, S.CACHED), 2: proc(2, S.SERVICE)}
        assert pool.free_count[0] == 524288 - 500000 < 85760
        assert pool.file_count[0] == 100000 > 85760
        assert lmk_scan(pool, procs, LmkConfig()) is None

    def test_tie_break_largest_resident_then_pid(self):
        pool, _ = pool_with_residents({4: (445000, 0), 5: (1000, 0),
                                       6: (3000, 0)})
        procs = {4: proc(4, S.SERVICE), 5: proc(5, S.CACHED),
                 6: proc(6, S.CACHED)}
        assert lmk_scan(pool, procs, LmkConfig()) == 6  # 3000 > 1000
        pool2, _ = pool_with_residents({4: (445000, 0), 5: (3000, 0),
                                        6: (3000, 0)})
        assert lmk_scan(pool2, procs, LmkConfig()) == 5  # tie -> lowest pid

    def test_per_node_scope(self):
        pool = small_pool([4096, 4096])
        lru = LruState(pool)
        alloc_frames(pool, 0, 4000, 1, fr.ANON, lru=lru)
        alloc_frames(pool, 1, 100, 2, fr.ANON, lru=lru)
        procs = {1: proc(1, S.CACHED), 2: proc(2, S.CACHED)}
        cfg = LmkConfig(minfree=(200,), adj_ladder=(0,), scope="per_node")
        assert lmk_scan(pool, procs, cfg, node=0) == 1
        assert lmk_scan(pool, procs, cfg, node=1) is None  # 3996 free


class TestBadness:
    def test_adj_zero_identity(self):
        pool, _ = pool_with_residents({1: (1000, 0)})
        assert oom_badness(pool, proc(1, S.FOREGROUND)) == 1000

    def test_adj_nine_doubles_nine_times(self):
        pool, _ = pool_with_residents({1: (1000, 0)})
        assert oom_badness(pool, proc(1, S.CACHED)) == 1000 * 512

    def test_dead_process_rejected(self):
        pool, _ = pool_with_residents({1: (1000, 0)})
        with pytest.raises(DeadProcess):
            oom_badness(pool, proc(1, S.CACHED, alive=False))


class TestOomkSelect:
    def test_argmax(self):
        pool, _ = pool_with_residents({1: (1000, 0), 2: (1000, 0)})
        procs = {1: proc(1, S.FOREGROUND), 2: proc(2, S.CACHED)}
        assert oomk_select(pool, procs) == 2

    def test_empty_candidates(self):
        pool, _ = pool_with_residents({})
        assert oomk_select(pool, {1: proc(1, S.CACHED)}) is None

    def test_equal_badness_lowest_pid(self):
        pool, _ = pool_with_residents({4: (1000, 0), 7: (1000, 0)})
        procs = {4: proc(4, S.CACHED), 7: proc(7, S.CACHED)}
        assert oomk_select(pool, procs) == 4

    def test_dead_excluded(self):
        pool, _ = pool_with_residents({1: (5000, 0), 2: (10, 0)})
        procs = {1: proc(1, S.CACHED, alive=False), 2: proc(2, S.CACHED)}
        assert oomk_select(pool, procs) == 2


class TestExecuteKill:
    def test_kill_releases_all_resident(self):
        pool, lru = pool_with_residents({1: (20000, 5600)})
        p = proc(1, S.CACHED)
        free_before = pool.free_count[0]
        rec = execute_kill(pool, p, lru, tick=42, killer="lmk", scope="global")
        assert rec.frames_released == 25600
        assert pool.free_count[0] == free_before + 25600
        assert not p.alive
        assert pool.resident(1) == (0, 0)
        lru.check()

    def test_kill_then_scan_finds_nothing(self):
        pool, lru = pool_with_residents({1: (450000, 0), 2: (30000, 0)})
        procs = {1: proc(1, S.CACHED), 2: proc(2, S.CACHED)}
        victim = lmk_scan(pool, procs, LmkConfig())
        assert victim == 1
        execute_kill(pool, procs[victim], lru, 0, "lmk", "global")
        assert lmk_scan(pool, procs, LmkConfig()) is None

    def test_kill_dead_rejected(self):
        pool, lru = pool_with_residents({1: (10, 0)})
        p = proc(1, S.CACHED, alive=False)
        with pytest.raises(DeadProcess):
            execute_kill(pool, p, lru, 0, "lmk", "global")


class TestSelectionEquivalence:
    def test_lmk_matches_brute_force_800(self):
        rng = random.Random(0x1AC)
        for _ in range(800):
            lmk_equivalence_case(rng)

    def test_oomk_matches_brute_force_800(self):
        rng = random.Random(0x0031)
        for _ in range(800):
            oomk_equivalence_case(rng)


class TestScalingInvariance:
    def test_oomk_victim_invariant_under_resident_scaling(self):
        rng = random.Random(77)
        for _ in range(150):
            n = rng.randint(1, 12)
            base = {pid: (rng.randint(1, 40), rng.randint(0, 40))
                    for pid in rng.sample(range(1, 60), n)}
            states = {pid: rng.choice(list(S)) for pid in base}
            victims = []
            for k in (1, 2, 5):
                scaled = {pid: (a * k, f * k) for pid, (a, f) in base.items()}
                pool, _ = pool_with_residents(scaled, total=65536)
                procs = {pid: proc(pid, states[pid]) for pid in scaled}
                victims.append(oomk_select(pool, procs))
            assert victims[0] == victims[1] == victims[2]
