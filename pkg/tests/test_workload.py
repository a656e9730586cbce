import math

import pytest

from blockexec.kvstore import MemoryStore
from blockexec.statedb import StateDB
from blockexec.trie import Branch, Extension
from blockexec.workload import (
    WorkloadSpec,
    ZipfSampler,
    account_address,
    gen_block,
    genesis,
    mean_accounts_per_tx,
)

import numpy as np


def test_spec_validation():
    with pytest.raises(ValueError):
        WorkloadSpec(block_size=0)
    with pytest.raises(ValueError):
        WorkloadSpec(contract_ratio=1.5)
    with pytest.raises(ValueError):
        WorkloadSpec(zipf_theta=-1)


def test_spec_from_file(tmp_path):
    path = tmp_path / "wl.cfg"
    path.write_text("# comment\nnum_accounts = 42\nzipf_theta = 0.8\n"
                    "hot_account = true\nblock_size = 10  # inline\n")
    spec = WorkloadSpec.from_file(str(path))
    assert spec.num_accounts == 42
    assert spec.zipf_theta == 0.8
    assert spec.hot_account is True
    assert spec.block_size == 10


def test_spec_from_file_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("bogus = 1\n")
    with pytest.raises(ValueError):
        WorkloadSpec.from_file(str(path))


def test_block_determinism():
    spec = WorkloadSpec(num_accounts=100, num_contracts=5, block_size=50,
                        contract_ratio=0.3)
    b1 = gen_block(spec, 7)
    b2 = gen_block(spec, 7)
    for t1, t2 in zip(b1.transactions, b2.transactions):
        assert (t1.sender, t1.receiver, t1.value, t1.program) == \
               (t2.sender, t2.receiver, t2.value, t2.program)
    b3 = gen_block(spec, 8)
    assert any(t1.sender != t3.sender
               for t1, t3 in zip(b1.transactions, b3.transactions))


def test_genesis_deterministic_root():
    spec = WorkloadSpec(num_accounts=80, num_contracts=4)
    db1 = StateDB(MemoryStore())
    db2 = StateDB(MemoryStore())
    assert genesis(spec, db1) == genesis(spec, db2)


def test_genesis_single_account():
    spec = WorkloadSpec(num_accounts=1, num_contracts=0)
    db = StateDB(MemoryStore())
    genesis(spec, db)
    assert db.get_account(account_address(0)).balance > 0


def test_zipf_theta_zero_is_uniform():
    # chi-square over 10^5 draws across 50 bins
    sampler = ZipfSampler(50, 0.0)
    rng = np.random.default_rng(5)
    draws = sampler.sample(rng, 100_000)
    counts = np.bincount(draws, minlength=50)
    expected = 100_000 / 50
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # df=49: 99.9th percentile is ~85; anything near that is uniform enough
    assert chi2 < 90


def test_zipf_skew_concentrates_mass():
    sampler = ZipfSampler(1000, 1.2)
    rng = np.random.default_rng(5)
    draws = sampler.sample(rng, 50_000)
    top10 = (draws < 10).mean()
    assert top10 > 0.3  # heavy head under strong skew


def test_contract_ratio_zero_is_pure_transfers():
    spec = WorkloadSpec(num_accounts=100, block_size=200, contract_ratio=0.0)
    block = gen_block(spec, 1)
    assert all(t.program is None for t in block.transactions)
    assert all(t.sender != t.receiver for t in block.transactions)


def test_mean_accounts_per_tx_near_target():
    spec = WorkloadSpec(num_accounts=2000, block_size=4000, mu_target=2.0)
    block = gen_block(spec, 1)
    mean = mean_accounts_per_tx(block)
    assert abs(mean - spec.mu_target) / spec.mu_target < 0.1


def test_hot_account_single_sender():
    spec = WorkloadSpec(num_accounts=100, block_size=50, hot_account=True)
    block = gen_block(spec, 1)
    assert {t.sender for t in block.transactions} == {account_address(0)}


def test_genesis_level_census():
    # with 65536 uniformly hashed accounts, trie levels 0-3 must be fully
    # populated branches (the deep-level assumption behind commit points);
    # P(any empty level-3 slot) ~ 4096 * e^-16, negligible
    spec = WorkloadSpec(num_accounts=65536, num_contracts=0)
    db = StateDB(MemoryStore())
    genesis(spec, db)

    def census(ref, level):
        if level == 3:
            return 1
        assert isinstance(ref, Branch), f"level {level} not a branch"
        assert all(c is not None for c in ref.children), f"level {level} sparse"
        return sum(census(c, level + 1) for c in ref.children)

    root = db.account_trie.root
    assert not isinstance(root, Extension)
    assert census(root, 0) == 16 ** 3
