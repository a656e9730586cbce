"""Deterministic synthetic workloads: genesis state and per-height blocks
with controllable account skew and contract-call mix."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .accounts import AccountState, encode_account, encode_state_key
from .keccak import keccak256
from .executor import Block, Transaction
from .statedb import StateDB
from .vm import MiniProgram

GENESIS_BALANCE = 10 ** 18


@dataclass
class WorkloadSpec:
    seed: int = 1
    num_accounts: int = 1000
    num_contracts: int = 50
    block_size: int = 4000
    contract_ratio: float = 0.0
    zipf_theta: float = 0.0
    mu_target: float = 2.0
    hot_account: bool = False

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if not (0.0 <= self.contract_ratio <= 1.0):
            raise ValueError("contract_ratio must be in [0, 1]")
        if self.zipf_theta < 0:
            raise ValueError("zipf_theta must be >= 0")

    @classmethod
    def from_file(cls, path: str) -> "WorkloadSpec":
        """Plain-text ``key = value`` config; '#' starts a comment."""
        fields = {}
        types = {f: t for f, t in cls.__annotations__.items()}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, _, raw = line.partition("=")
                key = key.strip()
                raw = raw.strip()
                if key not in types:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                kind = types[key]
                if kind == "bool":
                    fields[key] = raw.lower() in ("1", "true", "yes")
                elif kind == "int":
                    fields[key] = int(raw)
                else:
                    fields[key] = float(raw)
        return cls(**fields)


def account_address(i: int) -> bytes:
    return keccak256(b"user-account-" + i.to_bytes(8, "big"))[:20]

def contract_address(i: int) -> bytes:
    return keccak256(b"contract-account-" + i.to_bytes(8, "big"))[:20]


class ZipfSampler:
    """Zipf(theta) ranks over [0, n) via inverse-CDF lookup; theta=0 is
    uniform."""

    def __init__(self, n: int, theta: float):
        self.n = n
        self.theta = theta
        if theta > 0:
            weights = 1.0 / np.power(np.arange(1, n + 1, dtype=np.float64), theta)
            self.cdf = np.cumsum(weights)
            self.cdf /= self.cdf[-1]
        else:
            self.cdf = None

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.cdf is None:
            return rng.integers(0, self.n, size=size)
        return np.searchsorted(self.cdf, rng.random(size), side="left")


def genesis(spec: WorkloadSpec, db: StateDB) -> bytes:
    """Seed accounts and contracts; deterministic in the spec seed."""
    rng = np.random.default_rng(spec.seed)
    writes: dict[bytes, bytes] = {}
    for i in range(spec.num_accounts):
        state = AccountState(balance=GENESIS_BALANCE)
        writes[account_address(i)] = encode_account(state, with_storage_root=False)
    seeds = rng.integers(1, 1000, size=(spec.num_contracts, 4))
    for i in range(spec.num_contracts):
        address = contract_address(i)
        state = AccountState(balance=0, code_hash=keccak256(b"code-" + address))
        writes[address] = encode_account(state, with_storage_root=False)
        for slot_index in range(4):
            slot = int(slot_index).to_bytes(32, "big")
            value = int(seeds[i][slot_index]).to_bytes(32, "big")
            writes[encode_state_key(address, slot)] = value
    return db.commit_block_sync(writes, 0)


def _gen_program(rng, spec: WorkloadSpec, contract_idx: int) -> MiniProgram:
    kind = int(rng.integers(0, 4))
    slot = int(rng.integers(0, 8))
    value = int(rng.integers(1, 1000))
    if kind == 0:
        instrs = (("store", ("const", slot), ("const", value)),)
    elif kind == 1:
        # counter bump: read-modify-write on one slot
        instrs = (("load", ("const", slot)), ("add", ("const", 1)),
                  ("store", ("const", slot), ("acc",)))
    elif kind == 2:
        # data-dependent slot: the written slot depends on a loaded value
        instrs = (("load", ("const", slot)),
                  ("store", ("accmod", 16), ("const", value)))
    else:
        # cross-contract call: implicit conflict invisible to batch fetching
        other = contract_address(int(rng.integers(0, spec.num_contracts)))
        instrs = (("call", other), ("load", ("const", slot)),
                  ("add", ("const", value)), ("store", ("const", slot), ("acc",)))
    return MiniProgram(instrs)


def gen_block(spec: WorkloadSpec, height: int) -> Block:
    """Deterministic in (seed, height)."""
    rng = np.random.default_rng((spec.seed << 32) ^ height)
    sampler = ZipfSampler(spec.num_accounts, spec.zipf_theta)
    senders = sampler.sample(rng, spec.block_size)
    receivers = sampler.sample(rng, spec.block_size)
    values = rng.integers(1, 1000, size=spec.block_size)
    rolls = rng.random(spec.block_size)
    txs = []
    for i in range(spec.block_size):
        sender_idx = 0 if spec.hot_account else int(senders[i])
        receiver_idx = int(receivers[i])
        if receiver_idx == sender_idx:
            receiver_idx = (receiver_idx + 1) % spec.num_accounts
        program = None
        if spec.num_contracts and rolls[i] < spec.contract_ratio:
            contract_idx = int(rng.integers(0, spec.num_contracts))
            receiver = contract_address(contract_idx)
            program = _gen_program(rng, spec, contract_idx)
        else:
            receiver = account_address(receiver_idx)
        txs.append(Transaction(index=i, sender=account_address(sender_idx),
                               receiver=receiver, value=int(values[i]),
                               program=program))
    return Block(height=height, transactions=txs)


def mean_accounts_per_tx(block: Block) -> float:
    total = 0
    for tx in block.transactions:
        touched = {tx.sender, tx.receiver}
        if tx.program is not None:
            for ins in tx.program.instructions:
                if ins[0] in ("call", "transfer"):
                    touched.add(ins[1])
        total += len(touched)
    return total / len(block.transactions)
