"""Deterministic straight-line mini-VM standing in for contract bytecode.

Programs operate on an integer accumulator and the storage of a current
contract context.  Slot expressions may depend on loaded values, so the
read/write sets of a program are only known at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

WORD = 2 ** 256

# expressions: ("const", n) | ("acc",) | ("accmod", m)
# instructions:
#   ("load", slot_expr)
#   ("store", slot_expr, value_expr)
#   ("add", value_expr) / ("sub", value_expr)
#   ("transfer", to_address, amount_expr)
#   ("call", contract_address)


@dataclass(frozen=True)
class MiniProgram:
    instructions: Tuple[tuple, ...]


def _slot_bytes(n: int) -> bytes:
    return (n % WORD).to_bytes(32, "big")


def _eval(expr: tuple, acc: int) -> int:
    op = expr[0]
    if op == "const":
        return expr[1]
    if op == "acc":
        return acc
    if op == "accmod":
        return acc % expr[1]
    raise ValueError(f"unknown expression {expr!r}")


def run_program(program: MiniProgram, view, context: bytes) -> None:
    """Execute against ``view`` with storage context starting at ``context``."""
    acc = 0
    ctx = context
    for ins in program.instructions:
        op = ins[0]
        if op == "load":
            raw = view.get(ctx, _slot_bytes(_eval(ins[1], acc)))
            acc = int.from_bytes(raw, "big") if raw else 0
        elif op == "store":
            value = _eval(ins[2], acc) % WORD
            view.set(ctx, _slot_bytes(_eval(ins[1], acc)), value.to_bytes(32, "big"))
        elif op == "add":
            acc = (acc + _eval(ins[1], acc)) % WORD
        elif op == "sub":
            acc = (acc - _eval(ins[1], acc)) % WORD
        elif op == "transfer":
            target, amount = ins[1], _eval(ins[2], acc)
            src = view.get_account(ctx)
            amount = min(amount, src.balance)  # clamp: deterministic, never fails
            src.balance -= amount
            view.set_account(ctx, src)
            dst = view.get_account(target)
            dst.balance += amount
            view.set_account(target, dst)
        elif op == "call":
            ctx = ins[1]
            view.get(ctx)  # callee account enters the read set
        else:
            raise ValueError(f"unknown instruction {ins!r}")
