"""Prefix-encoded expression trees over the volatility terminal/function set.

A tree is an immutable tuple of symbol names in prefix order, e.g.
``("pdiv", "ck", "sub", "sk", "tau")`` for ``ck / (sk - tau)``.  Flat
tuples are cheap to copy and hash, which the fitness cache relies on.
"""

from __future__ import annotations

import re

import numpy as np
from scipy.special import ndtr

TERMINALS = ("ck", "sk", "tau")
FUNCTIONS = ("add", "sub", "mul", "pdiv", "cos", "sin", "pln", "exp", "psqrt", "ncdf")
ARITY = {"add": 2, "sub": 2, "mul": 2, "pdiv": 2,
         "cos": 1, "sin": 1, "pln": 1, "exp": 1, "psqrt": 1, "ncdf": 1,
         "ck": 0, "sk": 0, "tau": 0}
SYMBOLS = FUNCTIONS + TERMINALS

MAX_DEPTH = 17
EXP_CLAMP = 700.0
# magnitude cap on node outputs: squares of capped values summed over any
# realistic dataset stay far below float overflow
VALUE_CAP = 1e100


def _cap(x):
    return np.clip(x, -VALUE_CAP, VALUE_CAP)


def protected_div(x, y):
    """``x / y`` with ``x / 0 = 1``."""
    zero = y == 0
    return _cap(np.where(zero, 1.0, x / np.where(zero, 1.0, y)))


def protected_log(x):
    """``ln|x|`` with ``ln 0 = 0``."""
    zero = x == 0
    return np.where(zero, 0.0, np.log(np.abs(np.where(zero, 1.0, x))))


def protected_sqrt(x):
    return np.sqrt(np.abs(x))


def clamped_exp(x):
    return _cap(np.exp(np.clip(x, -EXP_CLAMP, EXP_CLAMP)))


def protected_mul(x, y):
    return _cap(x * y)


PRIMITIVES = {
    "add": np.add,
    "sub": np.subtract,
    "mul": protected_mul,
    "pdiv": protected_div,
    "cos": np.cos,
    "sin": np.sin,
    "pln": protected_log,
    "exp": clamped_exp,
    "psqrt": protected_sqrt,
    "ncdf": ndtr,
}


class ExprTree:
    """Immutable prefix-order tree; equality and hashing follow ``nodes``.

    ``depth`` counts the root as 0, so a lone terminal has depth 0.  Per-node
    depths are kept alongside the nodes; subtree end offsets are computed
    lazily.
    """

    __slots__ = ("nodes", "_depths", "_ends", "depth")

    def __init__(self, nodes, depths=None):
        nodes = tuple(nodes)
        if not nodes:
            raise ValueError("empty expression tree")
        self.nodes = nodes
        self._depths = node_depths(nodes) if depths is None else tuple(depths)
        self._ends = None
        self.depth = max(self._depths)

    def __eq__(self, other):
        return isinstance(other, ExprTree) and self.nodes == other.nodes

    def __hash__(self):
        return hash(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"ExprTree({to_prefix(self)!r})"

    def __str__(self) -> str:
        return to_prefix(self)

    def node_depths(self) -> tuple[int, ...]:
        return self._depths

    @property
    def ends(self) -> tuple[int, ...]:
        """``ends[i]`` is one past the last node of the subtree rooted at ``i``."""
        if self._ends is None:
            self._ends = subtree_ends(self.nodes)
        return self._ends

    def subtree_end(self, i: int) -> int:
        return self.ends[i]

    def subtree(self, i: int) -> "ExprTree":
        j = self.ends[i]
        base = self._depths[i]
        return ExprTree(self.nodes[i:j], [d - base for d in self._depths[i:j]])

    def replace(self, i: int, sub: "ExprTree") -> "ExprTree":
        """Copy of this tree with the subtree at ``i`` swapped for ``sub``."""
        j = self.ends[i]
        base = self._depths[i]
        depths = self._depths[:i] + tuple(d + base for d in sub._depths) + self._depths[j:]
        child = ExprTree(self.nodes[:i] + sub.nodes + self.nodes[j:], depths)
        shift = len(sub.nodes) - (j - i)
        child._ends = (tuple(e + shift if e >= j else e for e in self.ends[:i])
                       + tuple(e + i for e in sub.ends)
                       + tuple(e + shift for e in self.ends[j:]))
        return child


def subtree_end(nodes: tuple[str, ...], i: int) -> int:
    """Index one past the subtree rooted at ``i``."""
    need = 1
    j = i
    while need:
        need += ARITY[nodes[j]] - 1
        j += 1
    return j


def subtree_ends(nodes: tuple[str, ...]) -> tuple[int, ...]:
    ends = [0] * len(nodes)
    stack = []  # end offsets of completed subtrees, nearest first on top
    for i in range(len(nodes) - 1, -1, -1):
        a = ARITY[nodes[i]]
        if a == 0:
            ends[i] = i + 1
        else:
            for _ in range(a - 1):
                stack.pop()
            ends[i] = stack.pop()
        stack.append(ends[i])
    return tuple(ends)


def node_depths(nodes: tuple[str, ...]) -> tuple[int, ...]:
    """Depth of every node; raises if arities do not close the tree."""
    depths = [0] * len(nodes)
    stack = [0]  # depth of each pending child slot
    for k, sym in enumerate(nodes):
        if not stack:
            raise ValueError("trailing nodes after a complete tree")
        d = stack.pop()
        depths[k] = d
        a = ARITY.get(sym)
        if a is None:
            raise ValueError(f"unknown symbol {sym!r}")
        if a:
            stack += [d + 1] * a
    if stack:
        raise ValueError("incomplete tree: missing arguments")
    return tuple(depths)


def is_valid(tree: ExprTree) -> bool:
    try:
        node_depths(tree.nodes)
    except (ValueError, KeyError, IndexError):
        return False
    return True


def evaluate(tree: ExprTree, ck, sk, tau) -> np.ndarray:
    """Vectorised evaluation; every output is finite for finite inputs."""
    ck, sk, tau = (np.asarray(a, dtype=float) for a in (ck, sk, tau))
    shape = np.broadcast(ck, sk, tau).shape
    leaves = {"ck": ck, "sk": sk, "tau": tau}
    stack = []
    with np.errstate(all="ignore"):
        for sym in reversed(tree.nodes):
            arity = ARITY[sym]
            if arity == 0:
                stack.append(leaves[sym])
            elif arity == 1:
                stack.append(PRIMITIVES[sym](stack.pop()))
            else:
                left = stack.pop()
                stack.append(PRIMITIVES[sym](left, stack.pop()))
    return np.broadcast_to(stack[0], shape)


def eval_tree(tree: ExprTree, case):
    """Evaluate on a single ``FitnessCase`` (returns float) or a ``CaseSet``."""
    if hasattr(case, "c_over_k"):
        return float(evaluate(tree, case.c_over_k, case.s_over_k, case.tau))
    return evaluate(tree, case.ck, case.sk, case.tau)


# ----------------------------------------------------------------------------
# serialization

def to_prefix(tree: ExprTree) -> str:
    """Parenthesised prefix string, e.g. ``(pdiv ck (sub sk tau))``."""
    out = []
    pending = []  # remaining argument count of each open function
    for sym in tree.nodes:
        if ARITY[sym]:
            out.append("(" + sym)
            pending.append(ARITY[sym])
        else:
            out.append(sym)
            while pending:
                pending[-1] -= 1
                if pending[-1]:
                    break
                pending.pop()
                out[-1] += ")"
    return " ".join(out)


_TOKEN = re.compile(r"\(|\)|[A-Za-z_]+")


def parse_prefix(text: str) -> ExprTree:
    tokens = _TOKEN.findall(text)
    if "".join(tokens) != re.sub(r"\s+", "", text):
        raise ValueError(f"unexpected characters in expression {text!r}")
    pos = 0
    nodes: list[str] = []

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of expression")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            if pos >= len(tokens):
                raise ValueError("unexpected end of expression")
            sym = tokens[pos].lower()
            pos += 1
            if ARITY.get(sym, 0) == 0:
                raise ValueError(f"{sym!r} is not a function symbol")
            nodes.append(sym)
            for _ in range(ARITY[sym]):
                parse()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise ValueError(f"arity mismatch for {sym!r}")
            pos += 1
        else:
            sym = tok.lower()
            if ARITY.get(sym) != 0:
                raise ValueError(f"{tok!r} is not a terminal symbol")
            nodes.append(sym)

    parse()
    if pos != len(tokens):
        raise ValueError(f"trailing tokens in expression {text!r}")
    return ExprTree(tuple(nodes))


def to_infix(tree: ExprTree) -> str:
    """Human-readable infix rendering (not parseable back)."""
    names = {"ck": "C/K", "sk": "S/K", "tau": "tau"}
    ops = {"add": "+", "sub": "-", "mul": "*", "pdiv": "%"}
    stack = []
    for sym in reversed(tree.nodes):
        if ARITY[sym] == 0:
            stack.append(names[sym])
        elif ARITY[sym] == 1:
            stack.append(f"{sym}({stack.pop()})")
        else:
            left = stack.pop()
            stack.append(f"({left} {ops[sym]} {stack.pop()})")
    return stack[0]
