"""Builders for weight-constrained binary Markov chains.

Three families, all emitting x natively as the observation (y == x):

  * prefix chain: states are the completable prefixes of one period; every
    length-b period block has weight exactly a, and all such blocks are
    equiprobable;
  * condensed chain: prefix states of equal phase and weight merged into
    (phase, weight) pairs; same sequence law as the prefix chain;
  * mod chain: tracks the running weight modulo b with a half/half
    self-loop/advance rule; aperiodic, used with boundary states 0 -> a to pin
    the weight residue;
  * window chain: condensed-style states whose per-period weight stays inside
    a rational window [alpha, beta].

Edge probabilities are ratios of completion counts, kept as exact fractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BadWeight, EmptyEvent, TooLarge, Unsatisfiable
from .process import FimProcess, stationary_distribution

ENUMERATION_LIMIT = 20

ROOT = "ε"  # the empty-prefix state label


def _comb(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    return math.comb(n, k)


@dataclass(frozen=True)
class WeightConstraint:
    """Weight law for one chain: exact fraction a/b, window [alpha, beta], or
    residue a mod b."""

    kind: str  # "exact_fraction" | "weight_window" | "mod_residue"
    b: int
    a: int | None = None
    alpha: Fraction | None = None
    beta: Fraction | None = None

    def __post_init__(self):
        if self.kind not in ("exact_fraction", "weight_window", "mod_residue"):
            raise BadWeight(f"unknown constraint kind {self.kind!r}")
        if self.b < 1:
            raise BadWeight(f"period {self.b} must be positive")
        if self.kind in ("exact_fraction", "mod_residue"):
            if self.a is None or not 0 <= self.a <= self.b:
                raise BadWeight(f"weight {self.a!r} outside 0..{self.b}")
        if self.kind == "weight_window":
            lo, hi = self.alpha, self.beta
            if lo is None or hi is None or not (0 <= lo <= hi <= 1):
                raise BadWeight(f"empty or invalid window [{lo}, {hi}]")
            if math.ceil(lo * self.b) > math.floor(hi * self.b):
                raise BadWeight(
                    f"window [{lo}, {hi}] admits no weight at period {self.b}")

    def target_weights(self, n_bits: int, rounding: str = "floor"):
        """Admissible total weights for a length-n_bits sequence."""
        if self.kind == "exact_fraction":
            exact = Fraction(self.a * n_bits, self.b)
            t = math.floor(exact) if rounding == "floor" else math.ceil(exact)
            return range(t, t + 1)
        if self.kind == "weight_window":
            return range(math.ceil(self.alpha * n_bits),
                         math.floor(self.beta * n_bits) + 1)
        return range(self.a % self.b, n_bits + 1, self.b)

    def check(self, x, rounding: str = "floor") -> bool:
        return sum(int(v) for v in x) in self.target_weights(len(x), rounding)

    def to_meta(self) -> dict:
        out = {"kind": self.kind, "b": self.b}
        if self.a is not None:
            out["a"] = self.a
        if self.alpha is not None:
            out["alpha"] = str(self.alpha)
            out["beta"] = str(self.beta)
        return out

    @staticmethod
    def from_meta(meta: dict) -> "WeightConstraint":
        c = meta.get("constraint")
        if not c:
            raise BadWeight("chain carries no weight-constraint metadata")
        return WeightConstraint(
            kind=c["kind"], b=int(c["b"]),
            a=int(c["a"]) if "a" in c else None,
            alpha=Fraction(c["alpha"]) if "alpha" in c else None,
            beta=Fraction(c["beta"]) if "beta" in c else None,
        )


def _native(transitions, states, constraint: WeightConstraint, builder: str) -> FimProcess:
    return FimProcess.from_transitions(
        [(s, x, str(x), d, p) for (s, x, d, p) in transitions],
        states=states, obs=("0", "1"),
        meta={"builder": builder, "constraint": constraint.to_meta()},
    )


def build_prefix_chain(b: int, a: int) -> FimProcess:
    """Chain whose states are the completable period prefixes themselves.

    A prefix u (weight w, length l) admits input x with probability
    C(b-l-1, a-w-x) / C(b-l, a-w): the fraction of valid completions that
    start with x. Every length-b block then has weight exactly a and all
    C(b, a) blocks are equiprobable.
    """
    if not 0 <= a <= b or b < 1:
        raise BadWeight(f"weight {a} per period {b} is impossible")
    states: list[str] = []
    for level in range(b):
        for code in range(1 << level):
            u = format(code, f"0{level}b") if level else ""
            w = u.count("1")
            if max(0, a - (b - level)) <= w <= min(level, a):
                states.append(u if u else ROOT)
    transitions = []
    for s in states:
        u = "" if s == ROOT else s
        level, w = len(u), u.count("1")
        denom = _comb(b - level, a - w)
        for x in (0, 1):
            num = _comb(b - level - 1, a - w - x)
            if num == 0:
                continue
            nxt = u + str(x)
            dst = ROOT if len(nxt) == b else nxt
            transitions.append((s, x, dst, Fraction(num, denom)))
    constraint = WeightConstraint("exact_fraction", b, a)
    return _native(transitions, states, constraint, "prefix")


def _pair_label(phase: int, w: int) -> str:
    return f"({phase},{w})"


def build_condensed_chain(b: int, a: int) -> FimProcess:
    """Prefix chain with states of equal phase and weight merged."""
    if not 0 < a < b:
        raise BadWeight(f"weight {a} per period {b} leaves nothing to merge")
    states = []
    for phase in range(b):
        for w in range(max(0, a - (b - phase)), min(phase, a) + 1):
            states.append(_pair_label(phase, w))
    transitions = []
    for phase in range(b):
        for w in range(max(0, a - (b - phase)), min(phase, a) + 1):
            denom = _comb(b - phase, a - w)
            for x in (0, 1):
                num = _comb(b - phase - 1, a - w - x)
                if num == 0:
                    continue
                dst = _pair_label(0, 0) if phase == b - 1 else _pair_label(phase + 1, w + x)
                transitions.append(
                    (_pair_label(phase, w), x, dst, Fraction(num, denom)))
    constraint = WeightConstraint("exact_fraction", b, a)
    return _native(transitions, states, constraint, "condensed")


def build_mod_chain(b: int, a: int = 0) -> FimProcess:
    """Aperiodic chain tracking the running weight modulo b.

    Input 0 keeps the state (probability 1/2), input 1 advances it. Pinning the
    start state to 0 and the final state to a forces weight congruent to a
    modulo b; the residue a is recorded in the constraint metadata.
    """
    if b < 1:
        raise BadWeight(f"modulus {b} must be positive")
    states = [str(j) for j in range(b)]
    transitions = []
    for j in range(b):
        transitions.append((states[j], 0, states[j], Fraction(1, 2)))
        transitions.append((states[j], 1, states[(j + 1) % b], Fraction(1, 2)))
    constraint = WeightConstraint("mod_residue", b, a % b)
    return _native(transitions, states, constraint, "mod")


def build_window_chain(b: int, alpha, beta) -> FimProcess:
    """Condensed-style chain whose per-period weight lies in [alpha*b, beta*b].

    Edge probabilities are completion-count ratios, so all admissible period
    blocks are equiprobable. Sequences keep alpha*t <= weight <= beta*t at
    every period boundary t; partial periods are handled by final_state_set.
    """
    constraint = WeightConstraint(
        "weight_window", b, alpha=Fraction(alpha), beta=Fraction(beta))
    lo = math.ceil(constraint.alpha * b)
    hi = math.floor(constraint.beta * b)

    def count(phase: int, w: int) -> int:
        return sum(_comb(b - phase, t - w) for t in range(lo, hi + 1))

    reachable = {(0, 0)}
    for phase in range(b - 1):
        for (ph, w) in [p for p in reachable if p[0] == phase]:
            for x in (0, 1):
                if count(phase + 1, w + x) > 0:
                    reachable.add((phase + 1, w + x))
    states = [_pair_label(ph, w) for (ph, w) in sorted(reachable)]
    transitions = []
    for (ph, w) in sorted(reachable):
        denom = count(ph, w)
        for x in (0, 1):
            if ph == b - 1:
                num = 1 if lo <= w + x <= hi else 0
                dst = _pair_label(0, 0)
            else:
                num = count(ph + 1, w + x)
                dst = _pair_label(ph + 1, w + x)
            if num:
                transitions.append((_pair_label(ph, w), x, dst, Fraction(num, denom)))
    return _native(transitions, states, constraint, "window")


def final_state_set(
    proc: FimProcess, n_bits: int, rounding: str = "floor",
    constraint: WeightConstraint | None = None,
) -> tuple[str, ...]:
    """States a length-n_bits sequence must end in to honor the constraint.

    For exact-fraction chains the total target weight is floor or ceil of
    a*n/b per the rounding flag; for windows the partial period must keep the
    running weight inside [alpha*r, beta*r]; for mod chains the final state is
    the residue itself.
    """
    builder = proc.meta.get("builder")
    if constraint is None:
        constraint = WeightConstraint.from_meta(proc.meta)
    if builder == "mod":
        label = str(constraint.a % constraint.b)
        if label not in proc.state_index:
            raise Unsatisfiable(f"state {label} missing from mod chain")
        return (label,)
    b = constraint.b
    k, r = divmod(n_bits, b)
    out: list[str] = []
    if constraint.kind == "exact_fraction":
        targets = constraint.target_weights(n_bits, rounding)
        want = targets[0] - k * constraint.a
        for s in proc.states:
            ph, w = _decode_phase_weight(proc, s)
            if ph == r and w == want:
                out.append(s)
    elif constraint.kind == "weight_window":
        lo = math.ceil(constraint.alpha * r)
        hi = math.floor(constraint.beta * r)
        for s in proc.states:
            ph, w = _decode_phase_weight(proc, s)
            if ph == r and lo <= w <= hi:
                out.append(s)
    else:
        raise Unsatisfiable(f"no final-state rule for builder {builder!r}")
    if not out:
        raise Unsatisfiable(
            f"no state of phase {r} meets the weight constraint at N={n_bits}")
    return tuple(out)


def _decode_phase_weight(proc: FimProcess, label: str) -> tuple[int, int]:
    if proc.meta.get("builder") == "prefix":
        u = "" if label == ROOT else label
        return len(u), u.count("1")
    ph, w = label.strip("()").split(",")
    return int(ph), int(w)


def enumerate_support(
    proc: FimProcess, psi0, psiN, n_bits: int, exact: bool = False,
):
    """Exhaustive conditional law P(X = x | start in psi0, end in psiN).

    Depth-first walk over input sequences with running state-mass vectors and
    zero pruning; observations are marginalized. With exact=True all
    arithmetic, including the stationary prior when psi0 has several states,
    is done in fractions.
    """
    if n_bits > ENUMERATION_LIMIT:
        raise TooLarge(f"support enumeration capped at N={ENUMERATION_LIMIT}")
    si = proc.state_index
    m = proc.n_states
    finals = [si[s] for s in psiN]
    if exact:
        mats = proc.exact_input_matrices
        zero, start = Fraction(0), [Fraction(0)] * m
        if len(psi0) == 1:
            start[si[psi0[0]]] = Fraction(1)
        else:
            pi = stationary_distribution(proc, exact=True).exact_vector(proc)
            for s in psi0:
                start[si[s]] = pi[si[s]]

        def step(vec, x):
            mat = mats[x]
            return [sum(vec[i] * mat[i][j] for i in range(m) if vec[i]) for j in range(m)]
    else:
        mats = proc.input_matrices
        zero = 0.0
        start = np.zeros(m)
        if len(psi0) == 1:
            start[si[psi0[0]]] = 1.0
        else:
            pi = stationary_distribution(proc).vector(proc)
            for s in psi0:
                start[si[s]] = float(pi[si[s]])

        def step(vec, x):
            return vec @ mats[x]

    support: dict[tuple[int, ...], object] = {}

    def walk(prefix: list[int], vec) -> None:
        if len(prefix) == n_bits:
            mass = sum(vec[j] for j in finals)
            if mass > zero:
                support[tuple(prefix)] = mass
            return
        for x in (0, 1):
            nxt = step(vec, x)
            if any(v > zero for v in nxt):
                prefix.append(x)
                walk(prefix, nxt)
                prefix.pop()

    walk([], start)
    total = sum(support.values())
    if not support or total <= zero:
        raise EmptyEvent("boundary event has probability zero")
    return {x: mass / total for x, mass in support.items()}
