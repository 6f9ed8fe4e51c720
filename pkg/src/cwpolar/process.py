"""Stationary finite-state Markov input processes with binary inputs.

A process emits, per step, a binary input x, an observation y, and moves to a
next state, with probabilities P(x, y, s' | s) attached to the current state s.
The library works with irreducible (possibly periodic) processes; the period p
factors as p = d * q with d a power of two, and states split into the d phase
classes used by the block conditioning events:

  * phase class delta: states whose phase is congruent to delta mod d;
  * boundary event: start state in psi_0 and end state in psi_N after N steps.

Probabilities are kept as exact fractions on each transition and compiled to
float64 tensors for numeric work; the exact values feed the rational oracle
paths and the chain file format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    BadChannel,
    BadLength,
    BadRowSum,
    EmptyEvent,
    BadFile,
    NotYetMixed,
    Reducible,
    Singular,
)

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10


class Transition(NamedTuple):
    src: str
    x: int
    y: str
    dst: str
    prob: Fraction


def _as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, (int, str)):
        return Fraction(p)
    if isinstance(p, float):
        return Fraction(p)
    raise TypeError(f"unsupported probability type {type(p)!r}")


@dataclass(frozen=True)
class FimProcess:
    """Finite-state input/observation Markov process.

    states and obs fix the (deterministic) index order used by every compiled
    array and output file. meta carries builder bookkeeping such as the weight
    constraint, and is not consulted by the numeric core.
    """

    states: tuple[str, ...]
    obs: tuple[str, ...]
    transitions: tuple[Transition, ...]
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @staticmethod
    def from_transitions(
        transitions: Iterable[tuple], states: Sequence[str] | None = None,
        obs: Sequence[str] | None = None, meta: dict | None = None,
    ) -> "FimProcess":
        recs = [Transition(str(s), int(x), str(y), str(d), _as_fraction(p))
                for (s, x, y, d, p) in transitions]
        if states is None:
            seen: dict[str, None] = {}
            for t in recs:
                seen.setdefault(t.src)
                seen.setdefault(t.dst)
            states = tuple(seen)
        if obs is None:
            seen_y: dict[str, None] = {}
            for t in recs:
                seen_y.setdefault(t.y)
            obs = tuple(seen_y)
        return FimProcess(tuple(states), tuple(obs), tuple(recs), dict(meta or {}))

    @cached_property
    def state_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def obs_index(self) -> dict[str, int]:
        return {y: i for i, y in enumerate(self.obs)}

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_obs(self) -> int:
        return len(self.obs)

    @cached_property
    def tensor(self) -> np.ndarray:
        """float64 array T[s, x, y, s'] of transition probabilities."""
        t = np.zeros((self.n_states, 2, self.n_obs, self.n_states))
        si, yi = self.state_index, self.obs_index
        for tr in self.transitions:
            t[si[tr.src], tr.x, yi[tr.y], si[tr.dst]] += float(tr.prob)
        return t

    @cached_property
    def step_matrix(self) -> np.ndarray:
        """State transition matrix P[s, s'], inputs and observations summed out."""
        return self.tensor.sum(axis=(1, 2))

    @cached_property
    def input_matrices(self) -> np.ndarray:
        """M[x][s, s'] with observations summed out."""
        return self.tensor.sum(axis=2).transpose(1, 0, 2)

    @cached_property
    def exact_step(self) -> list[list[Fraction]]:
        m = self.n_states
        si = self.state_index
        p = [[Fraction(0)] * m for _ in range(m)]
        for tr in self.transitions:
            p[si[tr.src]][si[tr.dst]] += tr.prob
        return p

    @cached_property
    def exact_input_matrices(self) -> list[list[list[Fraction]]]:
        m = self.n_states
        si = self.state_index
        mats = [[[Fraction(0)] * m for _ in range(m)] for _ in range(2)]
        for tr in self.transitions:
            mats[tr.x][si[tr.src]][si[tr.dst]] += tr.prob
        return mats

    @cached_property
    def edges_by_state(self):
        """Per-state arrays (x, y_idx, dst_idx, prob) for fast sampling."""
        si, yi = self.state_index, self.obs_index
        buckets: list[list[tuple[int, int, int, float]]] = [[] for _ in self.states]
        for tr in self.transitions:
            buckets[si[tr.src]].append((tr.x, yi[tr.y], si[tr.dst], float(tr.prob)))
        out = []
        for b in buckets:
            arr = np.array(b, dtype=float) if b else np.zeros((0, 4))
            out.append((arr[:, 0].astype(np.int8), arr[:, 1].astype(np.int64),
                        arr[:, 2].astype(np.int64), arr[:, 3]))
        return out

    def native_observation(self) -> bool:
        """True when every transition observes its own input (y == str(x))."""
        return all(tr.y == str(tr.x) for tr in self.transitions)


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[ValidationIssue, ...]


def validate_process(proc: FimProcess, raise_on_error: bool = False) -> ValidationReport:
    """Check row sums (within 1e-12), nonnegativity, and irreducibility."""
    issues: list[ValidationIssue] = []
    sums: dict[str, Fraction] = {s: Fraction(0) for s in proc.states}
    for tr in proc.transitions:
        if tr.prob < 0:
            issues.append(ValidationIssue(
                "BAD_ROW_SUM", f"negative probability on {tr.src}"))
        sums[tr.src] += tr.prob
    for s, total in sums.items():
        if abs(float(total) - 1.0) > ROW_SUM_TOL:
            issues.append(ValidationIssue(
                "BAD_ROW_SUM", f"row {s!r} sums to {float(total)!r}"))
    unreachable = _unreachable_states(proc)
    if unreachable:
        issues.append(ValidationIssue(
            "REDUCIBLE", "not strongly connected; unreachable or dead states: "
            + ", ".join(sorted(unreachable))))
    report = ValidationReport(not issues, tuple(issues))
    if raise_on_error and issues:
        first = issues[0]
        raise (BadRowSum if first.code == "BAD_ROW_SUM" else Reducible)(first.detail)
    return report


def _unreachable_states(proc: FimProcess) -> set[str]:
    adj = proc.step_matrix > 0
    m = proc.n_states

    def reach(mat) -> np.ndarray:
        seen = np.zeros(m, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in np.nonzero(mat[u])[0]:
                    if not seen[v]:
                        seen[v] = True
                        nxt.append(int(v))
            frontier = nxt
        return seen

    fwd = reach(adj)
    bwd = reach(adj.T)
    bad = ~(fwd & bwd)
    return {proc.states[i] for i in np.nonzero(bad)[0]}


# ---------------------------------------------------------------------------
# Phase structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseStructure:
    """Period decomposition p = d * q and per-state phases.

    phase[s] is in [0, p); every transition advances the phase by one mod p.
    d is the largest power of two dividing p.
    """

    period: int
    d: int
    q: int
    phase: dict[str, int]

    def phase_of(self, state: str) -> int:
        return self.phase[state]


def detect_phases(proc: FimProcess) -> PhaseStructure:
    """Compute the period as the gcd of directed cycle length differences.

    BFS levels from the first state give, for every edge (u, v), a cycle-length
    residue level(u) + 1 - level(v); the gcd of these over all edges equals the
    period of an irreducible chain, so the computed p is maximal.
    """
    validate_process(proc, raise_on_error=True)
    adj = proc.step_matrix > 0
    m = proc.n_states
    level = np.full(m, -1, dtype=np.int64)
    level[0] = 0
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(adj[u])[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    for u in range(m):
        for v in np.nonzero(adj[u])[0]:
            g = math.gcd(g, int(level[u]) + 1 - int(level[v]))
    p = max(1, abs(g))
    d = p & (-p)  # largest power of two dividing p
    phases = {proc.states[i]: int(level[i]) % p for i in range(m)}
    return PhaseStructure(p, d, p // d, phases)


def phase_class(ps: PhaseStructure, delta: int) -> tuple[str, ...]:
    """States whose phase is congruent to delta modulo d."""
    if not 0 <= delta < ps.d:
        raise ValueError(f"delta {delta} out of range 0..{ps.d - 1}")
    return tuple(s for s, ph in ps.phase.items() if ph % ps.d == delta)


def boundary_pairs(
    proc: FimProcess, ps: PhaseStructure, delta: int, block_len: int,
    triples: bool = False,
):
    """Phase-consistent (s0, sN) pairs, or (s0, sN, s2N) triples, for one class.

    A pair qualifies when s0 lies in phase class delta and the phase of sN is
    phase(s0) + block_len mod p. Requires block_len = 2^n >= d.
    """
    _require_block(block_len, ps.d)
    starts = phase_class(ps, delta)
    pairs = []
    for s0 in starts:
        target = (ps.phase[s0] + block_len) % ps.period
        for s1 in proc.states:
            if ps.phase[s1] == target:
                pairs.append((s0, s1))
    if not triples:
        return tuple(pairs)
    out = []
    for s0, s1 in pairs:
        target = (ps.phase[s1] + block_len) % ps.period
        for s2 in proc.states:
            if ps.phase[s2] == target:
                out.append((s0, s1, s2))
    return tuple(out)


def _require_block(block_len: int, d: int) -> None:
    if block_len < 1 or block_len & (block_len - 1):
        raise BadLength(f"block length {block_len} is not a power of two")
    if block_len < d:
        raise BadLength(f"block length {block_len} is below the phase factor {d}")


# ---------------------------------------------------------------------------
# Stationary distribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StationaryDistribution:
    pi: dict[str, float]
    exact: dict[str, Fraction] | None = None

    def vector(self, proc: FimProcess) -> np.ndarray:
        return np.array([self.pi[s] for s in proc.states])

    def exact_vector(self, proc: FimProcess) -> list[Fraction]:
        if self.exact is None:
            raise ValueError("no exact stationary distribution attached")
        return [self.exact[s] for s in proc.states]


def stationary_distribution(proc: FimProcess, exact: bool = False) -> StationaryDistribution:
    """Solve pi P = pi, sum(pi) = 1 by a direct linear solve.

    Power iteration is deliberately avoided: it does not converge on periodic
    chains, which are the main subject here.
    """
    p = proc.step_matrix
    m = proc.n_states
    a = np.vstack([p.T - np.eye(m), np.ones((1, m))])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.max(np.abs(sol @ p - sol)))
    if residual > STATIONARY_TOL or np.min(sol) < -STATIONARY_TOL:
        raise Singular(f"stationary solve failed, residual {residual!r}")
    sol = np.clip(sol, 0.0, None)
    sol /= sol.sum()
    exact_pi = None
    if exact:
        exact_vec = _exact_stationary(proc)
        exact_pi = {s: exact_vec[i] for i, s in enumerate(proc.states)}
    return StationaryDistribution(
        {s: float(sol[i]) for i, s in enumerate(proc.states)}, exact_pi)


def _exact_stationary(proc: FimProcess) -> list[Fraction]:
    """Gaussian elimination over fractions for (P^T - I) pi = 0, sum pi = 1."""
    m = proc.n_states
    step = proc.exact_step
    rows = [[step[j][i] - (Fraction(1) if i == j else Fraction(0)) for j in range(m)]
            for i in range(m - 1)]
    rows.append([Fraction(1)] * m)
    rhs = [Fraction(0)] * (m - 1) + [Fraction(1)]
    for col in range(m):
        pivot = next((r for r in range(col, m) if rows[r][col] != 0), None)
        if pivot is None:
            raise Singular("exact stationary solve hit a zero pivot column")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        rhs[col], rhs[pivot] = rhs[pivot], rhs[col]
        inv = 1 / rows[col][col]
        rows[col] = [v * inv for v in rows[col]]
        rhs[col] *= inv
        for r in range(m):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
                rhs[r] -= f * rhs[col]
    return rhs


# ---------------------------------------------------------------------------
# Mixing constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixingConstants:
    """Per-class mixing constant and the block-length certificate.

    m_delta bounds pairwise dependence across a block boundary; mu is the
    smallest boundary triplet probability at block length cert_len, and
    xi = 1 / (mu * d) is the factor carried into the boundary-event bounds.
    """

    delta: int
    m_delta: float
    mu: float
    cert_len: int
    d: int

    @property
    def xi(self) -> float:
        return 1.0 / (self.mu * self.d)


def mixing_constant(
    ps: PhaseStructure, pi: StationaryDistribution, delta: int,
) -> float:
    """1 / (d * min stationary mass over the phase class)."""
    cls = phase_class(ps, delta)
    low = min(pi.pi[s] for s in cls)
    if low <= 0:
        raise Singular(f"phase class {delta} carries a zero-mass state")
    return 1.0 / (ps.d * low)


def min_triplet_probability(
    proc: FimProcess, ps: PhaseStructure, pi: StationaryDistribution,
    delta: int, block_len: int,
) -> float:
    """Smallest pi(s0) P^N(s0,sN) P^N(sN,s2N) over phase-consistent triples."""
    _require_block(block_len, ps.d)
    pn = np.linalg.matrix_power(proc.step_matrix, block_len)
    si = proc.state_index
    vec = pi.vector(proc)
    best = None
    for s0, s1, s2 in boundary_pairs(proc, ps, delta, block_len, triples=True):
        val = vec[si[s0]] * pn[si[s0], si[s1]] * pn[si[s1], si[s2]]
        if val <= 0.0:
            raise NotYetMixed(
                f"triplet ({s0},{s1},{s2}) has zero probability at N={block_len}")
        best = val if best is None else min(best, val)
    if best is None:
        raise NotYetMixed(f"phase class {delta} has no consistent triples")
    return float(best)


def mixing_certificate(
    proc: FimProcess, ps: PhaseStructure, pi: StationaryDistribution,
    delta: int, block_len: int,
) -> MixingConstants:
    return MixingConstants(
        delta=delta,
        m_delta=mixing_constant(ps, pi, delta),
        mu=min_triplet_probability(proc, ps, pi, delta, block_len),
        cert_len=block_len,
        d=ps.d,
    )


# ---------------------------------------------------------------------------
# Boundary events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundarySpec:
    """Conditioning event: start state in psi0, state after block_len in psiN."""

    psi0: tuple[str, ...]
    psiN: tuple[str, ...]
    block_len: int

    def validate(self, proc: FimProcess, ps: PhaseStructure) -> None:
        if not self.psi0 or not self.psiN:
            raise EmptyEvent("empty boundary set")
        missing = [s for s in self.psi0 + self.psiN if s not in ps.phase]
        if missing:
            raise EmptyEvent(f"unknown states {missing}")
        if self.block_len < 1 or self.block_len & (self.block_len - 1):
            raise BadLength(f"block length {self.block_len} is not a power of two")
        start_phases = {ps.phase[s] for s in self.psi0}
        if len(start_phases) != 1:
            raise EmptyEvent("start states span several phases")
        target = (next(iter(start_phases)) + self.block_len) % ps.period
        bad = [s for s in self.psiN if ps.phase[s] != target]
        if bad:
            raise EmptyEvent(f"final states {bad} have inconsistent phase")

    def delta(self, ps: PhaseStructure) -> int:
        return ps.phase[self.psi0[0]] % ps.d


def make_boundary(
    proc: FimProcess, ps: PhaseStructure, psi0: Sequence[str],
    psiN: Sequence[str], block_len: int,
) -> BoundarySpec:
    spec = BoundarySpec(tuple(psi0), tuple(psiN), block_len)
    spec.validate(proc, ps)
    return spec


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------

def channel_noiseless() -> dict:
    return {0: (("0", Fraction(1)),), 1: (("1", Fraction(1)),)}


def channel_constant(symbol: str = "*") -> dict:
    return {0: ((symbol, Fraction(1)),), 1: ((symbol, Fraction(1)),)}


def channel_bsc(eps: float) -> dict:
    e = _as_fraction(eps)
    if not 0 <= e <= 1:
        raise BadChannel(f"crossover {eps!r} outside [0, 1]")
    return {0: (("0", 1 - e), ("1", e)), 1: (("0", e), ("1", 1 - e))}


def channel_bec(eps: float) -> dict:
    e = _as_fraction(eps)
    if not 0 <= e <= 1:
        raise BadChannel(f"erasure rate {eps!r} outside [0, 1]")
    return {0: (("0", 1 - e), ("?", e)), 1: (("1", 1 - e), ("?", e))}


def attach_channel(proc: FimProcess, channel: dict) -> FimProcess:
    """Compose a memoryless observation channel onto a source whose y == x.

    The returned process emits the channel output as its observation while the
    state dynamics and the input law are untouched.
    """
    if not proc.native_observation():
        raise BadChannel("source already carries non-native observations")
    if set(channel) != {0, 1}:
        raise BadChannel("channel must define rows for inputs 0 and 1")
    out_alpha: dict[str, None] = {}
    for x in (0, 1):
        total = Fraction(0)
        for y, w in channel[x]:
            if w < 0:
                raise BadChannel(f"negative channel weight on input {x}")
            total += _as_fraction(w)
            out_alpha.setdefault(str(y))
        if total != 1:
            raise BadChannel(f"channel row for input {x} sums to {total}")
    new_transitions = []
    for tr in proc.transitions:
        for y, w in channel[tr.x]:
            w = _as_fraction(w)
            if w > 0:
                new_transitions.append(
                    Transition(tr.src, tr.x, str(y), tr.dst, tr.prob * w))
    meta = dict(proc.meta)
    return FimProcess(proc.states, tuple(out_alpha), tuple(new_transitions), meta)


# ---------------------------------------------------------------------------
# Conditioned sampling
# ---------------------------------------------------------------------------

def _tail_probabilities(proc: FimProcess, psiN: Sequence[str], block_len: int) -> np.ndarray:
    """tail[t][s] = P(state after the remaining block_len - t steps lies in psiN)."""
    m = proc.n_states
    si = proc.state_index
    tails = np.zeros((block_len + 1, m))
    for s in psiN:
        tails[block_len, si[s]] = 1.0
    for t in range(block_len - 1, -1, -1):
        tails[t] = proc.step_matrix @ tails[t + 1]
    return tails


def sample_paths(
    proc: FimProcess, psi0: Sequence[str], psiN: Sequence[str], block_len: int,
    rng: np.random.Generator, count: int,
    start_weights: np.ndarray | None = None,
):
    """Draw exact samples of (x, y, state path) conditioned on the boundary event.

    Sampling reweights each step by the probability that the remaining suffix
    reaches psiN, so no rejection is involved and zero-probability events are
    detected up front. Returns index arrays (xs, ys, states) with shapes
    (count, N), (count, N), (count, N + 1).
    """
    m = proc.n_states
    si = proc.state_index
    tails = _tail_probabilities(proc, psiN, block_len)
    if start_weights is None:
        pi = stationary_distribution(proc)
        start_weights = pi.vector(proc)
    w0 = np.zeros(m)
    for s in psi0:
        w0[si[s]] = start_weights[si[s]]
    w0 = w0 * tails[0]
    total = w0.sum()
    if total <= 0.0:
        raise EmptyEvent("conditioned event has probability zero")
    xs = np.zeros((count, block_len), dtype=np.int8)
    ys = np.zeros((count, block_len), dtype=np.int64)
    states = np.zeros((count, block_len + 1), dtype=np.int64)
    states[:, 0] = rng.choice(m, size=count, p=w0 / total)
    edges = proc.edges_by_state
    for t in range(block_len):
        cur = states[:, t]
        for s in np.unique(cur):
            rows = np.nonzero(cur == s)[0]
            ex, ey, edst, ep = edges[s]
            w = ep * tails[t + 1][edst]
            z = w.sum()
            if z <= 0.0:
                raise EmptyEvent("conditioned event has probability zero")
            pick = rng.choice(len(ep), size=rows.size, p=w / z)
            xs[rows, t] = ex[pick]
            ys[rows, t] = ey[pick]
            states[rows, t + 1] = edst[pick]
    return xs, ys, states


def sample_path(
    proc: FimProcess, boundary: BoundarySpec, rng: np.random.Generator,
):
    """Single conditioned draw, returned with readable labels."""
    ps = detect_phases(proc)
    boundary.validate(proc, ps)
    xs, ys, st = sample_paths(
        proc, boundary.psi0, boundary.psiN, boundary.block_len, rng, 1)
    x = tuple(int(v) for v in xs[0])
    y = tuple(proc.obs[int(v)] for v in ys[0])
    path = tuple(proc.states[int(v)] for v in st[0])
    return x, y, path


# ---------------------------------------------------------------------------
# Chain files
# ---------------------------------------------------------------------------

CHAIN_FORMAT = "chain-spec-v1"


def chain_doc(proc: FimProcess) -> dict:
    """JSON-ready description of a process, exact probabilities as strings."""
    doc = {
        "format": CHAIN_FORMAT,
        "states": list(proc.states),
        "obs": list(proc.obs),
        "transitions": [
            [tr.src, tr.x, tr.y, tr.dst, str(tr.prob)] for tr in proc.transitions
        ],
    }
    if proc.meta:
        doc["meta"] = {k: v for k, v in proc.meta.items() if _json_safe(v)}
    try:
        ph = detect_phases(proc)
        doc["phase_hints"] = {s: ph.phase[s] for s in proc.states}
    except Exception:
        pass
    return doc


def save_chain(proc: FimProcess, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(chain_doc(proc), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def _json_safe(v) -> bool:
    return isinstance(v, (str, int, float, bool, type(None), list, dict))


def chain_from_doc(doc: dict, source: str = "chain document") -> FimProcess:
    if doc.get("format") != CHAIN_FORMAT:
        raise BadFile(f"unsupported chain file format {doc.get('format')!r}")
    try:
        transitions = [
            (str(s), int(x), str(y), str(d), Fraction(str(p)))
            for (s, x, y, d, p) in doc["transitions"]
        ]
        proc = FimProcess.from_transitions(
            transitions, states=doc["states"], obs=doc["obs"],
            meta=doc.get("meta") or {},
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise BadFile(f"malformed {source}: {exc}") from None
    hints = doc.get("phase_hints")
    if hints:
        ph = detect_phases(proc)
        for s, want in hints.items():
            if ph.phase.get(str(s)) != int(want):
                raise BadFile(
                    f"phase hint for state {s!r} disagrees with the chain")
    return proc


def load_chain(path: str) -> FimProcess:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadFile(f"cannot read chain file {path!r}: {exc}") from None
    return chain_from_doc(doc, source=f"chain file {path!r}")
