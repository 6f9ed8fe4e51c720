"""End-to-end coding on a weight-constrained process.

A code is a partition of the transform indices of one block into message
(information) indices, shaped indices whose values are regenerated from the
block-conditioned law, and frozen indices pinned to a constant bit. Encoding
runs a sequential pass over the bare input process so every output word
satisfies the chain's weight constraint; decoding runs the same pass against
the observations. Shaped values are either re-derived from a shared seed
(genie mode) or re-estimated by argmax (blind mode).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chains import WeightConstraint, _decode_phase_weight
from .errors import (BadChannel, BadFile, BadLength, EmptyInfo, TooLarge,
                     Violation, ZeroEvidence)
from .exact import BlockTables
from .process import (BoundarySpec, FimProcess, StationaryDistribution,
                      chain_doc, chain_from_doc, detect_phases, make_boundary,
                      stationary_distribution)
from .sctrellis import BlockCondition, ScPass, sc_decode, sequence_probability

__all__ = [
    "CodeSpec", "SimulationResult", "construct_code", "construct_code_at_rate",
    "encode", "decode", "simulate_fer", "save_code", "load_code",
    "admissible_weight", "wilson_interval",
]

CODE_FORMAT = "code-spec-v1"


# ---------------------------------------------------------------------------
# Code specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CodeSpec:
    """One block code: index classes, frozen values, and provenance.

    info_set carries the message, shaped_set is regenerated from the
    conditioned law, and frozen_map pins indices whose value is the same
    constant bit in every positive-probability context. The three classes
    partition 1..N.
    """

    proc: FimProcess = field(repr=False)
    boundary: BoundarySpec
    info_set: tuple[int, ...]
    shaped_set: tuple[int, ...]
    frozen_map: dict
    delta_z: float
    delta_k: float
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = self.boundary.block_len
        info, shaped = set(self.info_set), set(self.shaped_set)
        frozen = set(self.frozen_map)
        if info | shaped | frozen != set(range(1, n + 1)) or \
                len(info) + len(shaped) + len(frozen) != n:
            raise Violation("index classes do not partition 1..N")
        if any(b not in (0, 1) for b in self.frozen_map.values()):
            raise Violation("frozen values must be bits")

    @property
    def n_bits(self) -> int:
        return self.boundary.block_len

    @property
    def n_info(self) -> int:
        return len(self.info_set)

    @property
    def rate(self) -> float:
        return len(self.info_set) / self.n_bits


def _boundary_vectors(proc, boundary, pi):
    si = proc.state_index
    w0 = np.zeros(proc.n_states)
    for s in boundary.psi0:
        w0[si[s]] = pi.pi[s]
    mask = np.zeros(proc.n_states)
    for s in boundary.psiN:
        mask[si[s]] = 1.0
    return w0, mask


def _static_frozen_bits(proc, boundary, candidates, pi, tables=None):
    """Constant bit per candidate index, where one exists.

    Consults exhaustive no-observation tables; a candidate whose argmax value
    differs between positive-probability contexts is left out (it stays
    shaped, where the conditioned point mass reproduces it anyway). Returns
    an empty map when the block is too large to enumerate.
    """
    if not candidates:
        return {}
    n = boundary.block_len
    if tables is None:
        if (1 << n) * proc.n_states ** 2 > (1 << 22):
            return {}
        try:
            tables = BlockTables(proc, n, use_y=False)
        except TooLarge:
            return {}
    w0, mask = _boundary_vectors(proc, boundary, pi)
    out = {}
    for i in candidates:
        bits = set()
        for _, entry in tables.contexts(i):
            j = entry.sum(axis=1) if tables.track_middle else entry
            q0 = float(w0 @ j[:, :, 0] @ mask)
            q1 = float(w0 @ j[:, :, 1] @ mask)
            if q0 + q1 <= 0.0:
                continue
            bits.add(0 if q0 >= q1 else 1)
        if len(bits) == 1:
            out[i] = bits.pop()
    return out


def _check_profiles(boundary, profile_with_y, profile_without_y):
    n = boundary.block_len
    for prof in (profile_with_y, profile_without_y):
        if prof.block_len != n:
            raise BadLength(
                f"profile covers block {prof.block_len}, code needs {n}")


def _finish(proc, boundary, info, z_no_y, freeze_tol, tables, pi,
            delta_z, delta_k, meta):
    if not info:
        raise EmptyInfo("no index is both decodable and nearly uniform")
    n = boundary.block_len
    rest = [i for i in range(1, n + 1) if i not in set(info)]
    candidates = [i for i in rest if z_no_y[i - 1] <= freeze_tol]
    frozen = _static_frozen_bits(proc, boundary, candidates, pi, tables)
    shaped = tuple(i for i in rest if i not in frozen)
    return CodeSpec(proc, boundary, tuple(sorted(info)), shaped, frozen,
                    float(delta_z), float(delta_k), meta or {})


def construct_code(
    proc: FimProcess, boundary: BoundarySpec,
    profile_with_y, profile_without_y,
    delta_z: float = 1e-3, delta_k: float = 1e-3,
    freeze_tol: float = 1e-9, tables: BlockTables | None = None,
    meta: dict | None = None,
) -> CodeSpec:
    """Threshold construction from a pair of per-index profiles.

    An index carries message bits when its Bhattacharyya parameter given the
    observations is below delta_z (decodable) and its total-variation
    parameter without observations is below delta_k (nearly uniform, so any
    message value is feasible). Indices deterministic without observations
    and constant across contexts are frozen to that constant; everything else
    is shaped.
    """
    _check_profiles(boundary, profile_with_y, profile_without_y)
    pi = stationary_distribution(proc)
    n = boundary.block_len
    info = [i for i in range(1, n + 1)
            if profile_with_y.z[i - 1] < delta_z
            and profile_without_y.k[i - 1] < delta_k]
    meta = dict(meta or {})
    meta.update(_provenance(profile_with_y, profile_without_y),
                freeze_tol=freeze_tol)
    return _finish(proc, boundary, info, profile_without_y.z, freeze_tol,
                   tables, pi, delta_z, delta_k, meta)


def construct_code_at_rate(
    proc: FimProcess, boundary: BoundarySpec,
    profile_with_y, profile_without_y, rate: float,
    k_cap: float = 0.5, freeze_tol: float = 1e-9,
    tables: BlockTables | None = None, meta: dict | None = None,
) -> CodeSpec:
    """Fixed-rate construction: the most decodable nearly-uniform indices.

    Candidates need total variation without observations below k_cap (an
    index already pinned by the constraint cannot take a message bit); the
    round(rate * N) of them with the smallest observation-side Bhattacharyya
    parameters become the information set.
    """
    _check_profiles(boundary, profile_with_y, profile_without_y)
    pi = stationary_distribution(proc)
    n = boundary.block_len
    want = max(1, round(rate * n))
    candidates = [i for i in range(1, n + 1)
                  if profile_without_y.k[i - 1] < k_cap]
    if len(candidates) < want:
        raise EmptyInfo(
            f"only {len(candidates)} usable indices for {want} message bits")
    candidates.sort(key=lambda i: (profile_with_y.z[i - 1],
                                   profile_without_y.k[i - 1], i))
    info = candidates[:want]
    meta = dict(meta or {})
    meta.update(_provenance(profile_with_y, profile_without_y),
                freeze_tol=freeze_tol, target_rate=rate, k_cap=k_cap)
    achieved_z = max(profile_with_y.z[i - 1] for i in info)
    achieved_k = max(profile_without_y.k[i - 1] for i in info)
    return _finish(proc, boundary, info, profile_without_y.z, freeze_tol,
                   tables, pi, achieved_z, achieved_k, meta)


def _provenance(profile_with_y, profile_without_y) -> dict:
    out = {}
    for tag, prof in (("with_y", profile_with_y), ("without_y", profile_without_y)):
        out[f"estimator_{tag}"] = prof.estimator
        if prof.seed is not None:
            out[f"seed_{tag}"] = int(prof.seed)
        if prof.n_frames:
            out[f"n_frames_{tag}"] = int(prof.n_frames)
    return out


# ---------------------------------------------------------------------------
# Encoding and decoding
# ---------------------------------------------------------------------------

def encode(code: CodeSpec, message, shaping_seed=None, rounding: bool = False,
           pi: StationaryDistribution | None = None) -> np.ndarray:
    """Map a message to one constrained input word.

    Message bits land on the information indices, frozen indices take their
    pinned values, and shaped indices are sampled from the boundary-
    conditioned next-bit law using shaping_seed (or taken by argmax when
    rounding is set). Raises ZeroEvidence when the message forces a word the
    boundary event cannot produce.
    """
    message = np.asarray(message, dtype=np.uint8)
    if message.size != code.n_info:
        raise BadLength(
            f"message has {message.size} bits, the code carries {code.n_info}")
    decisions: dict[int, object] = {}
    for pos, i in enumerate(code.info_set):
        decisions[i] = int(message[pos])
    for i, b in code.frozen_map.items():
        decisions[i] = int(b)
    shaped_rule = "information" if rounding else "shaped"
    for i in code.shaped_set:
        decisions[i] = shaped_rule
    rng = None if rounding else np.random.default_rng(shaping_seed)
    _, x = sc_decode(code.proc, code.boundary, None, decisions, rng=rng, pi=pi)
    # a zero-posterior bit forced after the last queried index slips through
    # the pass itself, so the finished word is checked against the event
    if sequence_probability(code.proc, code.boundary, x, pi=pi) <= 0.0:
        raise ZeroEvidence("the message forces a word outside the boundary event")
    return x


def decode(code: CodeSpec, y, mode: str = "genie", shaping_seed=None,
           pi: StationaryDistribution | None = None,
           return_word: bool = False):
    """Recover the message from one block of observations.

    Information bits are decided by argmax of the observation-conditioned
    next-bit law. Shaped bits are re-derived from the bare process with the
    encoder's shaping_seed in genie mode (argmax of the bare law when the
    seed is None, matching a rounding encoder), or argmax of the
    observation-conditioned law in blind mode. Frozen bits are taken from the
    code. Raises ZeroEvidence when the observations are impossible under the
    boundary event, for example when decoding against the wrong final set.
    """
    if mode not in ("genie", "blind"):
        raise ValueError(f"unknown decoding mode {mode!r}")
    if pi is None:
        pi = stationary_distribution(code.proc)
    proc, boundary = code.proc, code.boundary
    cond = BlockCondition.from_boundary(proc, pi, boundary)
    channel_pass = ScPass(proc, code.n_bits, y)
    source_pass = ScPass(proc, code.n_bits, None) if mode == "genie" else None
    rng = np.random.default_rng(shaping_seed) if shaping_seed is not None else None
    info = set(code.info_set)
    u = np.zeros(code.n_bits, dtype=np.uint8)
    for i in range(1, code.n_bits + 1):
        if i in code.frozen_map:
            bit = int(code.frozen_map[i])
        elif i in info:
            p0, p1 = channel_pass.conditional(cond)
            bit = 0 if p0 >= p1 else 1
        elif mode == "genie":
            p0, p1 = source_pass.conditional(cond)
            if rng is None:
                bit = 0 if p0 >= p1 else 1
            else:
                bit = int(rng.random() < p1)
        else:
            p0, p1 = channel_pass.conditional(cond)
            bit = 0 if p0 >= p1 else 1
        u[i - 1] = bit
        channel_pass.decide(bit)
        if source_pass is not None:
            source_pass.decide(bit)
    message = np.array([u[i - 1] for i in code.info_set], dtype=np.uint8)
    if return_word:
        from .transform import polar_transform

        return message, u, polar_transform(u)
    return message


# ---------------------------------------------------------------------------
# Weight admissibility
# ---------------------------------------------------------------------------

def admissible_weight(code: CodeSpec, x) -> bool:
    """Whether one word's weight agrees with the chain constraint and boundary.

    Exact-fraction chains must gain exactly a per completed period between the
    start and final prefixes; mod chains fix the weight residue from the two
    states; window chains bound every period-aligned full window. Chains
    without constraint metadata fall back to positive probability under the
    boundary event.
    """
    proc, boundary = code.proc, code.boundary
    n = code.n_bits
    w = int(sum(int(v) for v in x))
    try:
        constraint = WeightConstraint.from_meta(proc.meta)
    except Exception:
        from .sctrellis import sequence_probability

        return sequence_probability(proc, boundary, x) > 0.0
    builder = proc.meta.get("builder")
    if builder == "mod":
        allowed = {(int(sn) - int(s0)) % constraint.b
                   for s0 in boundary.psi0 for sn in boundary.psiN}
        return w % constraint.b in allowed
    if constraint.kind == "exact_fraction":
        allowed = set()
        for s0 in boundary.psi0:
            ph0, w0 = _decode_phase_weight(proc, s0)
            for sn in boundary.psiN:
                phn, wn = _decode_phase_weight(proc, sn)
                if (n + ph0 - phn) % constraint.b:
                    continue
                periods = (n + ph0 - phn) // constraint.b
                allowed.add(periods * constraint.a + wn - w0)
        return w in allowed
    if constraint.kind == "weight_window":
        ph0 = _decode_phase_weight(proc, boundary.psi0[0])[0]
        lo = math.ceil(constraint.alpha * constraint.b)
        hi = math.floor(constraint.beta * constraint.b)
        start = (constraint.b - ph0) % constraint.b
        xs = [int(v) for v in x]
        for t in range(start, n - constraint.b + 1, constraint.b):
            if not lo <= sum(xs[t:t + constraint.b]) <= hi:
                return False
        return True
    return True


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def wilson_interval(successes: int, n: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    ph = successes / n
    denom = 1.0 + z * z / n
    center = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1.0 - ph) / n + z * z / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class SimulationResult:
    fer: float
    ber: float
    fer_interval: tuple[float, float]
    ber_interval: tuple[float, float]
    n_trials: int
    n_info: int
    frame_errors: int
    bit_errors: int
    mode: str
    encode_failures: int = 0

    def __iter__(self):
        return iter((self.fer, self.ber, self.fer_interval))


def _channel_sampler(proc: FimProcess, channel: dict | None):
    if channel is None:
        if not proc.native_observation():
            raise BadChannel(
                "the process carries attached observations; pass the channel")
        return lambda x, rng: [str(int(v)) for v in x]
    rows = {}
    for x in (0, 1):
        labels = [str(lab) for lab, _ in channel[x]]
        unknown = [lab for lab in labels if lab not in proc.obs_index]
        if unknown:
            raise BadChannel(f"channel emits {unknown} outside the alphabet")
        probs = np.array([float(p) for _, p in channel[x]], dtype=float)
        rows[x] = (labels, probs / probs.sum())

    def sample(x, rng):
        out = []
        for v in x:
            labels, probs = rows[int(v)]
            out.append(labels[rng.choice(len(labels), p=probs)])
        return out

    return sample


def simulate_fer(
    code: CodeSpec, channel: dict | None, trials: int,
    rng=None, mode: str = "genie", threads: int = 1,
) -> SimulationResult:
    """Encode random messages, transmit, decode, and tally error rates.

    Every frame is checked against the weight constraint before transmission;
    a violation raises immediately. A message whose forced bits make the
    frame impossible under the boundary event cannot be transmitted at all;
    such frames count as frame errors with every information bit wrong, and
    their number is reported in encode_failures. The same accounting applies
    when the decoder paints itself into an impossible prefix. Per-trial
    randomness is derived by spawning one seed sequence per trial, so results
    are identical for any thread count. rng may be an int seed, a
    SeedSequence, or a Generator.
    """
    if trials < 1:
        raise BadLength("at least one trial is required")
    if isinstance(rng, np.random.Generator):
        root = np.random.SeedSequence(int(rng.integers(1 << 63)))
    elif isinstance(rng, np.random.SeedSequence):
        root = rng
    else:
        root = np.random.SeedSequence(0 if rng is None else int(rng))
    emit = _channel_sampler(code.proc, channel)
    pi = stationary_distribution(code.proc)
    children = root.spawn(trials)
    k = code.n_info

    def run_trial(t: int) -> tuple[int, int, int]:
        msg_ss, shape_ss, chan_ss = children[t].spawn(3)
        message = np.random.default_rng(msg_ss).integers(0, 2, k, dtype=np.uint8)
        try:
            x = encode(code, message, shaping_seed=shape_ss, pi=pi)
        except ZeroEvidence:
            return 1, k, 1
        if not admissible_weight(code, x):
            raise Violation(
                f"encoded frame of weight {int(x.sum())} breaks the constraint")
        y = emit(x, np.random.default_rng(chan_ss))
        try:
            got = decode(code, y, mode=mode,
                         shaping_seed=shape_ss if mode == "genie" else None,
                         pi=pi)
        except ZeroEvidence:
            return 1, k, 0
        wrong = int(np.count_nonzero(got != message))
        return int(wrong > 0), wrong, 0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_trial, range(trials)))
    else:
        outcomes = [run_trial(t) for t in range(trials)]
    frame_errors = sum(f for f, _, _ in outcomes)
    bit_errors = sum(b for _, b, _ in outcomes)
    encode_failures = sum(e for _, _, e in outcomes)
    return SimulationResult(
        fer=frame_errors / trials,
        ber=bit_errors / (trials * k) if k else 0.0,
        fer_interval=wilson_interval(frame_errors, trials),
        ber_interval=wilson_interval(bit_errors, trials * k),
        n_trials=trials, n_info=k,
        frame_errors=frame_errors, bit_errors=bit_errors, mode=mode,
        encode_failures=encode_failures)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def code_doc(code: CodeSpec) -> dict:
    meta = {k: v for k, v in code.meta.items()
            if isinstance(v, (str, int, float, bool, type(None)))}
    return {
        "format": CODE_FORMAT,
        "n": code.n_bits,
        "boundary": {"psi0": list(code.boundary.psi0),
                     "psiN": list(code.boundary.psiN)},
        "info_set": list(code.info_set),
        "shaped_set": list(code.shaped_set),
        "frozen_map": {str(i): int(b) for i, b in sorted(code.frozen_map.items())},
        "delta_z": code.delta_z,
        "delta_k": code.delta_k,
        "meta": meta,
        "chain": chain_doc(code.proc),
    }


def save_code(code: CodeSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(code_doc(code), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def load_code(path: str) -> CodeSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadFile(f"cannot read code file {path!r}: {exc}") from None
    if doc.get("format") != CODE_FORMAT:
        raise BadFile(f"unsupported code file format {doc.get('format')!r}")
    try:
        proc = chain_from_doc(doc["chain"], source=f"chain in {path!r}")
        ps = detect_phases(proc)
        boundary = make_boundary(proc, ps, doc["boundary"]["psi0"],
                                 doc["boundary"]["psiN"], int(doc["n"]))
        return CodeSpec(
            proc, boundary,
            tuple(int(i) for i in doc["info_set"]),
            tuple(int(i) for i in doc["shaped_set"]),
            {int(i): int(b) for i, b in doc["frozen_map"].items()},
            float(doc["delta_z"]), float(doc["delta_k"]),
            dict(doc.get("meta") or {}))
    except (KeyError, ValueError, TypeError) as exc:
        raise BadFile(f"malformed code file {path!r}: {exc}") from None
