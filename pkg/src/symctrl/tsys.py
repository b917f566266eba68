"""Finite transition systems with metric outputs and the system operators:
approximate composition, non-blocking part, accessible part, and the
approximate (bi)simulation relation checkers.

States, inputs and transitions are index-based and array-backed so that
systems with tens of millions of transitions stay affordable; the distance
between outputs is the infinity norm.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Set, Tuple

import numpy as np


def _rows_strictly_sorted(t: np.ndarray) -> bool:
    """True when the (src, input, dst) rows are strictly increasing, i.e.
    already canonically sorted and duplicate-free."""
    d0 = np.diff(t[:, 0])
    d1 = np.diff(t[:, 1])
    d2 = np.diff(t[:, 2])
    return bool(np.all((d0 > 0) | ((d0 == 0) & ((d1 > 0) | ((d1 == 0)
                                                            & (d2 > 0))))))


class FiniteSystem:
    """Explicit finite transition system.

    outputs       (S, d) float array; row i is the output point of state i
    initials      sorted int array of initial-state indices
    inputs        (I, mi) float array of input points (mi may be 0)
    transitions   (T, 3) int32 array of (source, input, target), kept sorted
                  lexicographically and deduplicated
    """

    def __init__(self, outputs, initials, inputs, transitions):
        outputs = np.asarray(outputs, dtype=float)
        if outputs.ndim != 2:
            raise ValueError("outputs must be a (S, d) array")
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim != 2:
            raise ValueError("inputs must be a (I, mi) array")
        initials = np.unique(np.asarray(initials, dtype=np.int64).reshape(-1))
        transitions = np.asarray(transitions).reshape(-1, 3)
        if transitions.dtype != np.int32:
            if transitions.size and (transitions.max() > np.iinfo(np.int32).max
                                     or transitions.min() < 0):
                raise ValueError("transition indices out of int32 range")
            transitions = transitions.astype(np.int32)
        if transitions.shape[0] > 1 and not _rows_strictly_sorted(transitions):
            order = np.lexsort((transitions[:, 2], transitions[:, 1],
                                transitions[:, 0]))
            transitions = transitions[order]
            keep = np.ones(transitions.shape[0], dtype=bool)
            keep[1:] = np.any(np.diff(transitions, axis=0) != 0, axis=1)
            transitions = transitions[keep]
        ns, ni = outputs.shape[0], inputs.shape[0]
        if initials.size and (initials[0] < 0 or initials[-1] >= ns):
            raise ValueError("initial state index out of range")
        if transitions.shape[0]:
            if transitions[:, [0, 2]].min() < 0 or transitions[:, [0, 2]].max() >= ns:
                raise ValueError("transition endpoint out of range")
            if transitions[:, 1].min() < 0 or transitions[:, 1].max() >= ni:
                raise ValueError("transition input out of range")
        self.outputs = outputs
        self.initials = initials
        self.inputs = inputs
        self.transitions = transitions
        self._succ: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def n_states(self) -> int:
        return self.outputs.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_transitions(self) -> int:
        return self.transitions.shape[0]

    @property
    def output_dim(self) -> int:
        return self.outputs.shape[1]

    def same_as(self, other: "FiniteSystem") -> bool:
        """Exact equality of state outputs, initials, inputs and transitions."""
        return (np.array_equal(self.outputs, other.outputs)
                and np.array_equal(self.initials, other.initials)
                and np.array_equal(self.inputs, other.inputs)
                and np.array_equal(self.transitions, other.transitions))

    def _succ_index(self) -> Tuple[np.ndarray, np.ndarray]:
        """CSR indptr over source states into the (sorted) transition rows."""
        if self._succ is None:
            counts = np.bincount(self.transitions[:, 0], minlength=self.n_states)
            indptr = np.zeros(self.n_states + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            self._succ = (indptr, self.transitions)
        return self._succ

    def successors(self, state: int) -> np.ndarray:
        """Transitions (rows) leaving `state`."""
        indptr, rows = self._succ_index()
        return rows[indptr[state]:indptr[state + 1]]

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.transitions[:, 0], minlength=self.n_states)


def is_deterministic(s: FiniteSystem) -> bool:
    """True iff no (state, input) pair has two outgoing transitions."""
    if s.n_transitions < 2:
        return True
    t = s.transitions
    same = (np.diff(t[:, 0]) == 0) & (np.diff(t[:, 1]) == 0)
    return not np.any(same)


def subsystem(s: FiniteSystem, keep_states) -> FiniteSystem:
    """Restriction of `s` to a subset of states (indices), keeping all
    transitions whose endpoints survive.  State order is preserved."""
    keep = np.unique(np.asarray(keep_states, dtype=np.int64).reshape(-1))
    alive = np.zeros(s.n_states, dtype=bool)
    alive[keep] = True
    remap = -np.ones(s.n_states, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    t = s.transitions
    mask = alive[t[:, 0]] & alive[t[:, 2]] if t.shape[0] else np.zeros(0, bool)
    t2 = np.column_stack([remap[t[mask, 0]], t[mask, 1], remap[t[mask, 2]]]) \
        if t.shape[0] else t
    init = remap[s.initials[alive[s.initials]]] if s.initials.size else s.initials
    return FiniteSystem(s.outputs[keep], init, s.inputs, t2)


def _pair_candidates(s1: FiniteSystem, s2: FiniteSystem,
                     eps: float) -> List[Tuple[int, int]]:
    """Output-compatible state pairs: d(H1(i), H2(j)) <= eps, infinity norm.

    Exact-match hashing for eps = 0, grid bucketing otherwise; falls back to
    the full product for small instances or high output dimension.
    """
    o1, o2 = s1.outputs, s2.outputs
    n1, n2, d = o1.shape[0], o2.shape[0], o1.shape[1]
    pairs: List[Tuple[int, int]] = []
    if n1 == 0 or n2 == 0:
        return pairs
    if eps == 0.0:
        by_key: Dict[bytes, List[int]] = {}
        norm2 = o2 + 0.0  # folds -0.0 into +0.0 for hashing
        for j in range(n2):
            by_key.setdefault(norm2[j].tobytes(), []).append(j)
        norm1 = o1 + 0.0
        for i in range(n1):
            for j in by_key.get(norm1[i].tobytes(), ()):
                pairs.append((i, j))
        return pairs
    if n1 * n2 <= 250_000 or 3 ** d > 64:
        for i in range(n1):
            close = np.max(np.abs(o2 - o1[i]), axis=1) <= eps
            pairs.extend((i, int(j)) for j in np.flatnonzero(close))
        return pairs
    buckets: Dict[tuple, List[int]] = {}
    for j in range(n2):
        buckets.setdefault(tuple(np.floor(o2[j] / eps).astype(np.int64)), []).append(j)
    shifts = np.stack(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij"),
                      axis=-1).reshape(-1, d)
    for i in range(n1):
        base = np.floor(o1[i] / eps).astype(np.int64)
        for sh in shifts:
            for j in buckets.get(tuple(base + sh), ()):
                if np.max(np.abs(o2[j] - o1[i])) <= eps:
                    pairs.append((i, int(j)))
    return sorted(set(pairs))


def compose(s1: FiniteSystem, s2: FiniteSystem, eps: float) -> FiniteSystem:
    """Approximate composition of s1 and s2 at precision eps.

    States are the pairs of states with outputs within eps of each other;
    a pair steps exactly when both components step; the output of a pair is
    the output of its first (plant-side) component.
    """
    if s1.output_dim != s2.output_dim:
        raise ValueError("composed systems must share the output space")
    pairs = _pair_candidates(s1, s2, eps)
    pairs.sort()
    npairs = len(pairs)
    pair_i = np.asarray([p[0] for p in pairs], dtype=np.int64)
    pair_j = np.asarray([p[1] for p in pairs], dtype=np.int64)
    n2 = max(s2.n_states, 1)
    pair_code = pair_i * n2 + pair_j  # ascending because pairs are sorted

    outputs = s1.outputs[pair_i] if npairs else np.zeros((0, s1.output_dim))

    init1 = np.zeros(s1.n_states, dtype=bool)
    init1[s1.initials] = True
    init2 = np.zeros(s2.n_states, dtype=bool)
    init2[s2.initials] = True
    initials = np.flatnonzero(init1[pair_i] & init2[pair_j]) if npairs else []

    i1, i2 = s1.n_inputs, s2.n_inputs
    inputs = np.hstack([np.repeat(s1.inputs, i2, axis=0),
                        np.tile(s2.inputs, (i1, 1))])

    # join transitions: replicate each s1 transition over the composed pairs
    # sharing its source, then over the s2 transitions of the partner state,
    # and keep rows whose target pair is itself a composed state
    trans_chunks = []
    t1, t2 = s1.transitions, s2.transitions
    if npairs and t1.shape[0] and t2.shape[0]:
        cnt_pairs_by_i = np.bincount(pair_i, minlength=s1.n_states)
        start_pairs_by_i = np.zeros(s1.n_states + 1, dtype=np.int64)
        np.cumsum(cnt_pairs_by_i, out=start_pairs_by_i[1:])
        order2 = np.argsort(t2[:, 0], kind="stable")
        t2s = t2[order2]
        cnt_t2_by_j = np.bincount(t2s[:, 0], minlength=s2.n_states)
        start_t2_by_j = np.zeros(s2.n_states + 1, dtype=np.int64)
        np.cumsum(cnt_t2_by_j, out=start_t2_by_j[1:])

        chunk = max(1, 4_000_000 // max(1, int(cnt_pairs_by_i.max())))
        for a in range(0, t1.shape[0], chunk):
            rows = t1[a:a + chunk]
            reps = cnt_pairs_by_i[rows[:, 0]]
            total = int(reps.sum())
            if total == 0:
                continue
            row_id = np.repeat(np.arange(rows.shape[0]), reps)
            offsets = np.arange(total) - np.repeat(
                np.concatenate([[0], np.cumsum(reps)[:-1]]), reps)
            k = start_pairs_by_i[rows[row_id, 0]] + offsets
            j = pair_j[k]
            reps2 = cnt_t2_by_j[j]
            total2 = int(reps2.sum())
            if total2 == 0:
                continue
            row2_id = np.repeat(np.arange(k.size), reps2)
            offsets2 = np.arange(total2) - np.repeat(
                np.concatenate([[0], np.cumsum(reps2)[:-1]]), reps2)
            t2row = start_t2_by_j[j[row2_id]] + offsets2
            dst_code = rows[row_id[row2_id], 2] * n2 + t2s[t2row, 2]
            pos = np.searchsorted(pair_code, dst_code)
            ok = (pos < npairs)
            ok[ok] &= pair_code[pos[ok]] == dst_code[ok]
            src_k = k[row2_id[ok]]
            v = rows[row_id[row2_id[ok]], 1] * i2 + t2s[t2row[ok], 1]
            trans_chunks.append(np.column_stack([src_k, v, pos[ok]]))
    transitions = (np.vstack(trans_chunks) if trans_chunks
                   else np.zeros((0, 3), dtype=np.int64))
    return FiniteSystem(outputs, initials, inputs, transitions)


def nonblocking_part(s: FiniteSystem) -> FiniteSystem:
    """Maximal sub-system in which every state has an outgoing transition.

    Greatest fixpoint: repeatedly delete states without outgoing transitions
    together with the transitions leading into them.
    """
    t = s.transitions
    outdeg = np.bincount(t[:, 0], minlength=s.n_states) if t.shape[0] else \
        np.zeros(s.n_states, dtype=np.int64)
    alive_state = np.ones(s.n_states, dtype=bool)
    alive_trans = np.ones(t.shape[0], dtype=bool)
    if t.shape[0]:
        order_by_dst = np.argsort(t[:, 2], kind="stable")
        cnt_by_dst = np.bincount(t[:, 2], minlength=s.n_states)
        start_by_dst = np.zeros(s.n_states + 1, dtype=np.int64)
        np.cumsum(cnt_by_dst, out=start_by_dst[1:])
    stack = list(np.flatnonzero(outdeg == 0))
    while stack:
        y = stack.pop()
        alive_state[y] = False
        if not t.shape[0]:
            continue
        for r in order_by_dst[start_by_dst[y]:start_by_dst[y + 1]]:
            if alive_trans[r]:
                alive_trans[r] = False
                z = t[r, 0]
                outdeg[z] -= 1
                if outdeg[z] == 0 and alive_state[z]:
                    stack.append(z)
    keep = np.flatnonzero(alive_state)
    remap = -np.ones(s.n_states, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    rows = t[alive_trans]
    new_t = np.column_stack([remap[rows[:, 0]], rows[:, 1], remap[rows[:, 2]]]) \
        if rows.shape[0] else np.zeros((0, 3), dtype=np.int64)
    init = remap[s.initials[alive_state[s.initials]]] if s.initials.size else []
    return FiniteSystem(s.outputs[keep], init, s.inputs, new_t)


def accessible_part(s: FiniteSystem) -> FiniteSystem:
    """Sub-system of the states reachable from some initial state."""
    seen = np.zeros(s.n_states, dtype=bool)
    frontier = list(s.initials)
    for x in frontier:
        seen[x] = True
    while frontier:
        nxt = []
        for x in frontier:
            for row in s.successors(x):
                y = row[2]
                if not seen[y]:
                    seen[y] = True
                    nxt.append(int(y))
        frontier = nxt
    return subsystem(s, np.flatnonzero(seen))


def _refine(s1: FiniteSystem, s2: FiniteSystem,
            pairs: Set[Tuple[int, int]], symmetric: bool) -> Set[Tuple[int, int]]:
    """Greatest fixpoint removing pairs that violate transition matching
    (forward for simulation; both directions for bisimulation)."""
    changed = True
    while changed:
        changed = False
        for (a, b) in sorted(pairs):
            ok = True
            for row in s1.successors(a):
                a2 = int(row[2])
                if not any((a2, int(rb[2])) in pairs for rb in s2.successors(b)):
                    ok = False
                    break
            if ok and symmetric:
                for row in s2.successors(b):
                    b2 = int(row[2])
                    if not any((int(ra[2]), b2) in pairs for ra in s1.successors(a)):
                        ok = False
                        break
            if not ok:
                pairs.discard((a, b))
                changed = True
    return pairs


def _covers_initials(pairs: Set[Tuple[int, int]], init1, init2,
                     flipped: bool = False) -> bool:
    """Every state of init1 must be related to some state of init2."""
    partners: Dict[int, Set[int]] = {}
    for (p, q) in pairs:
        x, y = (q, p) if flipped else (p, q)
        partners.setdefault(x, set()).add(y)
    init2_set = set(int(i) for i in init2)
    return all(partners.get(int(a), set()) & init2_set for a in init1)


def check_simulation(s1: FiniteSystem, s2: FiniteSystem,
                     eps: float) -> Optional[Set[Tuple[int, int]]]:
    """Maximal eps-approximate simulation relation from s1 to s2, or None
    when some initial state of s1 cannot be related to an initial of s2."""
    if s1.output_dim != s2.output_dim:
        raise ValueError("systems must share the output space")
    pairs = set(_pair_candidates(s1, s2, eps))
    pairs = _refine(s1, s2, pairs, symmetric=False)
    if not _covers_initials(pairs, s1.initials, s2.initials):
        return None
    return pairs


def check_bisimulation(s1: FiniteSystem, s2: FiniteSystem,
                       eps: float) -> Optional[Set[Tuple[int, int]]]:
    """Maximal eps-approximate bisimulation relation between s1 and s2, or
    None when the mutual initial-state conditions fail."""
    if s1.output_dim != s2.output_dim:
        raise ValueError("systems must share the output space")
    pairs = set(_pair_candidates(s1, s2, eps))
    pairs = _refine(s1, s2, pairs, symmetric=True)
    if not _covers_initials(pairs, s1.initials, s2.initials):
        return None
    if not _covers_initials(pairs, s2.initials, s1.initials, flipped=True):
        return None
    return pairs
