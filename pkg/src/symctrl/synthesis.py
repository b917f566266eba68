"""Controller synthesis: the abstract-compose-prune baseline and the
integrated on-the-fly algorithm, plus the space/time accounting used to
compare them.

Both routes produce a controller over the same state/input lattices and are
exactly bisimilar by construction; the integrated route explores only the
states reachable from the quantized initial set and keeps a single transition
per state, which is where its space advantage comes from.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np

from .abstraction import (DEFAULT_TRANSITION_CAP, AbstractionSpec,
                          ResourceLimitError, build_abstraction,
                          initial_indices, input_points)
from .dynamics import DEFAULT_SUBSTEPS, ControlSystem, _flow_tile
from .quantize import Lattice, SynthesisParams, ValidationReport, validate_parameters
from .tsys import FiniteSystem, compose, nonblocking_part

_SCAN_CHUNK = 256


class ParameterValidationError(ValueError):
    """Synthesis refused because the quantization inequalities fail and no
    override was given."""

    def __init__(self, report: ValidationReport):
        super().__init__("quantization parameters violate the abstraction "
                         "inequalities:\n" + report.describe())
        self.report = report


@dataclass
class Controller:
    """Symbolic controller: transitions (source, input, target) over lattice
    flat indices, the surviving initial states, and the states discarded as
    blocking during synthesis.

    Baseline controllers may keep several inputs per source; integrated ones
    keep exactly one.
    """

    transitions: np.ndarray  # (K, 3) int64, sorted by (source, input)
    initials: np.ndarray     # int64 flat state-lattice indices
    bad: np.ndarray          # int64 flat state-lattice indices
    state_lattice: Lattice
    input_lattice: Optional[Lattice]
    _first: Optional[Dict[int, List[Tuple[int, int]]]] = field(
        default=None, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.transitions, dtype=np.int64).reshape(-1, 3)
        if t.shape[0]:
            t = t[np.lexsort((t[:, 2], t[:, 1], t[:, 0]))]
        self.transitions = t
        self.initials = np.unique(np.asarray(self.initials, dtype=np.int64))
        self.bad = np.unique(np.asarray(self.bad, dtype=np.int64))

    def sources(self) -> np.ndarray:
        return np.unique(self.transitions[:, 0])

    @property
    def n_states(self) -> int:
        return int(self.sources().size)

    @property
    def n_transitions(self) -> int:
        return int(self.transitions.shape[0])

    def input_values(self) -> np.ndarray:
        if self.input_lattice is None:
            return np.zeros((1, 0))
        return self.input_lattice.points()

    def lookup(self, state: int) -> Optional[Tuple[int, int]]:
        """(input index, target) for a state: the unique transition, or the
        one with the lowest input index when several exist."""
        opts = self.options(state)
        return opts[0] if opts else None

    def options(self, state: int) -> List[Tuple[int, int]]:
        """All (input index, target) transitions of a state, by input order."""
        if self._first is None:
            table: Dict[int, List[Tuple[int, int]]] = {}
            for src, uix, dst in self.transitions:
                table.setdefault(int(src), []).append((int(uix), int(dst)))
            self._first = table
        return self._first.get(int(state), [])


@dataclass
class Metrics:
    """Size and effort counters for one synthesis run.

    memory_units weighs each stored transition as three data and each state
    as one datum: the baseline route counts the transitions of both symbolic
    models plus the composition; the integrated route counts its controller
    transitions plus the blocking states it had to record.  steps counts
    basic algorithm steps (flow evaluations, composition candidate checks,
    pruning operations); wall_time_ms is informational only.
    """

    states: int
    transitions: int
    memory_units: int
    steps: int
    wall_time_ms: float = 0.0

    def as_dict(self) -> dict:
        return {"states": self.states, "transitions": self.transitions,
                "memory_units": self.memory_units, "steps": self.steps,
                "wall_time_ms": round(self.wall_time_ms, 3)}


def baseline_memory_units(plant_transitions: int, spec_transitions: int,
                          composed_transitions: int) -> int:
    """Peak data count of the baseline route, three per stored transition."""
    return 3 * (plant_transitions + spec_transitions + composed_transitions)


def integrated_memory_units(controller_transitions: int, bad_states: int) -> int:
    """Peak data count of the integrated route: three per kept transition
    plus one per recorded blocking state."""
    return 3 * controller_transitions + bad_states


def _require_valid(plant: ControlSystem, specification: ControlSystem,
                   params: SynthesisParams, force: bool) -> None:
    if plant.certificate is None or specification.certificate is None:
        if force:
            return
        raise ParameterValidationError(ValidationReport([]))
    report = validate_parameters(plant.certificate, specification.certificate,
                                 params)
    if not report.passed and not force:
        raise ParameterValidationError(report)


def _shared_boxes(plant: ControlSystem, specification: ControlSystem):
    state = np.column_stack([
        np.maximum(plant.state_box[:, 0], specification.state_box[:, 0]),
        np.minimum(plant.state_box[:, 1], specification.state_box[:, 1])])
    init = np.column_stack([
        np.maximum(plant.init_box[:, 0], specification.init_box[:, 0]),
        np.minimum(plant.init_box[:, 1], specification.init_box[:, 1])])
    return state, init


def _empty_controller(plant: ControlSystem, specification: ControlSystem,
                      params: SynthesisParams) -> Controller:
    state_box, _ = _shared_boxes(plant, specification)
    try:
        st_lat = Lattice(state_box, 2.0 * params.eta)
    except ValueError:
        st_lat = Lattice(plant.state_box, 2.0 * params.eta)
    in_lat = Lattice(plant.input_box, 2.0 * params.mu) if plant.m else None
    return Controller(np.zeros((0, 3), dtype=np.int64), [], [], st_lat, in_lat)


def controller_to_system(ctrl: Controller) -> FiniteSystem:
    """View a controller as a finite transition system embedded at its
    lattice coordinates (used for the bisimulation cross-checks)."""
    t = ctrl.transitions
    states = np.unique(np.concatenate([t[:, 0], t[:, 2], ctrl.initials]))
    outputs = (ctrl.state_lattice.points()[states] if states.size
               else np.zeros((0, ctrl.state_lattice.dim)))
    remap = {int(s): k for k, s in enumerate(states)}
    rows = np.asarray([[remap[int(a)], int(u), remap[int(b)]]
                       for a, u, b in t], dtype=np.int64).reshape(-1, 3)
    initials = np.asarray([remap[int(i)] for i in ctrl.initials], dtype=np.int64)
    return FiniteSystem(outputs, initials, ctrl.input_values(), rows)


def synthesize_baseline(plant: ControlSystem, specification: ControlSystem,
                        params: SynthesisParams,
                        substeps: int = DEFAULT_SUBSTEPS, *,
                        force: bool = False,
                        transition_cap: Optional[int] = DEFAULT_TRANSITION_CAP,
                        threads: Optional[int] = None
                        ) -> Tuple[Controller, Metrics]:
    """Abstract both systems, compose them exactly, prune to the non-blocking
    part, and project the surviving diagonal pairs onto the state lattice."""
    ctrl, metrics, _ = baseline_artifacts(
        plant, specification, params, substeps, force=force,
        transition_cap=transition_cap, threads=threads)
    return ctrl, metrics


def baseline_artifacts(plant: ControlSystem, specification: ControlSystem,
                       params: SynthesisParams,
                       substeps: int = DEFAULT_SUBSTEPS, *,
                       force: bool = False,
                       transition_cap: Optional[int] = DEFAULT_TRANSITION_CAP,
                       threads: Optional[int] = None):
    """Baseline synthesis returning (controller, metrics, systems) where
    systems = (plant model, spec model, composition, non-blocking part)."""
    _require_valid(plant, specification, params, force)
    t0 = time.perf_counter()
    sp = build_abstraction(
        plant, AbstractionSpec(params.tau, params.eta,
                               params.mu if plant.m else None, substeps),
        threads=threads, transition_cap=transition_cap)
    sq = build_abstraction(
        specification, AbstractionSpec(params.tau, params.eta,
                                       params.mu if specification.m else None,
                                       substeps),
        threads=threads, transition_cap=transition_cap)
    cstar = compose(sp, sq, 0.0)
    if transition_cap is not None and cstar.n_transitions > transition_cap:
        raise ResourceLimitError(
            f"composition has {cstar.n_transitions} transitions, cap "
            f"{transition_cap}")
    nb = nonblocking_part(cstar)

    state_box, _ = _shared_boxes(plant, specification)
    try:
        st_lat = Lattice(state_box, 2.0 * params.eta)
    except ValueError:
        st_lat = Lattice(plant.state_box, 2.0 * params.eta)
    in_lat = Lattice(plant.input_box, 2.0 * params.mu) if plant.m else None
    if sq.n_inputs != 1:
        raise ValueError("specification must expose a single (zero) input")
    if nb.n_transitions:
        flat = st_lat.quantize_many(nb.outputs)
        rows = np.column_stack([flat[nb.transitions[:, 0]],
                                nb.transitions[:, 1],  # v = u_plant * 1 + 0
                                flat[nb.transitions[:, 2]]])
        initials = flat[nb.initials]
    else:
        rows = np.zeros((0, 3), dtype=np.int64)
        initials = np.zeros(0, dtype=np.int64)
    ctrl = Controller(rows, initials, [], st_lat, in_lat)

    deg_p = sp.out_degree()
    deg_q = sq.out_degree()
    pair_candidates = 0
    if cstar.n_states:
        flat_q = st_lat.quantize_many(sq.outputs)
        match = {}
        for j, fq in enumerate(flat_q):
            match.setdefault(int(fq), []).append(j)
        flat_p = st_lat.quantize_many(sp.outputs)
        for i, fp in enumerate(flat_p):
            for j in match.get(int(fp), ()):
                pair_candidates += int(deg_p[i]) * int(deg_q[j])
    steps = (sp.n_states * sp.n_inputs + sq.n_states + pair_candidates
             + (cstar.n_transitions - nb.n_transitions)
             + (cstar.n_states - nb.n_states))
    metrics = Metrics(
        states=nb.n_states,
        transitions=nb.n_transitions,
        memory_units=baseline_memory_units(sp.n_transitions, sq.n_transitions,
                                           cstar.n_transitions),
        steps=steps,
        wall_time_ms=(time.perf_counter() - t0) * 1e3)
    return ctrl, metrics, (sp, sq, cstar, nb)


def nonblock_backprop(transitions: Iterable[Tuple[int, int, int]], x: int,
                      bad: Iterable[int]) -> Tuple[Set[Tuple[int, int, int]],
                                                   Set[int]]:
    """Back-propagate the blocking state x through the transition set.

    Starting from the worklist {x}, repeatedly take a state y, delete every
    transition (z, u, y) entering it, enqueue each such z, and move y to the
    bad set.  Assumes each source keeps a single outgoing transition, so a
    deleted predecessor is itself blocking.
    """
    t: Set[Tuple[int, int, int]] = {(int(a), int(u), int(b))
                                    for a, u, b in transitions}
    bad_set: Set[int] = {int(b) for b in bad}
    preds: Dict[int, List[Tuple[int, int]]] = {}
    for (z, u, y) in t:
        preds.setdefault(y, []).append((z, u))
    work = deque([int(x)])
    queued = {int(x)}
    while work:
        y = work.popleft()
        for (z, u) in preds.get(y, ()):
            if (z, u, y) in t:
                t.remove((z, u, y))
                if z not in queued and z not in bad_set:
                    queued.add(z)
                    work.append(z)
        bad_set.add(y)
    return t, bad_set


def synthesize_integrated(plant: ControlSystem, specification: ControlSystem,
                          params: SynthesisParams,
                          substeps: int = DEFAULT_SUBSTEPS, *,
                          force: bool = False,
                          transition_cap: Optional[int] = DEFAULT_TRANSITION_CAP,
                          threads: Optional[int] = None
                          ) -> Tuple[Controller, Metrics]:
    """On-the-fly synthesis over the shared state lattice.

    Breadth-first over the quantized initial set: for each frontier state x,
    quantize the specification successor y; unless y is known blocking, scan
    the input lattice for inputs whose plant flow lands in y's cell, keeping
    the most centered landing.  Matches append (x, u, y) and enqueue y;
    failures back-propagate x through the transitions built so far.  Every
    lattice state is processed at most once.
    """
    _require_valid(plant, specification, params, force)
    t0 = time.perf_counter()
    state_box, init_box = _shared_boxes(plant, specification)
    if np.any(state_box[:, 0] > state_box[:, 1]) or np.any(
            init_box[:, 0] > init_box[:, 1]):
        ctrl = _empty_controller(plant, specification, params)
        return ctrl, Metrics(0, 0, 0, 0, (time.perf_counter() - t0) * 1e3)
    st_lat = Lattice(state_box, 2.0 * params.eta)
    in_lat = Lattice(plant.input_box, 2.0 * params.mu) if plant.m else None
    u_pts = input_points(plant, params.mu if plant.m else None)
    n_u = u_pts.shape[0]
    if transition_cap is not None and st_lat.n_points * n_u > transition_cap:
        raise ResourceLimitError(
            f"{st_lat.n_points * n_u} candidate transitions exceed the cap "
            f"{transition_cap}")
    st_pts = st_lat.points()

    UNSEEN, QUEUED, CONTROLLED, BAD = 0, 1, 2, 3
    status = np.zeros(st_lat.n_points, dtype=np.int8)
    trans: Dict[int, Tuple[int, int]] = {}
    preds: Dict[int, List[int]] = {}
    steps = 0
    bad_count = 0

    def backprop(x0: int) -> None:
        nonlocal steps, bad_count
        work = deque([x0])
        while work:
            y = work.popleft()
            if status[y] == BAD:
                continue
            status[y] = BAD
            bad_count += 1
            steps += 1
            for z in preds.pop(y, ()):
                rec = trans.get(z)
                if rec is not None and rec[1] == y:
                    del trans[z]
                    steps += 1
                    work.append(z)

    x0_indices = initial_indices(st_lat, init_box)
    wave: List[int] = [int(i) for i in x0_indices]
    for x in wave:
        status[x] = QUEUED
    zero_u = np.zeros((1, specification.m))
    while wave:
        spec_z = _flow_tile(specification, st_pts[wave],
                            np.repeat(zero_u, len(wave), axis=0),
                            params.tau, substeps)
        next_wave: List[int] = []
        for pos, x in enumerate(wave):
            if status[x] != QUEUED:
                continue
            steps += 1  # specification successor of x
            z = spec_z[pos]
            y: Optional[int] = None
            if np.all(np.isfinite(z)):
                y = st_lat.quantize_index(z)
            if y is None or status[y] == BAD:
                backprop(x)
                continue
            # scan the whole input lattice and keep the admissible input whose
            # landing sits closest to the target cell center: any admissible
            # input yields the same controller sets, but the centered landing
            # maximizes the closed loop's quantization margin
            found: Optional[int] = None
            best = np.inf
            xs = st_pts[x].reshape(1, -1)
            y_pt = st_pts[y]
            for a in range(0, n_u, _SCAN_CHUNK):
                chunk = u_pts[a:a + _SCAN_CHUNK]
                Z = _flow_tile(plant, np.repeat(xs, chunk.shape[0], axis=0),
                               chunk, params.tau, substeps)
                ok = (np.all(np.isfinite(Z), axis=1)
                      & (st_lat.quantize_many(Z) == y))
                hits = np.flatnonzero(ok)
                if hits.size:
                    dist = np.max(np.abs(Z[hits] - y_pt), axis=1)
                    pick = int(np.argmin(dist))
                    if float(dist[pick]) < best:
                        best = float(dist[pick])
                        found = a + int(hits[pick])
            steps += n_u
            if found is None:
                backprop(x)
                continue
            trans[x] = (found, y)
            preds.setdefault(y, []).append(x)
            status[x] = CONTROLLED
            if status[y] == UNSEEN:
                status[y] = QUEUED
                next_wave.append(y)
        wave = next_wave

    rows = np.asarray([[x, u, y] for x, (u, y) in sorted(trans.items())],
                      dtype=np.int64).reshape(-1, 3)
    sources = set(trans.keys())
    initials = np.asarray(sorted(int(i) for i in x0_indices
                                 if int(i) in sources), dtype=np.int64)
    bad_states = np.flatnonzero(status == BAD)
    ctrl = Controller(rows, initials, bad_states, st_lat, in_lat)
    metrics = Metrics(
        states=len(trans), transitions=len(trans),
        memory_units=integrated_memory_units(len(trans), bad_count),
        steps=steps, wall_time_ms=(time.perf_counter() - t0) * 1e3)
    return ctrl, metrics
