"""Background reconstruction as MAP labelling of an MRF over block nodes.

Nodes with a single representative seed the background. The remaining
nodes are filled most-constrained-first, each taking the representative
that maximises ``log l + eta * log p``: ``l`` is the capped-weight
likelihood and ``p`` a Gibbs prior over the node's candidates, whose
energies are sums of DCT clique potentials. Iterated conditional modes
then revisits nodes whose neighbourhood changed until nothing moves.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft
from scipy.special import logsumexp

from .blocks import NodeCoord, reassemble
from .imagio import Frame, FrameSequence
from .repset import CollectorParams, collect
from .similarity import SimilarityParams

log = logging.getLogger(__name__)

# (column offset, row offset) of the top-left member of each 2x2 clique
# containing a node: top-left, top-right, bottom-left, bottom-right.
QUAD_OFFSETS = ((-1, -1), (0, -1), (-1, 0), (0, 0))
NEIGHBOURS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
NEIGHBOURS_8 = tuple((di, dj) for dj in (-1, 0, 1) for di in (-1, 0, 1) if (di, dj) != (0, 0))


class UncoveredNode(ValueError):
    pass


class IsolatedNode(ValueError):
    pass


@dataclass(frozen=True)
class MrfParams:
    temperature: float = 1024.0
    w_max: float = 150.0
    eta: float = 3.0
    max_iters: int = 20
    f_min: int = 3
    sim: SimilarityParams = SimilarityParams()

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.w_max < 1:
            raise ValueError("w_max must be at least 1")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    @property
    def collector(self) -> CollectorParams:
        return CollectorParams(f_min=self.f_min, sim=self.sim)


@dataclass
class Reassignment:
    node: NodeCoord
    old: int
    new: int
    old_score: float
    new_score: float
    sweep: int


@dataclass
class IcmTrace:
    seeds: list = field(default_factory=list)
    fill_order: list = field(default_factory=list)
    pass_changes: list = field(default_factory=list)
    pass_visits: list = field(default_factory=list)
    reassignments: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return not self.pass_changes or self.pass_changes[-1] == 0


class Background:
    """Partial or complete assignment of one representative per node."""

    def __init__(self, states, n: int, channels: int):
        self.states = states
        self.rows = len(states)
        self.cols = len(states[0])
        self.n = n
        self.channels = channels
        self.choice = np.full((self.rows, self.cols), -1, dtype=int)
        self.pixels = np.zeros((self.rows, self.cols, n, n, channels), dtype=np.float64)
        self.trace = IcmTrace()

    @classmethod
    def for_states(cls, states):
        label = next(r.label for row in states for s in row for r in s.reps)
        return cls(states, label.side, label.channels)

    @property
    def dims(self):
        return self.cols, self.rows

    def inside(self, i, j) -> bool:
        return 0 <= i < self.cols and 0 <= j < self.rows

    def assigned(self, i, j) -> bool:
        return self.inside(i, j) and self.choice[j, i] >= 0

    def assign(self, node: NodeCoord, k: int):
        label = self.states[node.j][node.i].reps[k].label
        self.choice[node.j, node.i] = k
        self.pixels[node.j, node.i] = label.block()

    def label(self, node: NodeCoord):
        k = self.choice[node.j, node.i]
        return None if k < 0 else self.states[node.j][node.i].reps[k].label

    @property
    def complete(self) -> bool:
        return bool((self.choice >= 0).all())

    def to_frame(self, index: int = 0) -> Frame:
        """Reassembled image; unassigned nodes are left black."""
        return Frame(np.clip(np.rint(reassemble(self.pixels)), 0, 255).astype(np.uint8), index)

    def copy_choice(self):
        return self.choice.copy()


def clique_potential(patch) -> float:
    """Sum of absolute DCT coefficients of a patch, DC term excluded, over channels."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim == 2:
        patch = patch[:, :, None]
    return float(_potentials(patch[None])[0])


def _potentials(patches: np.ndarray) -> np.ndarray:
    # patches: (S, H, W, c) -> (S,)
    coeffs = fft.dctn(patches, type=2, norm="ortho", axes=(1, 2))
    coeffs[:, 0, 0, :] = 0.0
    return np.abs(coeffs).sum(axis=(1, 2, 3))


def quad_cliques(bg: Background, node: NodeCoord):
    """Top-left (column, row) of each in-bounds 2x2 clique whose other members are assigned."""
    usable = []
    for di, dj in QUAD_OFFSETS:
        i0, j0 = node.i + di, node.j + dj
        members = [(i0, j0), (i0 + 1, j0), (i0, j0 + 1), (i0 + 1, j0 + 1)]
        if not all(bg.inside(a, b) for a, b in members):
            continue
        if all(bg.assigned(a, b) for a, b in members if (a, b) != (node.i, node.j)):
            usable.append((i0, j0))
    return usable


def pair_cliques(bg: Background, node: NodeCoord):
    return [(node.i + di, node.j + dj) for di, dj in NEIGHBOURS_4 if bg.assigned(node.i + di, node.j + dj)]


def _candidate_patches(bg: Background, node: NodeCoord, blocks: np.ndarray, i0, j0, wc, hr):
    n = bg.n
    patches = np.empty((len(blocks), hr * n, wc * n, bg.channels))
    for b in range(hr):
        for a in range(wc):
            ii, jj = i0 + a, j0 + b
            sl = (slice(None), slice(b * n, (b + 1) * n), slice(a * n, (a + 1) * n))
            patches[sl] = blocks if (ii, jj) == (node.i, node.j) else bg.pixels[jj, ii]
    return patches


def candidate_energies(bg: Background, node: NodeCoord, blocks) -> np.ndarray:
    """Energy of each candidate block placed at ``node`` given the current background.

    Sums the potentials of the usable 2x2 cliques; when none is usable,
    falls back to two-node cliques with each assigned 4-neighbour.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim == 3:
        blocks = blocks[None]
    energy = np.zeros(len(blocks))
    quads = quad_cliques(bg, node)
    if quads:
        for i0, j0 in quads:
            energy += _potentials(_candidate_patches(bg, node, blocks, i0, j0, 2, 2))
        return energy
    pairs = pair_cliques(bg, node)
    if not pairs:
        raise IsolatedNode(f"isolated node {node}: no assigned 4-neighbour")
    for ii, jj in pairs:
        i0, j0 = min(ii, node.i), min(jj, node.j)
        wc, hr = (2, 1) if jj == node.j else (1, 2)
        energy += _potentials(_candidate_patches(bg, node, blocks, i0, j0, wc, hr))
    return energy


def node_energy(bg: Background, node: NodeCoord, candidate) -> float:
    block = candidate.block() if hasattr(candidate, "block") else candidate
    return float(candidate_energies(bg, node, block)[0])


def likelihood(weights, w_max: float = 150.0) -> np.ndarray:
    capped = np.minimum(np.asarray(weights, dtype=np.float64), w_max)
    return capped / capped.sum()


def log_prior(energies, temperature: float = 1024.0) -> np.ndarray:
    z = -np.asarray(energies, dtype=np.float64) / temperature
    return z - logsumexp(z)


def prior(energies, temperature: float = 1024.0) -> np.ndarray:
    """Gibbs distribution over a node's candidates: lower energy, higher probability."""
    p = np.exp(log_prior(energies, temperature))
    return p / p.sum()


def posterior_scores(weights, energies, p: MrfParams) -> np.ndarray:
    return np.log(likelihood(weights, p.w_max)) + p.eta * log_prior(energies, p.temperature)


def _node_scores(bg: Background, node: NodeCoord, p: MrfParams) -> np.ndarray:
    state = bg.states[node.j][node.i]
    blocks = np.stack([r.label.block() for r in state.reps])
    energies = candidate_energies(bg, node, blocks)
    return posterior_scores(state.weights, energies, p)


def select_label(state, bg: Background, node: NodeCoord, p: MrfParams) -> int:
    """Index of the representative maximising the weighted log-posterior.

    Ties go to the earliest registered representative.
    """
    if state.size == 1:
        return 0
    return int(np.argmax(_node_scores(bg, node, p)))


def seed_background(states) -> Background:
    """Assign every single-representative node; without any, seed the best corner."""
    for row in states:
        for s in row:
            if s.size == 0:
                raise UncoveredNode(f"uncovered node {s.node}: no representative registered")
    bg = Background.for_states(states)
    for row in states:
        for s in row:
            if s.size == 1:
                bg.assign(s.node, 0)
                bg.trace.seeds.append(s.node)
    if not bg.trace.seeds:
        corners = []
        for i, j in ((0, 0), (bg.cols - 1, 0), (0, bg.rows - 1), (bg.cols - 1, bg.rows - 1)):
            if (i, j) not in corners:
                corners.append((i, j))
        best = max(corners, key=lambda ij: (max(states[ij[1]][ij[0]].weights), -corners.index(ij)))
        s = states[best[1]][best[0]]
        bg.assign(s.node, s.max_weight_index())
        bg.trace.seeds.append(s.node)
    return bg


def _fill_key(bg: Background, i, j):
    quads = len(quad_cliques(bg, NodeCoord(i, j)))
    nbrs = sum(bg.assigned(i + di, j + dj) for di, dj in NEIGHBOURS_4)
    return (-quads, -nbrs, j, i)


def _fill(bg: Background, p: MrfParams, assigned_at: np.ndarray):
    step = int(assigned_at.max()) + 1
    heap, current = [], {}

    def push(i, j):
        key = _fill_key(bg, i, j)
        if key[:2] != (0, 0):
            current[(i, j)] = key
            heapq.heappush(heap, key)

    def unassigned():
        return [(i, j) for j in range(bg.rows) for i in range(bg.cols) if bg.choice[j, i] < 0]

    for i, j in unassigned():
        push(i, j)
    while True:
        while heap:
            key = heapq.heappop(heap)
            i, j = key[3], key[2]
            if bg.choice[j, i] >= 0 or current.get((i, j)) != key:
                continue
            node = NodeCoord(i, j)
            k = select_label(bg.states[j][i], bg, node, p)
            bg.assign(node, k)
            assigned_at[j, i] = step
            step += 1
            bg.trace.fill_order.append(node)
            for di, dj in NEIGHBOURS_8:
                if bg.inside(i + di, j + dj) and bg.choice[j + dj, i + di] < 0:
                    push(i + di, j + dj)
        rest = unassigned()
        if not rest:
            return
        # a region with no assigned neighbour anywhere: reseed it
        i, j = max(rest, key=lambda ij: (max(bg.states[ij[1]][ij[0]].weights), -ij[1], -ij[0]))
        s = bg.states[j][i]
        bg.assign(s.node, s.max_weight_index())
        assigned_at[j, i] = step
        step += 1
        bg.trace.seeds.append(s.node)
        for di, dj in NEIGHBOURS_8:
            if bg.inside(i + di, j + dj) and bg.choice[j + dj, i + di] < 0:
                push(i + di, j + dj)


def icm(states, p: MrfParams = MrfParams(), on_pass=None) -> Background:
    """Seed, fill and refine a complete background labelling.

    ``on_pass(pass_no, bg)`` is called after seeding (0), after the fill
    (1) and after every ICM sweep. The returned background carries an
    ``IcmTrace`` in ``bg.trace``.
    """
    bg = seed_background(states)
    # 0 marks seeds, later values the fill step at which a node was set
    assigned_at = np.where(bg.choice >= 0, 0, -1)
    if on_pass:
        on_pass(0, bg)
    _fill(bg, p, assigned_at)
    if on_pass:
        on_pass(1, bg)

    flagged = set()
    for j in range(bg.rows):
        for i in range(bg.cols):
            if states[j][i].size < 2:
                continue
            later = any(
                bg.inside(i + di, j + dj) and assigned_at[j + dj, i + di] > assigned_at[j, i]
                for di, dj in NEIGHBOURS_8
            )
            if later:
                flagged.add((j, i))

    for sweep in range(1, p.max_iters + 1):
        changed = []
        for j, i in sorted(flagged):
            state = states[j][i]
            if state.size < 2:
                continue
            node = NodeCoord(i, j)
            scores = _node_scores(bg, node, p)
            old = int(bg.choice[j, i])
            new = int(np.argmax(scores))
            if new != old:
                bg.assign(node, new)
                changed.append((j, i))
                bg.trace.reassignments.append(
                    Reassignment(node, old, new, float(scores[old]), float(scores[new]), sweep)
                )
                log.debug("sweep %d: node %s %d -> %d (score %.6g -> %.6g)",
                          sweep, node, old, new, scores[old], scores[new])
        bg.trace.pass_visits.append(len(flagged))
        bg.trace.pass_changes.append(len(changed))
        if on_pass:
            on_pass(sweep + 1, bg)
        if not changed:
            break
        flagged = {
            (j + dj, i + di)
            for j, i in changed
            for di, dj in NEIGHBOURS_8
            if bg.inside(i + di, j + dj)
        }
    else:
        log.warning("ICM stopped after %d sweeps without reaching a fixed point", p.max_iters)
    return bg


def joint_objective(bg: Background, p: MrfParams) -> float:
    """Log-posterior of a complete labelling, up to the global partition function.

    ``sum_nodes log l(x_node) - eta / T * sum_cliques V_c``, using every
    in-bounds 2x2 clique (or every adjacent pair when the grid is a single
    row or column). Its change under a single-node move equals that node's
    change in weighted log-posterior, so ICM increases it monotonically.
    """
    if not bg.complete:
        raise ValueError("objective needs a complete labelling")
    total = 0.0
    for j in range(bg.rows):
        for i in range(bg.cols):
            s = bg.states[j][i]
            total += float(np.log(likelihood(s.weights, p.w_max)[bg.choice[j, i]]))
    energy = 0.0
    if bg.rows >= 2 and bg.cols >= 2:
        windows = [(i, j, 2, 2) for j in range(bg.rows - 1) for i in range(bg.cols - 1)]
    else:
        windows = [(i, j, 2, 1) for j in range(bg.rows) for i in range(bg.cols - 1)]
        windows += [(i, j, 1, 2) for j in range(bg.rows - 1) for i in range(bg.cols)]
    for i, j, wc, hr in windows:
        patch = reassemble(bg.pixels[j:j + hr, i:i + wc])
        energy += clique_potential(patch)
    return total - p.eta * energy / p.temperature


def estimate_background(seq: FrameSequence, n: int = 16, p: MrfParams = MrfParams(), on_pass=None) -> Frame:
    """Clean background of a cluttered sequence (cropped to whole blocks)."""
    states = collect(seq, n, p.collector)
    bg = icm(states, p, on_pass=on_pass)
    log.info("background: %d seeds, %d filled, ICM changes per sweep %s",
             len(bg.trace.seeds), len(bg.trace.fill_order), bg.trace.pass_changes)
    return bg.to_frame()
