"""Per-node representative label sets gathered over a training sequence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import Label, NodeCoord, block_view
from .imagio import Frame, FrameSequence
from .similarity import SimilarityParams, similar


class SequenceTooShort(ValueError):
    pass


@dataclass(frozen=True)
class CollectorParams:
    f_min: int = 3
    sim: SimilarityParams = SimilarityParams()

    def __post_init__(self):
        if not 2 <= self.f_min <= 5:
            raise ValueError("f_min must lie in [2, 5]")


@dataclass
class Representative:
    label: Label
    weight: int


@dataclass
class NodeState:
    """Representatives of one node, in order of registration.

    ``pending`` holds the latest unmatched label and how many consecutive
    frames it has been seen; it becomes a representative after f_min.
    The run is matched against its first sighting, but the representative
    stores the sighting that completes the run: a block uncovered by a
    departing object is cleanest a few frames after the object has left.
    """

    node: NodeCoord
    reps: list = field(default_factory=list)
    pending: tuple | None = None

    @property
    def size(self) -> int:
        return len(self.reps)

    @property
    def weights(self):
        return [r.weight for r in self.reps]

    def max_weight_index(self) -> int:
        # np.argmax returns the first maximum: earliest registration wins ties
        return int(np.argmax(self.weights))

    def observe(self, incoming: Label, p: CollectorParams = CollectorParams()) -> "NodeState":
        """Fold one new label into the state (in place; returns self)."""
        if incoming.node != self.node:
            raise ValueError(f"label for {incoming.node} observed at node {self.node}")
        for rep in self.reps:
            if similar(incoming, rep.label, p.sim):
                rep.weight += 1
                self.pending = None
                return self
        if self.pending is not None and similar(incoming, self.pending[0], p.sim):
            label, count = self.pending
            count += 1
            if count >= p.f_min:
                self.reps.append(Representative(incoming, count))
                self.pending = None
            else:
                self.pending = (label, count)
        else:
            self.pending = (incoming, 1)
        return self


def observe(state: NodeState, incoming: Label, p: CollectorParams = CollectorParams()) -> NodeState:
    return state.observe(incoming, p)


def collect(seq: FrameSequence, n: int, p: CollectorParams = CollectorParams()):
    """Representative sets for every node of the cropped block grid.

    Returns ``states[j][i]`` for block row j, column i.
    """
    if len(seq) < p.f_min:
        raise SequenceTooShort(f"sequence too short: {len(seq)} frames < f_min={p.f_min}")
    stack = seq.stack()
    if n < 2 or n > min(stack.shape[1], stack.shape[2]):
        raise ValueError("block larger than frame")
    tiles = block_view(stack, n)  # (rows, cols, F, n, n, c)
    rows, cols, nf = tiles.shape[:3]
    channels = tiles.shape[-1]
    index = [fr.index for fr in seq]
    states = []
    for j in range(rows):
        row = []
        for i in range(cols):
            node = NodeCoord(i, j)
            vecs = np.ascontiguousarray(tiles[j, i].transpose(0, 3, 1, 2)).reshape(nf, -1)
            as_float = vecs.astype(np.float64)
            means = as_float.mean(axis=1)
            stds = as_float.std(axis=1)
            state = NodeState(node)
            for f in range(nf):
                state.observe(Label(node, vecs[f], index[f], channels, float(means[f]), float(stds[f])), p)
            row.append(state)
        states.append(row)
    return states


def contact_sheet(state: NodeState, pad: int = 2) -> Frame:
    """All representatives of a node side by side, for debugging."""
    if not state.reps:
        raise ValueError("node has no representatives")
    tiles = [r.label.block() for r in state.reps]
    n, channels = tiles[0].shape[0], tiles[0].shape[2]
    sheet = np.zeros((n, len(tiles) * (n + pad) - pad, channels), dtype=np.uint8)
    for k, t in enumerate(tiles):
        sheet[:, k * (n + pad):k * (n + pad) + n] = t
    return Frame(sheet)
