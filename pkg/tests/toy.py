"""Toy MRF instances and a brute-force oracle for the joint objective."""

import itertools

import numpy as np

from mrfbg.blocks import Label, NodeCoord
from mrfbg.repset import NodeState, Representative


def dct_matrix(n):
    c = np.zeros((n, n))
    for k in range(n):
        a = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
        c[k] = a * np.cos(np.pi * (2 * np.arange(n) + 1) * k / (2 * n))
    return c


def potential(patch):
    """Sum of |AC| DCT coefficients, per channel, via explicit basis matrices."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim == 2:
        patch = patch[:, :, None]
    h, w, c = patch.shape
    ch, cw = dct_matrix(h), dct_matrix(w)
    total = 0.0
    for z in range(c):
        t = ch @ patch[:, :, z] @ cw.T
        t[0, 0] = 0.0
        total += np.abs(t).sum()
    return total


def toy_instance(seed, cols, rows, n=4, max_reps=3):
    """Node states over a smooth true background with random distractors."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:rows * n, 0:cols * n]
    theta = rng.uniform(0, np.pi)
    field = 120 + 50 * np.cos((xx * np.cos(theta) + yy * np.sin(theta)) / rng.uniform(3, 8))
    field = np.rint(field + rng.integers(-3, 4, field.shape)).clip(0, 255)
    states = []
    for j in range(rows):
        row = []
        for i in range(cols):
            node = NodeCoord(i, j)
            true = field[j * n:(j + 1) * n, i * n:(i + 1) * n]
            blocks = [true]
            for _ in range(int(rng.integers(0, max_reps))):
                level = rng.uniform(20, 235)
                blocks.append(np.clip(level + rng.normal(0, rng.uniform(5, 60), (n, n)), 0, 255).round())
            order = rng.permutation(len(blocks))
            reps = []
            for k in order:
                lab = Label.from_block(node, blocks[k].astype(np.uint8)[:, :, None])
                reps.append(Representative(lab, int(rng.integers(3, 201))))
            row.append(NodeState(node, reps))
        states.append(row)
    return states


def objective(states, choice, w_max, eta, temperature):
    """Sum of log capped-weight likelihoods minus eta/T times all clique potentials."""
    rows, cols = len(states), len(states[0])
    n = states[0][0].reps[0].label.side
    total = 0.0
    img = np.zeros((rows * n, cols * n))
    for j in range(rows):
        for i in range(cols):
            s = states[j][i]
            w = np.minimum(np.array(s.weights, float), w_max)
            k = choice[j][i]
            total += np.log(w[k] / w.sum())
            img[j * n:(j + 1) * n, i * n:(i + 1) * n] = s.reps[k].label.block()[:, :, 0]
    energy = 0.0
    if rows >= 2 and cols >= 2:
        for j in range(rows - 1):
            for i in range(cols - 1):
                energy += potential(img[j * n:(j + 2) * n, i * n:(i + 2) * n])
    else:
        for j in range(rows):
            for i in range(cols - 1):
                energy += potential(img[j * n:(j + 1) * n, i * n:(i + 2) * n])
        for j in range(rows - 1):
            for i in range(cols):
                energy += potential(img[j * n:(j + 2) * n, i * n:(i + 1) * n])
    return total - eta * energy / temperature


def all_labelings(states):
    sizes = [s.size for row in states for s in row]
    cols = len(states[0])
    for combo in itertools.product(*[range(k) for k in sizes]):
        yield [list(combo[r * cols:(r + 1) * cols]) for r in range(len(states))]


def brute_force(states, p):
    best, best_choice = -np.inf, None
    for ch in all_labelings(states):
        v = objective(states, ch, p.w_max, p.eta, p.temperature)
        if v > best:
            best, best_choice = v, ch
    return best, best_choice


def one_node_optimal(states, choice, p, tol=1e-9):
    here = objective(states, choice, p.w_max, p.eta, p.temperature)
    for j, row in enumerate(states):
        for i, s in enumerate(row):
            for k in range(s.size):
                if k == choice[j][i]:
                    continue
                alt = [list(r) for r in choice]
                alt[j][i] = k
                if objective(states, alt, p.w_max, p.eta, p.temperature) > here + tol:
                    return False
    return True
