import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrfbg.blocks import (BlockError, Label, NodeCoord, dct2, descriptor, descriptors, idct2, lattice_blocks,
                          lattice_origins, overlapping_blocks, partition, reassemble, zigzag_indices)
from mrfbg.imagio import Frame


def dct_matrix(n):
    # orthonormal DCT-II basis written out from its definition
    c = np.zeros((n, n))
    for k in range(n):
        a = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
        for x in range(n):
            c[k, x] = a * np.cos(np.pi * (2 * x + 1) * k / (2 * n))
    return c


@pytest.mark.parametrize("n", [2, 5, 8, 16])
def test_dct_matches_definition(rng, n):
    x = rng.normal(size=(n, n)) * 50
    c = dct_matrix(n)
    assert np.allclose(dct2(x), c @ x @ c.T, atol=1e-9)


def test_dct_parseval_direct_sum(rng):
    x = rng.uniform(0, 255, size=(8, 8))
    t = dct2(x)
    lhs = sum(t[v, u] ** 2 for v in range(8) for u in range(8))
    rhs = sum(x[v, u] ** 2 for v in range(8) for u in range(8))
    assert abs(lhs - rhs) <= 1e-9 * rhs


def test_dct_constant_and_zero():
    t = dct2(np.full((16, 16), 7.0))
    assert t[0, 0] == pytest.approx(16 * 7)
    t[0, 0] = 0
    assert np.abs(t).max() < 1e-9
    assert not dct2(np.zeros((4, 4))).any()


def test_dct_shape_error():
    with pytest.raises(BlockError, match="shape error"):
        dct2(np.zeros((4, 5)))


@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_dct_roundtrip(n, seed):
    x = np.random.default_rng(seed).uniform(-300, 300, size=(n, n))
    assert np.allclose(idct2(dct2(x)), x, atol=1e-9)


def test_zigzag_jpeg_order():
    rows, cols = zigzag_indices(8)
    head = list(zip(rows[:10].tolist(), cols[:10].tolist()))
    assert head == [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2), (2, 1), (3, 0)]
    assert sorted(zip(rows.tolist(), cols.tolist())) == [(v, u) for v in range(8) for u in range(8)]
    assert (rows[-1], cols[-1]) == (7, 7)


def test_descriptor_constant_block():
    lab = Label.from_block(NodeCoord(0, 0), np.full((16, 16, 1), 10, np.uint8))
    assert np.allclose(descriptor(lab, 4), [160, 0, 0, 0])


def test_descriptor_offset_changes_dc_only(rng):
    a = rng.integers(0, 200, size=(16, 16, 1))
    da = descriptors(a, 6)
    db = descriptors(a + 9, 6)
    assert db[0] - da[0] == pytest.approx(16 * 9)
    assert np.allclose(db[1:], da[1:])


def test_descriptor_channel_major(rng):
    blk = rng.integers(0, 255, size=(8, 8, 3)).astype(float)
    rows, cols = zigzag_indices(8)
    want = np.concatenate([dct2(blk[:, :, z])[rows[:3], cols[:3]] for z in range(3)])
    assert np.allclose(descriptors(blk, 3), want)


def test_full_descriptor_is_invertible(rng):
    blk = rng.integers(0, 255, size=(4, 4, 1)).astype(float)
    d = descriptors(blk, 16)
    rows, cols = zigzag_indices(4)
    coeffs = np.zeros((4, 4))
    coeffs[rows, cols] = d
    assert np.allclose(idct2(coeffs), blk[:, :, 0])


def test_descriptor_bounds():
    with pytest.raises(BlockError):
        descriptors(np.zeros((4, 4, 1)), 17)


@pytest.mark.parametrize("w,h,n,grid", [(384, 288, 16, (24, 18)), (16, 16, 16, (1, 1)), (20, 20, 16, (1, 1))])
def test_partition_grid(w, h, n, grid):
    g = partition(Frame(np.zeros((h, w), np.uint8)), n)
    assert (len(g[0]), len(g)) == grid


def test_partition_single_block_equals_frame(rng):
    data = rng.integers(0, 255, size=(16, 16, 3)).astype(np.uint8)
    lab = partition(Frame(data, index=7), 16)[0][0]
    assert lab.values.size == 256 * 3
    assert lab.source_frame == 7
    assert np.array_equal(lab.block(), data)
    # channel-major: all of channel 0 first
    assert np.array_equal(lab.values[:256], data[:, :, 0].ravel())


def test_partition_errors():
    fr = Frame(np.zeros((10, 12), np.uint8))
    with pytest.raises(BlockError, match="block larger than frame"):
        partition(fr, 11)
    with pytest.raises(BlockError):
        partition(fr, 1)


@given(st.integers(2, 6), st.integers(1, 4), st.integers(1, 4), st.integers(0, 5), st.integers(0, 5))
def test_partition_reassemble_identity(n, cols, rows, extra_w, extra_h):
    rng = np.random.default_rng(n * 100 + cols * 10 + rows)
    data = rng.integers(0, 256, size=(rows * n + extra_h, cols * n + extra_w, 1)).astype(np.uint8)
    grid = partition(Frame(data), n)
    tiles = np.stack([np.stack([lab.block() for lab in row]) for row in grid])
    h, w = (data.shape[0] // n) * n, (data.shape[1] // n) * n
    assert np.array_equal(reassemble(tiles), data[:h, :w])


def test_lattice_count_and_step_equals_partition(rng):
    fr = Frame(rng.integers(0, 255, size=(32, 32)).astype(np.uint8))
    assert len(overlapping_blocks(fr, 16, 8)) == 9
    flat = overlapping_blocks(fr, 16, 16)
    grid = partition(fr, 16)
    assert [b.tolist() for _, b in flat] == [lab.block().tolist() for row in grid for lab in row]


def coverage(width, height, n, step):
    cover = np.zeros((height, width), int)
    for y in lattice_origins(height, n, step):
        for x in lattice_origins(width, n, step):
            cover[y:y + n, x:x + n] += 1
    return cover


def test_centre_covered_by_four():
    assert coverage(64, 64, 16, 8)[32, 32] == 4


@given(st.integers(2, 60), st.integers(2, 16), st.data())
def test_every_pixel_covered(length, n, data):
    n = min(n, length)
    step = data.draw(st.integers(1, n))
    origins = lattice_origins(length, n, step)
    covered = np.zeros(length, bool)
    for o in origins:
        covered[o:o + n] = True
    assert covered.all()
    assert origins[-1] == length - n
    assert origins == sorted(set(origins))


def test_lattice_blocks_match_list(rng):
    data = rng.integers(0, 255, size=(37, 29, 3)).astype(np.uint8)
    blocks, xs, ys = lattice_blocks(data, 8, 4)
    listed = overlapping_blocks(Frame(data), 8, 4)
    assert blocks.shape[:2] == (len(ys), len(xs))
    k = 0
    for r, y in enumerate(ys):
        for c, x in enumerate(xs):
            assert listed[k][0] == (x, y)
            assert np.array_equal(blocks[r, c], listed[k][1])
            k += 1
