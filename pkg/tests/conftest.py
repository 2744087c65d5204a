import itertools

import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


def brute_force_dims(nprocs, fixed=(None, None, None)):
    """Exhaustive oracle: every ordered triple over the divisors of nprocs."""
    divs = [d for d in range(1, nprocs + 1) if nprocs % d == 0]
    cands = [
        t
        for t in itertools.product(divs, repeat=3)
        if t[0] * t[1] * t[2] == nprocs and all(f is None or f == v for f, v in zip(fixed, t))
    ]
    if not cands:
        return None
    spread = min(max(t) - min(t) for t in cands)
    return max(t for t in cands if max(t) - min(t) == spread)


def tiling_layer_count(n, o, p, periodic):
    """Count distinct global layers by identifying shared layers between ranks.

    Nodes are (rank, local layer); rank c's top ``o`` layers are glued to rank
    c+1's bottom ``o`` layers (and the last rank to the first when periodic).
    """
    node = lambda c, l: c * n + l  # noqa: E731
    rows, cols = [], []
    links = [(c, c + 1) for c in range(p - 1)]
    if periodic:
        links.append((p - 1, 0))
    for a, b in links:
        for k in range(o):
            rows.append(node(a, n - o + k))
            cols.append(node(b, k))
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n * p, n * p))
    return connected_components(graph, directed=False)[0]


def oracle_global_index(l, c, n, o, s, p, periodic):
    """1-based global layer of local layer ``l`` on the rank at coordinate ``c``."""
    g = l + c * (n - o)
    if periodic:
        g = (g - 1) % (p * (n - o)) + 1
    return g


def oracle_extent(n, o, s, p, periodic):
    return p * (n - o) if periodic else s + (p - 1) * (n - o)


def scatter(G, n, o, shape, dims, periodic, coords):
    """Local array of the rank at ``coords`` read straight out of global array ``G``."""
    idx = []
    for d in range(3):
        layers = np.arange(1, shape[d] + 1)
        g = [oracle_global_index(l, coords[d], n[d], o[d], shape[d], dims[d], periodic[d]) for l in layers]
        idx.append(np.array(g) - 1)
    return G[np.ix_(*idx)].copy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TOPOLOGIES = [
    d for d in itertools.product(range(1, 5), repeat=3) if int(np.prod(d)) <= 8
]


def recv_mask(shape, n, o, dims, periodic, coords):
    """Cells in any receive layer that has a neighbor, from the halo-width formula."""
    mask = np.zeros(shape, dtype=bool)
    for d in range(3):
        s = shape[d]
        h = (s - (n[d] - o[d])) // 2
        if h == 0:
            continue
        index = [slice(None)] * 3
        if periodic[d] or coords[d] > 0:
            index[d] = slice(0, h)
            mask[tuple(index)] = True
        if periodic[d] or coords[d] < dims[d] - 1:
            index[d] = slice(s - h, s)
            mask[tuple(index)] = True
    return mask


def random_halo_case(rng, nfields=1):
    """Random topology (<= 8 ranks), overlap, staggering and periodicity."""
    dims = TOPOLOGIES[rng.integers(len(TOPOLOGIES))]
    o = tuple(int(rng.choice([2, 4])) for _ in range(3))
    periodic = tuple(bool(v) for v in rng.integers(0, 2, size=3))
    shapes = []
    n = []
    for d in range(3):
        # the stride n-o must cover the widest halo a staggered field may need
        n.append(int(rng.integers(o[d] + o[d] // 2 + 1, o[d] + 6)))
    n = tuple(n)
    for _ in range(nfields):
        shapes.append(tuple(n[d] + int(rng.integers(-1, 2)) for d in range(3)))
    return dims, n, o, periodic, shapes


def run_halo_case(dims, n, o, periodic, shapes, rng, transport_run=None):
    """Scatter random global fields, poison receive layers, update, return (got, expected, before)."""
    from igrid import finalize_global_grid, init_global_grid, update_halo
    from igrid.topology import coords_of_rank
    from igrid.transport import run_inproc

    nprocs = int(np.prod(dims))
    globals_ = [
        rng.random([oracle_extent(n[d], o[d], s[d], dims[d], periodic[d]) for d in range(3)])
        for s in shapes
    ]
    expected, before = [], []
    for r in range(nprocs):
        coords = coords_of_rank(r, dims)
        exp_r, bef_r = [], []
        for G, s in zip(globals_, shapes):
            local = scatter(G, n, o, s, dims, periodic, coords)
            exp_r.append(local.copy())
            mask = recv_mask(s, n, o, dims, periodic, coords)
            local[mask] = -1.0 - rng.random(int(mask.sum()))
            bef_r.append(local)
        expected.append(exp_r)
        before.append([a.copy() for a in bef_r])

    def body(comm):
        grid = init_global_grid(*n, comm=comm, dims=dims, periodic=periodic, overlap=o)
        try:
            fields = [a.copy() for a in before[comm.rank]]
            update_halo(grid, *fields)
            return fields
        finally:
            finalize_global_grid(grid)

    got = (transport_run or run_inproc)(nprocs, body)
    return got, expected, before


def run_tcp(nprocs, fn, *args, ranks=None, timeout=20.0, **kwargs):
    """Like run_inproc, but every thread rank connects over localhost TCP."""
    import threading

    from igrid.transport import free_port, rendezvous_connect

    address = f"127.0.0.1:{free_port()}"
    ranks = list(range(nprocs)) if ranks is None else ranks
    results, errors = {}, []

    def target(requested):
        try:
            comm = rendezvous_connect(address, nprocs, requested, timeout=timeout)
        except BaseException as exc:
            errors.append(exc)
            return
        try:
            results[comm.rank] = fn(comm, *args, **kwargs)
        except BaseException as exc:
            errors.append(exc)
        finally:
            comm.close()

    threads = [threading.Thread(target=target, args=(r,), daemon=True) for r in ranks]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return [results[r] for r in range(nprocs)]
