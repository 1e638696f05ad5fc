"""Compiled inner loops: the clock-order sweep, union-find crossing detection, and graph BFS."""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def evolve_sweep(order, edge_u, edge_v, kappa, opened, degrees):
    """Attempt edges in the given clock order; open one iff both endpoint degrees are below their constraints."""
    for i in range(order.size):
        e = order[i]
        u = edge_u[e]
        v = edge_v[e]
        if degrees[u] < kappa[u] and degrees[v] < kappa[v]:
            opened[e] = True
            degrees[u] += 1
            degrees[v] += 1


@numba.njit(cache=True)
def tiny_evolve_batch(orders, edge_u, edge_v, kappas, opened):
    """Batched sweep over many replicates of one small graph (kappas per replicate)."""
    n, m = orders.shape
    n_vertices = kappas.shape[1]
    deg = np.zeros(n_vertices, dtype=np.uint8)
    for i in range(n):
        for j in range(n_vertices):
            deg[j] = 0
        for j in range(m):
            e = orders[i, j]
            u = edge_u[e]
            v = edge_v[e]
            if deg[u] < kappas[i, u] and deg[v] < kappas[i, v]:
                opened[i, e] = True
                deg[u] += 1
                deg[v] += 1


@numba.njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@numba.njit(cache=True)
def crossing_sweep(order, clocks, edge_u, edge_v, kappa, left, right, n_vertices):
    """First clock at which the dynamics connects the left set to the right set (inf if never)."""
    parent = np.arange(n_vertices + 2)
    degrees = np.zeros(n_vertices, dtype=np.uint8)
    left_root = n_vertices
    right_root = n_vertices + 1
    for k in range(left.size):
        parent[_find(parent, left[k])] = left_root
    for k in range(right.size):
        parent[_find(parent, right[k])] = right_root
    for i in range(order.size):
        e = order[i]
        u = edge_u[e]
        v = edge_v[e]
        if degrees[u] < kappa[u] and degrees[v] < kappa[v]:
            degrees[u] += 1
            degrees[v] += 1
            ru = _find(parent, u)
            rv = _find(parent, v)
            if ru != rv:
                parent[ru] = rv
                if _find(parent, left_root) == _find(parent, right_root):
                    return clocks[e]
    return np.inf


@numba.njit(cache=True)
def csr_reach(indptr, nbrs, entry_ok, seeds, reached):
    """Mark every node reachable from the seeds through adjacency entries with entry_ok set."""
    queue = np.empty(indptr.size - 1, dtype=np.int64)
    tail = 0
    for k in range(seeds.size):
        s = seeds[k]
        if not reached[s]:
            reached[s] = True
            queue[tail] = s
            tail += 1
    head = 0
    while head < tail:
        v = queue[head]
        head += 1
        for k in range(indptr[v], indptr[v + 1]):
            if entry_ok[k]:
                w = nbrs[k]
                if not reached[w]:
                    reached[w] = True
                    queue[tail] = w
                    tail += 1
