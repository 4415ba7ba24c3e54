import numpy as np

from binaryne.graph import AttributeMatrix, Graph


def random_graph(n, p, seed) -> Graph:
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Graph.from_edges(np.column_stack([iu[keep], ju[keep]]), [str(i) for i in range(n)])


def random_attrs(n, a, density, seed) -> AttributeMatrix:
    rng = np.random.default_rng(seed)
    mask = rng.random((n, a)) < density
    nodes, attrs = np.nonzero(mask)
    return AttributeMatrix.from_triplets(nodes, attrs, rng.integers(1, 4, nodes.size), n, a)
