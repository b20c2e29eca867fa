import numpy as np
import pytest

from copurchase import metadata
from copurchase.graph import CoPurchaseGraph
from copurchase.metadata import CategoryPath, ProductRecord, ReviewSummary

GROUPS = ("Book", "DVD", "Music", "Video")


def make_catalog(n_comm=6, clique=6, leaves=20, seed=0, extras=True):
    """Community-structured product catalog.

    Each community is a hub clique with pendant leaf products (degree 1);
    communities are chained by single bridge edges so the live products form
    one connected component.  Products in a community share a group and a
    3-level category prefix.  ``extras`` appends edge cases: an isolated
    product, a discontinued one, one missing its group, a duplicate ASIN,
    and one whose similar list points at a nonexistent ASIN.
    """
    rng = np.random.default_rng(seed)

    def asin(i):
        return f"{i:010d}"

    nid = 0
    comm_nodes = []
    for _ in range(n_comm):
        hub = list(range(nid, nid + clique))
        nid += clique
        leaf = list(range(nid, nid + leaves))
        nid += leaves
        comm_nodes.append((hub, leaf))
    n = nid
    sim = {i: set() for i in range(n)}
    for c, (hub, leaf) in enumerate(comm_nodes):
        for i in hub:
            for j in hub:
                if i < j:
                    sim[i].add(j)
        for k, leaf_node in enumerate(leaf):
            sim[leaf_node].add(hub[k % len(hub)])
        if c + 1 < n_comm:
            sim[hub[0]].add(comm_nodes[c + 1][0][0])

    records = []
    for c, (hub, leaf) in enumerate(comm_nodes):
        base = [1000 + c, 2000 + c, 3000 + c]
        for i in hub + leaf:
            path = CategoryPath(tuple((f"L{v}", v) for v in base + [4000 + i]))
            records.append(
                ProductRecord(
                    id=i,
                    asin=asin(i),
                    title=f"Product {i}",
                    group=GROUPS[c % len(GROUPS)],
                    salesrank=int(rng.integers(1, 10**6)),
                    similar_asins=tuple(asin(j) for j in sorted(sim[i])),
                    category_paths=(path,),
                    review_summary=ReviewSummary(2, 2, 4.5),
                )
            )
    if extras:
        records.append(ProductRecord(id=n, asin=asin(n), title="Isolated", group="Book"))
        records.append(ProductRecord(id=n + 1, asin=asin(n + 1), discontinued=True))
        records.append(ProductRecord(id=n + 2, asin=asin(n + 2), title="No group"))
        records.append(ProductRecord(id=n + 3, asin=asin(0), title="Duplicate", group="DVD"))
        records.append(
            ProductRecord(
                id=n + 4, asin=asin(n + 4), title="Dangler", group="Music",
                similar_asins=("ZZZZZZZZZZ",),
            )
        )
    return records


def grouped_graph(n, edges, groups=None, category_ids=None):
    return CoPurchaseGraph.from_edge_list(
        n, edges, groups=groups, category_ids=category_ids
    )


def random_gnp_graph(n, p, seed, groups=None):
    """Erdos-Renyi fixture graph."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(len(iu)) < p
    edges = list(zip(iu[mask].tolist(), ju[mask].tolist()))
    return CoPurchaseGraph.from_edge_list(n, edges, groups=groups)


@pytest.fixture
def catalog_records():
    return make_catalog()


@pytest.fixture
def catalog_graph(catalog_records):
    from copurchase.graph import build_graph
    from copurchase.metadata import filter_valid

    return build_graph(filter_valid(catalog_records))


@pytest.fixture
def catalog_lcc(catalog_graph):
    from copurchase.graph import largest_cc

    return largest_cc(catalog_graph)[0]


@pytest.fixture
def two_triangles_bridged():
    # two triangles joined by one edge; optimum splits the triangles
    return CoPurchaseGraph.from_edge_list(
        6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
    )


@pytest.fixture
def metadata_file(tmp_path, catalog_records):
    path = tmp_path / "amazon-meta.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# synthetic catalog fixture\n")
        fh.write(f"Total items: {len(catalog_records)}\n\n")
        for rec in catalog_records:
            fh.write(metadata.format_record(rec))
            fh.write("\n")
    return path
