"""Directed topologies, shortest-path routing and routing matrices."""

from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    NotStronglyConnected,
    ParseError,
    UnknownLink,
    UnknownNode,
)

TOPOLOGY_HEADER = ("link_id", "source", "target", "igp_weight")


@dataclass(frozen=True)
class Link:
    id: int
    source: str
    target: str
    igp_weight: float = 1.0
    # id of this link in the topology it was derived from (deletion variants)
    origin: int | None = None

    @property
    def original_id(self) -> int:
        return self.id if self.origin is None else self.origin


@dataclass(frozen=True)
class Topology:
    """A directed network with IGP-weighted links.

    Node order is significant: it fixes the canonical path ordering and is
    used for lexicographic tie-breaking between equal-weight routes.
    """

    nodes: tuple[str, ...]
    links: tuple[Link, ...]
    name: str = ""
    _node_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        index = {}
        for i, node in enumerate(self.nodes):
            if node in index:
                raise ValueError(f"duplicate node {node!r}")
            index[node] = i
        object.__setattr__(self, "_node_index", index)

        seen_pairs = set()
        for expected, link in enumerate(self.links):
            if link.id != expected:
                raise ValueError(
                    f"link ids must be consecutive from 0; got {link.id} at position {expected}"
                )
            if link.source not in index or link.target not in index:
                raise UnknownNode(f"link {link.id} references an unknown node")
            if link.source == link.target:
                raise ValueError(f"link {link.id} is a self-loop at {link.source!r}")
            if not link.igp_weight > 0:
                raise ValueError(f"link {link.id} has non-positive weight {link.igp_weight}")
            pair = (link.source, link.target)
            if pair in seen_pairs:
                raise ValueError(f"more than one link {link.source!r} -> {link.target!r}")
            seen_pairs.add(pair)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def node_index(self, node: str) -> int:
        try:
            return self._node_index[node]
        except KeyError:
            raise UnknownNode(f"unknown node {node!r}") from None

    def link_between(self, source: str, target: str) -> Link:
        for link in self.links:
            if link.source == source and link.target == target:
                return link
        raise UnknownLink(f"no link {source!r} -> {target!r}")

    def _adjacency(self, reverse=False):
        adj = [[] for _ in self.nodes]
        for link in self.links:
            u, v = self._node_index[link.source], self._node_index[link.target]
            if reverse:
                u, v = v, u
            adj[u].append((v, link))
        return adj

    @property
    def strongly_connected(self) -> bool:
        if self.n_nodes <= 1:
            return True
        for reverse in (False, True):
            adj = self._adjacency(reverse)
            seen = {0}
            stack = [0]
            while stack:
                u = stack.pop()
                for v, _ in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            if len(seen) != self.n_nodes:
                return False
        return True


def load_topology(path, name: str | None = None) -> Topology:
    """Read a ``link_id,source,target,igp_weight`` edge list.

    Link ids in the file may start at 0 or 1 (the bundled Abilene table is
    numbered 1-30 as printed); they are stored 0-based.  A blank weight
    defaults to 1.0.  Nodes are indexed in order of first appearance.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read topology file {path}: {exc}") from None
    return parse_topology(text, name=name or path.stem)


def parse_topology(text: str, name: str = "") -> Topology:
    reader = csv.reader(io.StringIO(text))
    rows = [(lineno, row) for lineno, row in enumerate(reader, start=1) if any(c.strip() for c in row)]
    if not rows:
        raise ParseError("empty topology file", line=1)
    header_line, header = rows[0]
    if tuple(c.strip() for c in header) != TOPOLOGY_HEADER:
        raise ParseError(f"expected header {','.join(TOPOLOGY_HEADER)}", line=header_line)
    if len(rows) == 1:
        raise ParseError("topology file has no links", line=header_line + 1)

    raw = []
    for lineno, row in rows[1:]:
        if len(row) not in (3, 4):
            raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno)
        try:
            link_id = int(row[0])
        except ValueError:
            raise ParseError(f"bad link id {row[0]!r}", line=lineno) from None
        weight_text = row[3].strip() if len(row) == 4 else ""
        try:
            weight = float(weight_text) if weight_text else 1.0
        except ValueError:
            raise ParseError(f"bad weight {weight_text!r}", line=lineno) from None
        if not weight > 0:
            raise ParseError(f"weight must be positive, got {weight}", line=lineno)
        raw.append((lineno, link_id, row[1].strip(), row[2].strip(), weight))

    ids = sorted(r[1] for r in raw)
    base = ids[0]
    if base not in (0, 1) or ids != list(range(base, base + len(ids))):
        raise ParseError("link ids must be consecutive integers starting at 0 or 1", line=raw[0][0])

    nodes = []
    for _, _, src, dst, _ in raw:
        for node in (src, dst):
            if node not in nodes:
                nodes.append(node)
    links = sorted(
        (Link(link_id - base, src, dst, weight) for _, link_id, src, dst, weight in raw),
        key=lambda link: link.id,
    )
    try:
        return Topology(tuple(nodes), tuple(links), name=name)
    except (ValueError, UnknownNode) as exc:
        raise ParseError(str(exc)) from None


def abilene() -> Topology:
    """The bundled 11-node, 30-link Abilene backbone with unit weights."""
    text = resources.files("pathmon.data").joinpath("abilene.csv").read_text()
    return parse_topology(text, name="abilene")


def write_topology(topology: Topology, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TOPOLOGY_HEADER)
        for link in topology.links:
            writer.writerow([link.id, link.source, link.target, repr(float(link.igp_weight))])


def delete_links(topology: Topology, link_ids) -> Topology:
    """Return a copy of ``topology`` without the given links.

    Remaining links are renumbered consecutively; ``Link.origin`` keeps the
    id they had in the intact topology.
    """
    link_ids = set(link_ids)
    unknown = link_ids - {link.id for link in topology.links}
    if unknown:
        raise UnknownLink(f"unknown link ids {sorted(unknown)}")
    if not link_ids:
        return topology
    kept = [link for link in topology.links if link.id not in link_ids]
    links = tuple(
        Link(i, link.source, link.target, link.igp_weight, origin=link.original_id)
        for i, link in enumerate(kept)
    )
    suffix = "-".join(str(i) for i in sorted(link_ids))
    return Topology(topology.nodes, links, name=f"{topology.name}-del{suffix}")


def shortest_paths(topology: Topology) -> dict[tuple[str, str], tuple[int, ...]]:
    """Minimum-weight route (as a link-id sequence) for every ordered node pair.

    Equal-weight routes are resolved in favour of the lexicographically
    smaller sequence of node indices, which makes the result deterministic.
    """
    adj = topology._adjacency()
    routes = {}
    for s in range(topology.n_nodes):
        # heap entries: (distance, node-index sequence, link sequence)
        heap = [(0.0, (s,), ())]
        done = set()
        while heap:
            dist, seq, hops = heapq.heappop(heap)
            u = seq[-1]
            if u in done:
                continue
            done.add(u)
            if u != s:
                routes[(topology.nodes[s], topology.nodes[u])] = hops
            for v, link in adj[u]:
                if v not in done:
                    heapq.heappush(heap, (dist + link.igp_weight, seq + (v,), hops + (link.id,)))
        if len(done) != topology.n_nodes:
            missing = next(topology.nodes[v] for v in range(topology.n_nodes) if v not in done)
            raise NotStronglyConnected(
                f"no route from {topology.nodes[s]!r} to {missing!r} in {topology.name or 'topology'}"
            )
    return routes


@dataclass(frozen=True)
class RoutingMatrix:
    """Binary path-by-link incidence matrix with its row and column labels.

    ``paths[i]`` is the (source, destination) pair of row ``i``, ``routes[i]``
    the link ids it traverses in order, and ``link_ids[j]`` the link id of
    column ``j``.
    """

    entries: np.ndarray
    paths: tuple[tuple[str, str], ...]
    routes: tuple[tuple[int, ...], ...]
    link_ids: tuple[int, ...]

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if entries.shape != (len(self.paths), len(self.link_ids)):
            raise DimensionMismatch(
                f"entries shape {entries.shape} does not match {len(self.paths)} paths x {len(self.link_ids)} links"
            )

    @property
    def n_paths(self) -> int:
        return self.entries.shape[0]

    @property
    def n_links(self) -> int:
        return self.entries.shape[1]

    def path_id(self, source: str, destination: str) -> int:
        try:
            return self.paths.index((source, destination))
        except ValueError:
            raise UnknownNode(f"no path {source!r} -> {destination!r}") from None

    def paths_from(self, source: str) -> list[int]:
        return [i for i, (s, _) in enumerate(self.paths) if s == source]

    def restrict(self, path_ids) -> RoutingMatrix:
        """Sub-matrix keeping the given rows, in ascending path-id order."""
        keep = sorted(set(path_ids))
        return RoutingMatrix(
            self.entries[keep],
            tuple(self.paths[i] for i in keep),
            tuple(self.routes[i] for i in keep),
            self.link_ids,
        )

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.entries))


def build_routing_matrix(topology: Topology) -> RoutingMatrix:
    """Routing matrix over all ordered node pairs, rows sorted by (source, destination) index."""
    routes = shortest_paths(topology)
    pairs = sorted(routes, key=lambda p: (topology.node_index(p[0]), topology.node_index(p[1])))
    entries = np.zeros((len(pairs), topology.n_links))
    for i, pair in enumerate(pairs):
        entries[i, list(routes[pair])] = 1.0
    return RoutingMatrix(
        entries,
        tuple(pairs),
        tuple(routes[p] for p in pairs),
        tuple(link.id for link in topology.links),
    )


def path_values(G: RoutingMatrix, x) -> np.ndarray:
    """Additive path metric ``y = G x`` (same units as ``x``).

    ``x`` may also be a 2-D array of shape (epochs, n_links); the result then
    has shape (epochs, n_paths).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != G.n_links:
        raise DimensionMismatch(f"expected {G.n_links} link values, got {x.shape[-1]}")
    return x @ G.entries.T
