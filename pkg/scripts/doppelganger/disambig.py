"""
Scene-graph layer: four-score voting, threshold pruning and connected components.
"""

import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

from scipy.cluster.hierarchy import DisjointSet

from doppelganger.errors import DomainError, UsageError

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.8


def _check_probability(name: str, value: float):
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise DomainError(f"{name} must be a probability in [0, 1], got {value!r}")


@dataclass(frozen=True)
class ScoreQuad:
    """
    The four classifier scores of one pair: (pq head 1, pq head 2, qp head 1, qp head 2).
    """
    s: tuple[float, float, float, float]

    def __post_init__(self):
        scores = tuple(float(v) for v in self.s)
        if len(scores) != 4:
            raise DomainError(f"a score quad needs exactly 4 scores, got {len(scores)}")
        for value in scores:
            _check_probability("score", value)
        object.__setattr__(self, "s", scores)


def aggregate(quad: ScoreQuad) -> float:
    """
    Majority vote over the four scores: max when more scores exceed 0.5 than
    fall below it, min in the opposite case, mean on a tie. Scores of exactly
    0.5 vote for neither side.
    """
    scores = quad.s
    above = sum(1 for s in scores if s > 0.5)
    below = sum(1 for s in scores if s < 0.5)
    if above > below:
        return max(scores)
    if above < below:
        return min(scores)
    return sum(scores) / 4.0


@dataclass(frozen=True)
class EdgeData:
    """
    - score: final probability that the pair is a true match
    - quad: the four raw scores when the edge came from a two-head classifier
    - num_inliers: verified matches, when known
    """
    score: float
    quad: ScoreQuad | None = None
    num_inliers: int | None = None

    def __post_init__(self):
        _check_probability("edge score", self.score)
        if self.quad is not None and self.score != aggregate(self.quad):
            raise UsageError(f"edge score {self.score} disagrees with its quad vote {aggregate(self.quad)}")

    @classmethod
    def from_quad(cls, quad: ScoreQuad, num_inliers: int | None = None) -> "EdgeData":
        return cls(aggregate(quad), quad, num_inliers)


def edge_key(id_a: str, id_b: str) -> tuple[str, str]:
    if id_a == id_b:
        raise UsageError(f"self-edge on image {id_a!r}")
    return (id_a, id_b) if id_a < id_b else (id_b, id_a)


class SceneGraph:
    """
    Images as nodes, matched pairs as scored edges. Immutable once built.
    """

    def __init__(self, nodes: Iterable[str], edges: Mapping[tuple[str, str], EdgeData]):
        self._nodes = frozenset(nodes)
        self._edges = MappingProxyType(dict(edges))
        for a, b in self._edges:
            if a == b or b < a:
                raise UsageError(f"edge key ({a!r}, {b!r}) is not normalized")
            if a not in self._nodes or b not in self._nodes:
                raise UsageError(f"edge {a}-{b} references an unknown image")

    @property
    def nodes(self) -> frozenset:
        return self._nodes

    @property
    def edges(self) -> Mapping[tuple[str, str], EdgeData]:
        return self._edges

    def edge(self, id_a: str, id_b: str) -> EdgeData | None:
        return self._edges.get(edge_key(id_a, id_b))

    def degree(self, node: str) -> int:
        return sum(1 for a, b in self._edges if node in (a, b))

    def __len__(self) -> int:
        return len(self._nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneGraph):
            return NotImplemented
        return self._nodes == other._nodes and dict(self._edges) == dict(other._edges)

    def __repr__(self) -> str:
        return f"SceneGraph(nodes={len(self._nodes)}, edges={len(self._edges)})"


def _as_edge_data(value) -> EdgeData:
    if isinstance(value, EdgeData):
        return value
    if isinstance(value, ScoreQuad):
        return EdgeData.from_quad(value)
    return EdgeData(float(value))


def build_graph(nodes: Iterable[str], scored_pairs) -> SceneGraph:
    """
    Build a scene graph from image ids and scored pairs.
    - scored_pairs: iterable of (id_a, id_b, value), value being an EdgeData,
      a ScoreQuad or a bare final score
    """
    node_set = frozenset(nodes)
    edges: dict[tuple[str, str], EdgeData] = {}
    for id_a, id_b, value in scored_pairs:
        for image_id in (id_a, id_b):
            if image_id not in node_set:
                raise UsageError(f"pair {id_a}-{id_b} references unknown image {image_id!r}")
        key = edge_key(id_a, id_b)
        data = _as_edge_data(value)
        previous = edges.get(key)
        if previous is not None and previous.score != data.score:
            raise UsageError(
                f"pair {key[0]}-{key[1]} listed twice with conflicting scores "
                f"{previous.score} and {data.score}"
            )
        edges.setdefault(key, data)
    return SceneGraph(node_set, edges)


def components(g: SceneGraph) -> list[frozenset]:
    """
    Connected components, largest first, ties broken by smallest member id.
    """
    forest = DisjointSet(sorted(g.nodes))
    for a, b in g.edges:
        forest.merge(a, b)
    groups = [frozenset(subset) for subset in forest.subsets()]
    return sorted(groups, key=lambda group: (-len(group), min(group)))


@dataclass(frozen=True)
class PruneReport:
    kept: int
    removed: int
    components: list = field(default_factory=list)

    def __post_init__(self):
        if self.kept < 0 or self.removed < 0:
            raise UsageError("edge counts cannot be negative")

    @property
    def sizes(self) -> list[int]:
        return [len(group) for group in self.components]

    def split_label(self) -> str:
        """
        Sizes of the non-singleton components joined with '+', e.g. "157+106".
        """
        sizes = [size for size in self.sizes if size > 1]
        return "+".join(str(size) for size in sizes) if sizes else "0"


def prune(g: SceneGraph, tau: float = DEFAULT_TAU) -> tuple[SceneGraph, PruneReport]:
    """
    Remove the edges scoring strictly below tau. Every node survives, isolated
    images become singleton components.
    """
    _check_probability("tau", tau)
    kept = {key: data for key, data in g.edges.items() if data.score >= tau}
    pruned = SceneGraph(g.nodes, kept)
    report = PruneReport(
        kept=len(kept),
        removed=len(g.edges) - len(kept),
        components=components(pruned),
    )
    logger.info("Pruned at tau=%.3f: kept %d, removed %d, components %s",
                tau, report.kept, report.removed, report.split_label())
    return pruned, report
