"""Relation DAG over source-error paragraphs.

Nodes are admitted sources (per-paragraph error above the admission
threshold at admission time); edges point from the earlier sources whose
retrieval produced a new source to that new source. Edges are strictly
forward in admission step, so acyclicity holds by construction.

Cumulative error of a node is the mean per-paragraph error over its
descendants (the node itself excluded); a node with no descendants is
EXEMPT from the threshold prune.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DagError


class _Exempt:
    def __repr__(self) -> str:
        return "EXEMPT"


EXEMPT = _Exempt()


@dataclass
class DagNode:
    para_id: str
    step_admitted: int
    para_error: float
    active: bool = True
    barren_rounds: int = 0  # retrieval rounds seeded since the last new child


@dataclass
class RelationDag:
    nodes: dict[str, DagNode] = field(default_factory=dict)
    children: dict[str, set[str]] = field(default_factory=dict)
    edges: list[tuple[str, str, int]] = field(default_factory=list)  # (from, to, step)

    def __len__(self) -> int:
        return len(self.nodes)

    def active_ids(self) -> list[str]:
        return [pid for pid, n in self.nodes.items() if n.active]

    def add_sources(
        self, new: list[tuple[str, float, set[str]]], t: int
    ) -> None:
        """Insert new source nodes with edges from their provenance.

        Duplicate insertion is a hard error: it means loop prevention
        (removal from the knowledge base) failed upstream.
        """
        for pid, _err, _prov in new:
            if pid in self.nodes:
                raise DagError(f"source {pid} admitted twice (loop-prevention breach)")
        for pid, err, prov in new:
            self.nodes[pid] = DagNode(para_id=pid, step_admitted=t, para_error=err)
            self.children[pid] = set()
            for src in sorted(prov):
                if (
                    src in self.nodes
                    and src != pid
                    and self.nodes[src].step_admitted < t
                ):
                    self.children[src].add(pid)
                    self.edges.append((src, pid, t))
                    self.nodes[src].barren_rounds = 0

    def descendants(self, pid: str) -> set[str]:
        if pid not in self.nodes:
            raise DagError(f"unknown node {pid}")
        seen: set[str] = set()
        stack = list(self.children.get(pid, ()))
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(self.children.get(cur, ()))
        return seen

    def cumulative_error(self, pid: str):
        """Mean descendant error, or EXEMPT when the node has no descendants."""
        desc = self.descendants(pid)
        if not desc:
            return EXEMPT
        return sum(self.nodes[d].para_error for d in desc) / len(desc)

    def prune(self, gamma: float) -> set[str]:
        """Deactivate active nodes whose cumulative error is strictly below
        gamma; EXEMPT nodes are untouched. Single pass over pre-prune values.
        """
        if not (0.0 <= gamma <= 1.0):
            raise ValueError("gamma must be in [0,1]")
        scores = {pid: self.cumulative_error(pid) for pid in self.active_ids()}
        pruned = {
            pid for pid, score in scores.items()
            if score is not EXEMPT and score < gamma
        }
        for pid in pruned:
            self.nodes[pid].active = False
        return pruned

    def mark_retrieval_round(self, source_ids: list[str]) -> None:
        for pid in source_ids:
            self.nodes[pid].barren_rounds += 1

    def retire_stale(self, min_rounds: int) -> set[str]:
        """Deactivate active nodes that have seeded min_rounds retrieval
        steps in a row without gaining a new child.

        This is the only prune pressure possible when the admission
        threshold is at or above the prune threshold (every descendant was
        admitted with error above the admission threshold, so the mean can
        never fall below it); it retires sources whose neighborhood has
        stopped yielding new errors, keeping retrieval anchored on the
        productive frontier.
        """
        retired = {
            pid
            for pid, n in self.nodes.items()
            if n.active and n.barren_rounds >= min_rounds
        }
        for pid in retired:
            self.nodes[pid].active = False
        return retired

    def topo_order(self) -> list[str]:
        """Topological order; raises DagError on a cycle (used by tests)."""
        indeg = {pid: 0 for pid in self.nodes}
        for _src, dst, _t in self.edges:
            indeg[dst] += 1
        ready = sorted(pid for pid, d in indeg.items() if d == 0)
        out: list[str] = []
        while ready:
            cur = ready.pop()
            out.append(cur)
            for ch in self.children[cur]:
                indeg[ch] -= 1
                if indeg[ch] == 0:
                    ready.append(ch)
        if len(out) != len(self.nodes):
            raise DagError("cycle detected")
        return out

    # -- export ---------------------------------------------------------

    def as_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.para_id,
                    "step": n.step_admitted,
                    "error": n.para_error,
                    "active": n.active,
                    "barren_rounds": n.barren_rounds,
                }
                for n in self.nodes.values()
            ],
            "edges": [
                {"from": src, "to": dst, "step": t} for src, dst, t in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RelationDag":
        dag = cls()
        for n in data["nodes"]:
            dag.nodes[n["id"]] = DagNode(
                para_id=n["id"],
                step_admitted=n["step"],
                para_error=n["error"],
                active=n["active"],
                barren_rounds=n.get("barren_rounds", 0),
            )
            dag.children[n["id"]] = set()
        for e in data["edges"]:
            dag.children[e["from"]].add(e["to"])
            dag.edges.append((e["from"], e["to"], e["step"]))
        return dag
