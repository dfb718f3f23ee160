"""
File formats of the toolkit: cameras, pairs, labels, graphs, probes, ground
truth and the JSON report. Text files are line oriented, start with a
'<KIND> <VERSION>' line and accept '#' comments. Floats carry 9 significant digits.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from doppelganger.disambig import EdgeData, PruneReport, SceneGraph, ScoreQuad, build_graph
from doppelganger.errors import DoppelgangerError, FormatError, UsageError
from doppelganger.geomcore import GeoCamera, Intrinsics
from doppelganger.geoverify import AlignmentReport, ProbeCorrespondence
from doppelganger.helper import Helper
from doppelganger.pairmine import MatchCandidate, PairLabel, Rule, Verdict

VERSION = 1

CAMERA_COLUMNS = ["id", "lat", "lon", "alt", "heading_deg", "pitch_deg",
                  "fx", "fy", "cx", "cy", "width", "height"]
PROBE_COLUMNS = ["probe_id", "component_id", "model_x", "model_y", "model_z", "lat", "lon", "alt"]

PAIR_INLIERS = "M"
PAIR_QUAD = "Q"
PAIR_SCORE = "S"

fmt = Helper.formatFloat


# Cameras

def load_cameras(path) -> list[GeoCamera]:
    records = Helper.readRecords(path, "CAMERAS", VERSION, CAMERA_COLUMNS)
    cams = []
    seen = set()
    for line_no, tokens in records:
        if len(tokens) != len(CAMERA_COLUMNS):
            raise FormatError(f"expected {len(CAMERA_COLUMNS)} fields, got {len(tokens)}", path, line_no)
        cam_id = Helper.checkId(tokens[0], path, line_no)
        if cam_id in seen:
            raise FormatError(f"duplicate camera id {cam_id!r}", path, line_no)
        seen.add(cam_id)
        lat, lon, alt, heading, pitch, fx, fy, cx, cy = (
            Helper.parseFloat(tok, path, line_no, name) for tok, name in zip(tokens[1:10], CAMERA_COLUMNS[1:10])
        )
        width = Helper.parseInt(tokens[10], path, line_no, "width")
        height = Helper.parseInt(tokens[11], path, line_no, "height")
        try:
            cams.append(GeoCamera(cam_id, lat, lon, alt, heading, Intrinsics(fx, fy, cx, cy),
                                  width, height, pitch))
        except DoppelgangerError as err:
            raise FormatError(str(err), path, line_no) from None
    return cams


def save_cameras(path, cams: list[GeoCamera]):
    rows = (
        [c.id, fmt(c.lat), fmt(c.lon), fmt(c.alt), fmt(c.heading), fmt(c.pitch),
         fmt(c.intrinsics.fx), fmt(c.intrinsics.fy), fmt(c.intrinsics.cx), fmt(c.intrinsics.cy),
         str(c.width), str(c.height)]
        for c in cams
    )
    Helper.writeRecords(path, "CAMERAS", VERSION, rows, header=CAMERA_COLUMNS)


# Pairs

@dataclass(frozen=True)
class PairRecord:
    """
    One PairsFile line: an inlier count (M), four scores (Q) or a final score (S).
    """
    id_a: str
    id_b: str
    kind: str
    num_inliers: int | None = None
    quad: ScoreQuad | None = None
    score: float | None = None

    def candidate(self) -> MatchCandidate:
        return MatchCandidate(self.id_a, self.id_b, self.num_inliers)

    def edge_data(self) -> EdgeData:
        if self.kind == PAIR_QUAD:
            return EdgeData.from_quad(self.quad)
        if self.kind == PAIR_SCORE:
            return EdgeData(self.score)
        raise UsageError(f"pair {self.id_a}-{self.id_b} carries no score")


def load_pairs(path) -> list[PairRecord]:
    records = Helper.readRecords(path, "PAIRS", VERSION)
    out = []
    for line_no, tokens in records:
        if len(tokens) < 4:
            raise FormatError("expected 'id_a id_b <M|Q|S> values...'", path, line_no)
        a = Helper.checkId(tokens[0], path, line_no)
        b = Helper.checkId(tokens[1], path, line_no)
        if a == b:
            raise FormatError(f"pair joins {a!r} to itself", path, line_no)
        if b < a:
            a, b = b, a
        kind, values = tokens[2], tokens[3:]
        try:
            if kind == PAIR_INLIERS and len(values) == 1:
                count = Helper.parseInt(values[0], path, line_no, "num_inliers")
                if count < 0:
                    raise FormatError("num_inliers cannot be negative", path, line_no)
                out.append(PairRecord(a, b, kind, num_inliers=count))
            elif kind == PAIR_QUAD and len(values) == 4:
                scores = tuple(Helper.parseFloat(v, path, line_no, "score") for v in values)
                out.append(PairRecord(a, b, kind, quad=ScoreQuad(scores)))
            elif kind == PAIR_SCORE and len(values) == 1:
                score = Helper.parseFloat(values[0], path, line_no, "score")
                EdgeData(score)
                out.append(PairRecord(a, b, kind, score=score))
            else:
                raise FormatError(f"malformed {kind!r} record with {len(values)} values", path, line_no)
        except FormatError:
            raise
        except DoppelgangerError as err:
            raise FormatError(str(err), path, line_no) from None
    return out


def save_pairs(path, pairs: list[PairRecord]):
    rows = []
    for p in pairs:
        if p.kind == PAIR_INLIERS:
            values = [str(p.num_inliers)]
        elif p.kind == PAIR_QUAD:
            values = [fmt(s) for s in p.quad.s]
        else:
            values = [fmt(p.score)]
        rows.append([p.id_a, p.id_b, p.kind] + values)
    Helper.writeRecords(path, "PAIRS", VERSION, rows)


# Labels

def save_labels(path, labels):
    rows = (
        [cand.id_a, cand.id_b, label.verdict.value, label.rule.value,
         "-" if cand.num_inliers is None else str(cand.num_inliers)]
        for cand, label in labels
    )
    Helper.writeRecords(path, "LABELS", VERSION, rows)


def load_labels(path) -> list[tuple[MatchCandidate, PairLabel]]:
    records = Helper.readRecords(path, "LABELS", VERSION)
    out = []
    for line_no, tokens in records:
        if len(tokens) != 5:
            raise FormatError("expected 'id_a id_b verdict rule num_inliers'", path, line_no)
        try:
            inliers = None if tokens[4] == "-" else Helper.parseInt(tokens[4], path, line_no, "num_inliers")
            label = PairLabel(Verdict(tokens[2]), Rule(tokens[3]))
            out.append((MatchCandidate(tokens[0], tokens[1], inliers), label))
        except (ValueError, DoppelgangerError) as err:
            if isinstance(err, FormatError):
                raise
            raise FormatError(str(err), path, line_no) from None
    return out


# Graphs

def save_graph(path, graph: SceneGraph, report: PruneReport | None = None):
    rows = [["N", node] for node in sorted(graph.nodes)]
    rows += [["E", a, b, fmt(data.score)] for (a, b), data in sorted(graph.edges.items())]
    if report is not None:
        for index, group in enumerate(report.components):
            rows.append(["C", str(index), str(len(group))] + sorted(group))
    Helper.writeRecords(path, "GRAPH", VERSION, rows)


def load_graph(path) -> tuple[SceneGraph, list[frozenset]]:
    records = Helper.readRecords(path, "GRAPH", VERSION)
    nodes, edges, groups = [], [], []
    for line_no, tokens in records:
        tag = tokens[0]
        if tag == "N" and len(tokens) == 2:
            nodes.append(Helper.checkId(tokens[1], path, line_no))
        elif tag == "E" and len(tokens) == 4:
            edges.append((tokens[1], tokens[2], Helper.parseFloat(tokens[3], path, line_no, "score")))
        elif tag == "C" and len(tokens) >= 3:
            size = Helper.parseInt(tokens[2], path, line_no, "size")
            members = frozenset(tokens[3:])
            if size != len(members):
                raise FormatError(f"component lists {len(members)} ids but declares {size}", path, line_no)
            groups.append(members)
        else:
            raise FormatError(f"malformed graph record {' '.join(tokens)!r}", path, line_no)
    try:
        return build_graph(nodes, edges), groups
    except DoppelgangerError as err:
        raise FormatError(str(err), path) from None


# Probes

@dataclass(frozen=True)
class ProbeRecord:
    probe_id: str
    component_id: str
    model_pos: tuple[float, float, float]
    lat: float
    lon: float
    alt: float

    def correspondence(self) -> ProbeCorrespondence:
        return ProbeCorrespondence.from_geotag(self.probe_id, self.model_pos, self.lat, self.lon, self.alt)


def load_probes(path) -> list[ProbeRecord]:
    records = Helper.readRecords(path, "PROBES", VERSION, PROBE_COLUMNS)
    out = []
    seen = set()
    for line_no, tokens in records:
        if len(tokens) != len(PROBE_COLUMNS):
            raise FormatError(f"expected {len(PROBE_COLUMNS)} fields, got {len(tokens)}", path, line_no)
        probe_id = Helper.checkId(tokens[0], path, line_no)
        if probe_id in seen:
            raise FormatError(f"probe {probe_id!r} listed twice", path, line_no)
        seen.add(probe_id)
        component_id = Helper.checkId(tokens[1], path, line_no)
        x, y, z, lat, lon, alt = (
            Helper.parseFloat(tok, path, line_no, name) for tok, name in zip(tokens[2:], PROBE_COLUMNS[2:])
        )
        if not -90.0 <= lat <= 90.0:
            raise FormatError(f"latitude {lat} outside [-90, 90]", path, line_no)
        out.append(ProbeRecord(probe_id, component_id, (x, y, z), lat, lon, alt))
    return out


def save_probes(path, probes: list[ProbeRecord]):
    rows = (
        [p.probe_id, p.component_id] + [fmt(v) for v in p.model_pos] + [fmt(p.lat), fmt(p.lon), fmt(p.alt)]
        for p in probes
    )
    Helper.writeRecords(path, "PROBES", VERSION, rows, header=PROBE_COLUMNS)


def group_probes(probes: list[ProbeRecord]) -> list[tuple[str, list[ProbeCorrespondence]]]:
    """
    Correspondences per component, components in order of first appearance.
    """
    groups: dict[str, list[ProbeCorrespondence]] = {}
    for probe in probes:
        groups.setdefault(probe.component_id, []).append(probe.correspondence())
    return list(groups.items())


# Ground truth

def save_truth(path, labels: dict):
    rows = ([a, b, truth.value] for (a, b), truth in sorted(labels.items()))
    Helper.writeRecords(path, "TRUTH", VERSION, rows)


def load_truth(path) -> dict[tuple[str, str], str]:
    records = Helper.readRecords(path, "TRUTH", VERSION)
    out = {}
    for line_no, tokens in records:
        if len(tokens) != 3:
            raise FormatError("expected 'id_a id_b label'", path, line_no)
        a, b = sorted(tokens[:2])
        out[(a, b)] = tokens[2]
    return out


# Report

def mining_section(labels) -> dict:
    counts = {rule.value: 0 for rule in Rule}
    for _, label in labels:
        counts[label.rule.value] += 1
    return {"total": len(labels), "counts": counts}


def prune_section(report: PruneReport, tau: float) -> dict:
    return {
        "tau": tau,
        "total": report.kept + report.removed,
        "kept": report.kept,
        "removed": report.removed,
        "split": report.split_label(),
        "components": [{"size": len(group), "members": sorted(group)} for group in report.components],
    }


def alignment_section(report: AlignmentReport) -> dict:
    components = []
    for c in report.per_component:
        components.append({
            "component_id": c.component_id,
            "inliers": c.inliers,
            "registered": c.registered,
            "ratio": c.ratio,
            "unverifiable": c.unverifiable,
            "transform": None if c.transform is None else {
                "scale": c.transform.scale,
                "rotation": c.transform.rotation.tolist(),
                "translation": c.transform.translation.tolist(),
            },
        })
    return {"ir": report.ir, "inliers": report.total_inliers, "registered": report.total_registered,
            "components": components}


def validate_report(doc: dict):
    """
    Check the internal consistency of a report document.
    """
    if doc.get("kind") != "REPORT" or doc.get("version") != VERSION:
        raise FormatError(f"not a version {VERSION} report document")
    mining = doc.get("mining")
    if mining is not None and sum(mining["counts"].values()) != mining["total"]:
        raise FormatError("mining counts do not add up to the pair total")
    prune = doc.get("prune")
    if prune is not None:
        if prune["kept"] + prune["removed"] != prune["total"]:
            raise FormatError("kept + removed differs from the edge total")
        for group in prune["components"]:
            if group["size"] != len(group["members"]):
                raise FormatError("component size disagrees with its member list")
    alignment = doc.get("alignment")
    if alignment is not None:
        inliers = registered = 0
        for c in alignment["components"]:
            if not 0 <= c["inliers"] <= c["registered"]:
                raise FormatError(f"component {c['component_id']}: inliers exceed registered probes")
            ratio = c["inliers"] / c["registered"] if c["registered"] else 0.0
            if not math.isclose(c["ratio"], ratio, rel_tol=0.0, abs_tol=1e-12):
                raise FormatError(f"component {c['component_id']}: ratio {c['ratio']} is not {ratio}")
            inliers += c["inliers"]
            registered += c["registered"]
        if (alignment["inliers"], alignment["registered"]) != (inliers, registered):
            raise FormatError("alignment totals disagree with the per-component counts")
        expected = inliers / registered if registered else 0.0
        if not math.isclose(alignment["ir"], expected, rel_tol=0.0, abs_tol=1e-12):
            raise FormatError(f"inlier ratio {alignment['ir']} is not {inliers}/{registered}")


def write_report(path, mining: dict | None = None, prune: dict | None = None, alignment: dict | None = None) -> dict:
    doc = {"kind": "REPORT", "version": VERSION}
    if mining is not None:
        doc["mining"] = mining
    if prune is not None:
        doc["prune"] = prune
    if alignment is not None:
        doc["alignment"] = alignment
    validate_report(doc)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc


def read_report(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise FormatError(f"invalid JSON: {err.msg}", path, err.lineno) from None
    except UnicodeDecodeError as err:
        raise FormatError(f"invalid UTF-8 at byte {err.start}", path) from None
    try:
        validate_report(doc)
    except (KeyError, TypeError, AttributeError) as err:
        raise FormatError(f"incomplete report document ({err!r})", path) from None
    return doc


def layout_records(layout: dict, cams: list[GeoCamera], component_of) -> list[ProbeRecord]:
    """
    Probe records pairing model positions with the cameras' own geotags.
    - component_of: callable camera id -> component id
    """
    records = []
    for cam in cams:
        if cam.id not in layout:
            continue
        position = tuple(float(v) for v in np.asarray(layout[cam.id]).reshape(3))
        records.append(ProbeRecord(cam.id, component_of(cam.id), position, cam.lat, cam.lon, cam.alt))
    return records
