"""
Command-line pipeline: synth-scene, mine-pairs, vote, prune-graph, verify-geo, import-colmap.
"""

import argparse
import logging
import sys
from pathlib import Path

from doppelganger import appio, synth
from doppelganger.colmap_db import ColmapDatabase
from doppelganger.disambig import DEFAULT_TAU, PruneReport, build_graph, prune
from doppelganger.errors import DoppelgangerError, DomainError
from doppelganger.geomcore import DEFAULT_FAR, DEFAULT_NEAR, GeoPoint
from doppelganger.geoverify import AlignmentReport, RansacConfig, verify_model
from doppelganger.pairmine import MiningConfig, mine_dataset, rule_counts

logger = logging.getLogger(__name__)


def cli_mine_pairs(cameras_path, pairs_path, out_path, cfg: MiningConfig,
                   report_path=None, workers: int | None = None) -> dict:
    """
    Label every pair of a pairs file and write a LABELS file.
    Returns the per-rule counts.
    """
    cams = appio.load_cameras(cameras_path)
    records = appio.load_pairs(pairs_path)
    labels = mine_dataset(cams, [r.candidate() for r in records], cfg, workers)
    appio.save_labels(out_path, labels)

    counts = rule_counts(labels)
    print(f"Mined {len(labels)} pairs:")
    for rule, count in counts.items():
        print(f" - {rule.value:<26} {count}")
    if report_path is not None:
        appio.write_report(report_path, mining=appio.mining_section(labels))
    return {rule.value: count for rule, count in counts.items()}


def cli_vote(pairs_path, out_path) -> int:
    """
    Collapse quad records to final scores; final-score records pass through.
    """
    records = appio.load_pairs(pairs_path)
    voted = [
        appio.PairRecord(r.id_a, r.id_b, appio.PAIR_SCORE, score=r.edge_data().score)
        for r in records
    ]
    appio.save_pairs(out_path, voted)
    print(f"Voted {len(voted)} pairs into {out_path}")
    return len(voted)


def cli_prune_graph(pairs_path, out_path, tau: float = DEFAULT_TAU, cameras_path=None,
                    report_path=None) -> PruneReport:
    """
    Build the scene graph from scored pairs, prune it at tau and write the survivors.
    - cameras_path: optional cameras file so images without pairs stay in the graph
    """
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    records = appio.load_pairs(pairs_path)
    nodes = {node for r in records for node in (r.id_a, r.id_b)}
    if cameras_path is not None:
        nodes |= {cam.id for cam in appio.load_cameras(cameras_path)}
    graph = build_graph(nodes, ((r.id_a, r.id_b, r.edge_data()) for r in records))
    pruned, report = prune(graph, tau)
    appio.save_graph(out_path, pruned, report)

    print(f"Pruned at tau={tau}: kept {report.kept}, removed {report.removed}")
    print(f"Components ({len(report.components)}): {report.split_label()}")
    if report_path is not None:
        appio.write_report(report_path, prune=appio.prune_section(report, tau))
    return report


def cli_verify_geo(probes_path, cfg: RansacConfig, report_path=None,
                   workers: int | None = None) -> AlignmentReport:
    """
    Align each component's probes to their geotags and report the pooled inlier ratio.
    """
    probes = appio.load_probes(probes_path)
    components = appio.group_probes(probes)
    report = verify_model(components, cfg, workers)

    for c in report.per_component:
        note = " (unverifiable)" if c.unverifiable else ""
        print(f" - {c.component_id}: {c.inliers}/{c.registered} inliers ({c.ratio:.3f}){note}")
    if all(c.unverifiable for c in report.per_component):
        print("warning: no component has 3 registered probes, inlier ratio is 0", file=sys.stderr)
    print(f"Inlier ratio: {report.ir:.3f}")
    if report_path is not None:
        appio.write_report(report_path, alignment=appio.alignment_section(report))
    return report


def cli_synth_scene(cfg: synth.SynthConfig, out_dir, flip_fraction: float = 0.0) -> dict:
    """
    Write a complete synthetic dataset into out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = synth.generate(cfg)

    paths = {name: out_dir / f"{name}.txt" for name in
             ("cameras", "pairs", "scores", "truth", "probes_corrupted", "probes_corrected")}
    appio.save_cameras(paths["cameras"], scene.cameras)
    appio.save_pairs(paths["pairs"], [
        appio.PairRecord(a, b, appio.PAIR_INLIERS, num_inliers=data.num_inliers)
        for (a, b), data in sorted(scene.match_graph.edges.items())
    ])
    appio.save_pairs(paths["scores"], [
        appio.PairRecord(a, b, appio.PAIR_QUAD, quad=quad)
        for a, b, quad in synth.adversarial_quads(scene, flip_fraction)
    ])
    appio.save_truth(paths["truth"], scene.gt_pair_labels)
    appio.save_probes(paths["probes_corrupted"],
                      appio.layout_records(scene.corrupted_layout, scene.cameras, lambda _: "model"))
    appio.save_probes(paths["probes_corrected"],
                      appio.layout_records(scene.corrected_layout, scene.cameras,
                                           lambda cam_id: f"side{scene.side_of(cam_id)}"))

    print(f"Synthetic scene: {len(scene.cameras)} cameras, {len(scene.match_graph.edges)} pairs")
    for name, path in paths.items():
        print(f" - {name}: {path}")
    return paths


def cli_import_colmap(database_path, out_path, min_num_matches: int = 15) -> int:
    """
    Convert the verified pairs of a COLMAP database into a pairs file.
    """
    with ColmapDatabase(database_path) as db:
        candidates = db.read_pairs(min_num_matches)
    appio.save_pairs(out_path, [
        appio.PairRecord(c.id_a, c.id_b, appio.PAIR_INLIERS, num_inliers=c.num_inliers)
        for c in candidates
    ])
    print(f"Imported {len(candidates)} pairs into {out_path}")
    return len(candidates)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doppelganger", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = sub.add_parser("synth-scene", help="write a synthetic doppelganger dataset")
    p.add_argument("out_dir")
    p.add_argument("--sides", type=int, default=2)
    p.add_argument("--cams-per-side", type=int, default=40)
    p.add_argument("--ring-radius", type=float, default=30.0)
    p.add_argument("--structure-radius", type=float, default=10.0)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--anchor", type=float, nargs=3, metavar=("LAT", "LON", "ALT"),
                   default=[48.8738, 2.2950, 50.0])
    p.add_argument("--flip-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    add_common(p)

    p = sub.add_parser("mine-pairs", help="label matched pairs from camera geometry")
    p.add_argument("cameras")
    p.add_argument("pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--distant-threshold-m", type=float, default=150.0)
    p.add_argument("--max-front-angle-deg", type=float, default=160.0)
    p.add_argument("--near-positive-m", type=float, default=15.0)
    p.add_argument("--max-positive-angle-deg", type=float, default=45.0)
    p.add_argument("--min-inliers", type=int, default=15)
    p.add_argument("--near", type=float, default=DEFAULT_NEAR)
    p.add_argument("--far", type=float, default=DEFAULT_FAR)
    p.add_argument("--workers", type=int)
    add_common(p)

    p = sub.add_parser("vote", help="collapse four-score records to final scores")
    p.add_argument("pairs")
    p.add_argument("--out", required=True)
    add_common(p)

    p = sub.add_parser("prune-graph", help="prune the scene graph at a score threshold")
    p.add_argument("pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--cameras")
    p.add_argument("--report")
    add_common(p)

    p = sub.add_parser("verify-geo", help="geo-verify a reconstruction from probe files")
    p.add_argument("probes")
    p.add_argument("--report")
    p.add_argument("--inlier-threshold-m", type=float, default=5.0)
    p.add_argument("--max-iterations", type=int, default=10000)
    p.add_argument("--confidence", type=float, default=0.999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    add_common(p)

    p = sub.add_parser("import-colmap", help="export verified pairs of a COLMAP database")
    p.add_argument("database")
    p.add_argument("--out", required=True)
    p.add_argument("--min-num-matches", type=int, default=15)
    add_common(p)

    return parser


def _dispatch(args):
    if args.command == "synth-scene":
        cfg = synth.SynthConfig(
            sides=args.sides,
            cams_per_side=args.cams_per_side,
            ring_radius=args.ring_radius,
            structure_radius=args.structure_radius,
            geo_anchor=GeoPoint(*args.anchor),
            noise_std=args.noise_std,
            seed=args.seed,
        )
        cli_synth_scene(cfg, args.out_dir, args.flip_fraction)
    elif args.command == "mine-pairs":
        cfg = MiningConfig(
            distant_threshold=args.distant_threshold_m,
            max_front_angle=args.max_front_angle_deg,
            near_positive_distance=args.near_positive_m,
            max_positive_angle=args.max_positive_angle_deg,
            min_candidate_inliers=args.min_inliers,
            frustum_near=args.near,
            frustum_far=args.far,
        )
        cli_mine_pairs(args.cameras, args.pairs, args.out, cfg, args.report, args.workers)
    elif args.command == "vote":
        cli_vote(args.pairs, args.out)
    elif args.command == "prune-graph":
        cli_prune_graph(args.pairs, args.out, args.tau, args.cameras, args.report)
    elif args.command == "verify-geo":
        cfg = RansacConfig(
            inlier_threshold=args.inlier_threshold_m,
            max_iterations=args.max_iterations,
            confidence=args.confidence,
            seed=args.seed,
        )
        cli_verify_geo(args.probes, cfg, args.report, args.workers)
    elif args.command == "import-colmap":
        cli_import_colmap(args.database, args.out, args.min_num_matches)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except (DoppelgangerError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0
