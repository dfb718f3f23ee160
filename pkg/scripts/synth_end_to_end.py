#
# Generate a synthetic doppelganger scene, vote the pair scores, prune the
# scene graph and geo-verify both the collapsed and the split reconstruction.
# Change the parameters below; nothing is written to disk.
#

from doppelganger import synth
from doppelganger.disambig import build_graph, prune
from doppelganger.geoverify import RansacConfig, verify_model

 ##################################################
#                                                 #
#              Scene parameters                   #
#                                                 #
 #################################################
sides = 2                  # Order of the structure symmetry
cams_per_side = 40         # Cameras photographing each side
noise_std = 1.0            # Geotag error in meters
flip_fraction = 0.1        # Share of edges with split classifier votes
tau = 0.8                  # Pruning threshold
inlier_threshold = 2.0     # Geo-verification threshold in meters
seed = 0
##################################################

config = synth.SynthConfig(sides=sides, cams_per_side=cams_per_side, noise_std=noise_std, seed=seed)
scene = synth.generate(config)
print(f"Scene: {len(scene.cameras)} cameras, {len(scene.match_graph.edges)} matched pairs")

# Vote and prune
scored = synth.adversarial_quads(scene, flip_fraction)
graph = build_graph(scene.camera_ids(), scored)
pruned, report = prune(graph, tau)
purity = synth.component_purity(report.components, scene)
print(f"Pruned at tau={tau}: kept {report.kept}, removed {report.removed}")
print(f"Components: {report.split_label()} (lowest purity {min(purity):.3f})")

# Geo-verify the collapsed and the corrected model
ransac = RansacConfig(inlier_threshold=inlier_threshold, seed=seed)
for layout in ("corrupted", "corrected"):
    alignment = verify_model(synth.layout_probes(scene, layout), ransac)
    print(f"{layout:>9} model: inlier ratio {alignment.ir:.3f}")
    for c in alignment.per_component:
        print(f"   - {c.component_id}: {c.inliers}/{c.registered}")
