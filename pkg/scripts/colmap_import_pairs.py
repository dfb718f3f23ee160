#
# Find a COLMAP database in the given folder and dump its verified
# image pairs into a pairs file ready for mine-pairs.
# The file will be saved in the current directory.
#

import os
import time

from doppelganger import appio
from doppelganger.colmap_db import ColmapDatabase

 ##########################################################
#                                                          #
#  Change to the folder holding the COLMAP database here   #
#                                                          #
 ##########################################################
database_dir = "."
min_num_matches = 15
############################################################

# Search and open the database
db = ColmapDatabase.auto_connect(database_dir)
print(f"Reading verified pairs from {db.path}...")
pairs = db.read_pairs(min_num_matches)

# Output path
timestamp = int(time.time())
output_path = os.path.join(os.getcwd(), f"colmap_pairs_{timestamp}.txt")

appio.save_pairs(output_path, [
    appio.PairRecord(p.id_a, p.id_b, appio.PAIR_INLIERS, num_inliers=p.num_inliers) for p in pairs
])
print(f"{len(pairs)} pairs saved at: {output_path}")

# Close the database
db.stop()
