"""Walkthrough: the two geometric sufficiency criteria.

Builds one region with a wide-area depression and one with a localized
sleeper-edge gap, reconstructs the reference plane between the edge
profiles, and shows which criterion fires in each case and why.
"""

import numpy as np

from ballastgeom import PipelineConfig, classify_region
from ballastgeom.model import DepthFrame, RBox, RegionDetection

CFG = PipelineConfig()
BOX = RBox(cx=125.0, cy=75.0, angle=0.0, width=200.0, height=100.0)
DET = RegionDetection(region_id="demo", cx=BOX.cx, cy=BOX.cy, w=BOX.width, h=BOX.height, confidence=0.9)


def flat_frame():
    return DepthFrame.from_data(np.full((150, 250), 2.0))


def describe(name, frame):
    v = classify_region(frame, DET, BOX, CFG)
    print(f"{name:<22} rho={v.rho:.3f} (C1 {'fires' if v.c1_fired else 'quiet'}, threshold {CFG.eta1})  "
          f"gamma_max={v.gamma_max:.3f} (C2 {'fires' if v.c2_fired else 'quiet'}, threshold {CFG.eta2})  "
          f"-> {v.label}")


print(f"thresholds: depression T_z={CFG.t_z} m, edge band kappa={CFG.kappa} of box height\n")

describe("flat ballast", flat_frame())

wide = flat_frame()
# 55% of the region sits 50 mm below the sleeper-aligned plane
wide.data[50:105, 35:215] -= 0.05
describe("wide-area depression", wide)

edge = flat_frame()
# a 30-column gap hugging the top sleeper edge, reaching 30 px into the bay
edge.data[28:55, 100:130] -= 0.05
describe("sleeper-edge gap", edge)

mid = flat_frame()
# same patch confined between the edge bands (v in [41, 59]): C2 ignores it by design
mid.data[66:85, 100:130] -= 0.05
describe("mid-bay patch", mid)
