#!/usr/bin/env python3
"""Generate the bundled example configs under configs/.

Two setups are written:

* ``compression_small.json`` -- a single unit square under the default
  partial-interval compression load, small enough for quick runs.
* ``branching_decomposition.json`` plus run configs for compression and
  shear -- a domain whose center is a 3x3 block of locally periodic unit
  cells, wrapped by one ring of unit cells and then by rings of half- and
  quarter-size cells, so the structure refines towards the loaded boundary.
  169 subdomains share 13 reference domains.

Every ring contributes four reference domains: the branching cells along
each side, the two (mirror-inequivalent) cells coupling a branching run to
a corner, and the corner cell itself.  Members on the top side carry
rotation 0; the left, bottom and right sides carry rotations 1, 2, 3, with
corners assigned to the side that is their counter-clockwise neighbour.
All coordinates are dyadic so facet matching is exact.
"""

import argparse
import json
import os

# Reference ids.  "lead"/"trail" couplers flank a branching run at its
# low/high end when the side is traversed in reference +x direction.
PERIODIC = 0
BRANCH = {1: 1, 2: 5, 3: 9}
LEAD = {1: 2, 2: 6, 3: 10}
TRAIL = {1: 3, 2: 7, 3: 11}
CORNER = {1: 4, 2: 8, 3: 12}

# Per ring: top-row y, cell size, x of the lead coupler, branching count.
RINGS = {
    1: (3.0, 1.0, 0.0, 1),
    2: (4.0, 0.5, -1.0, 8),
    3: (4.5, 0.25, -1.5, 22),
}

CENTER = 1.5   # rotation center in construction coordinates
SHIFT = 1.75   # translation taking the outermost ring to the origin


def rot_square(k, x0, y0, size):
    """Lower-left corner of a square rotated k quarter turns about CENTER."""
    dx = x0 + 0.5 * size - CENTER
    dy = y0 + 0.5 * size - CENTER
    for _ in range(k % 4):
        dx, dy = -dy, dx
    return CENTER + dx - 0.5 * size, CENTER + dy - 0.5 * size


def top_strip(ring):
    """(x0, y0, size, reference) for the rotation-0 members of one ring."""
    y, s, lead_x, count = RINGS[ring]
    cells = [(lead_x, y, s, LEAD[ring])]
    for i in range(count):
        cells.append((lead_x + (i + 1) * s, y, s, BRANCH[ring]))
    cells.append((lead_x + (count + 1) * s, y, s, TRAIL[ring]))
    cells.append((lead_x + (count + 2) * s, y, s, CORNER[ring]))
    return cells


def build_subdomains():
    subs = []

    def add(x0, y0, size, ref, rot):
        subs.append({
            "id": len(subs),
            "rect": [x0 + SHIFT, x0 + size + SHIFT,
                     y0 + SHIFT, y0 + size + SHIFT],
            "reference": ref,
            "rotation": rot,
        })

    for i in range(3):
        for j in range(3):
            add(float(i), float(j), 1.0, PERIODIC, 0)
    for ring in sorted(RINGS):
        for k in range(4):
            for x0, y0, size, ref in top_strip(ring):
                rx, ry = rot_square(k, x0, y0, size)
                add(rx, ry, size, ref, k)
    return subs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="configs", help="output directory")
    args = ap.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)

    side = 6.5
    decomp = {"bounding_box": [0.0, side, 0.0, side],
              "subdomains": build_subdomains()}

    small = {
        "decomposition": {
            "bounding_box": [0.0, 1.0, 0.0, 1.0],
            "subdomains": [
                {"id": 0, "rect": [0.0, 1.0, 0.0, 1.0], "reference": 0},
            ],
        },
        "loads": {"preset": "compression"},
        "n_cells": 16,
        "phase": {"beta": 1.0, "eta": 0.1},
        "max_iters": 200,
        "stop_tol": 1e-4,
    }

    def run_cfg(preset):
        return {
            "decomposition": "branching_decomposition.json",
            "loads": {"preset": preset},
            "n_cells": 40,
            "phase": {"beta": 1.0, "eta": 0.1},
            "schedule": "redblack",
            "max_iters": 8,
            "stop_tol": 1e-4,
        }

    outputs = {
        "branching_decomposition.json": decomp,
        "branching_compression.json": run_cfg("compression"),
        "branching_shear.json": run_cfg("shear"),
        "compression_small.json": small,
    }
    for name, obj in outputs.items():
        path = os.path.join(args.out, name)
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1 if name.startswith("branching_de") else 2)
            fh.write("\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
