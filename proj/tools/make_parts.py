#!/usr/bin/env python3
"""Generates data/parts47.json, the procedural part library.

Each preterminal slot (M1..M4) owns one fixed location around the trunk.
A slot's alternatives are dealt round-robin into four families (category
styles); the family sets the primitive and rough proportions, the variant
index within the family perturbs dimensions and instance count.

Dimensions are given in a slot frame (radial, height, tangential) and
rotated so that local +x points away from the trunk.
"""
import json
import pathlib
import re

ROOT = pathlib.Path(__file__).resolve().parent.parent

TRUNK = {"id": "P5", "primitive": "box", "dims": [36, 44, 36],
         "location": [0, 0, 0], "count": 1, "orientations": [[0, 0, 0]]}

# slot -> (location, orientation mapping local +x outward, tangent axis)
SLOTS = {
    "M1": ([30, 0, 0], [0, 0, 0], 2),
    "M2": ([-30, 0, 0], [0, 180, 0], 2),
    "M3": ([0, 0, 30], [0, -90, 0], 0),
    "M4": ([0, 34, 0], [0, 0, 90], 2),
}

# family -> list of variants (primitive, (radial, height, tangential), count, tilt)
FAMILIES = {
    0: [("cylinder", (18, 46, 18), 1, 0),
        ("cylinder", (14, 42, 14), 2, 0),
        ("cylinder", (22, 50, 20), 1, 8)],
    1: [("box", (36, 10, 36), 1, 0),
        ("box", (32, 12, 40), 1, 0),
        ("box", (40, 8, 32), 1, 6)],
    2: [("ellipsoid", (30, 30, 30), 1, 0),
        ("ellipsoid", (26, 34, 26), 1, 0),
        ("ellipsoid", (34, 26, 30), 1, 0)],
    3: [("wedge", (36, 36, 24), 1, 0),
        ("wedge", (40, 32, 28), 1, 0),
        ("L-bracket", (34, 34, 26), 1, 0)],
}


def slot_alternatives():
    text = (ROOT / "data" / "fribble.grammar").read_text()
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        m = re.match(r"(M\d)\s*->\s*(.*)", line)
        if m:
            out[m.group(1)] = [s.strip() for s in m.group(2).split("|")]
    return out


def make_part(pid, slot, index):
    location, orient, tangent = SLOTS[slot]
    family = index % 4
    prim, (r, h, w), count, tilt = FAMILIES[family][index // 4]
    orientations = [[tilt, orient[1], orient[2]] for _ in range(count)]
    offsets = []
    spacing = 1.25 * w
    for k in range(count):
        o = [0.0, 0.0, 0.0]
        o[tangent] = (k - 0.5 * (count - 1)) * spacing
        offsets.append(o)
    return {"id": pid, "primitive": prim, "dims": [r, h, w], "location": location,
            "count": count, "orientations": orientations, "offsets": offsets,
            "family": family}


# No rule derives P41; it is kept so the library matches the 47-part set,
# at a back position of its own.
SPARE = {"id": "P41", "primitive": "box", "dims": [24, 24, 24],
         "location": [0, 0, -30], "count": 1, "orientations": [[0, 0, 0]],
         "offsets": [[0, 0, 0]]}


def main():
    parts = [TRUNK, SPARE]
    for slot, alts in slot_alternatives().items():
        for i, pid in enumerate(alts):
            parts.append(make_part(pid, slot, i))
    parts.sort(key=lambda p: int(p["id"][1:]))
    assert len(parts) == 47
    lines = ",\n".join("  " + json.dumps(p) for p in parts)
    out = ROOT / "data" / "parts47.json"
    out.write_text('{"trunk": "P5",\n "parts": [\n' + lines + "\n ]}\n")


if __name__ == "__main__":
    main()
