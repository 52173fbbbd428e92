#!/usr/bin/env python3
# Copyright 2026 The bvv Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Converts the Unifont TrueType/WOFF outline build back into .hex bitmaps.

Unifont outlines are unions of axis-aligned pixel squares, so sampling the
outline at pixel centers with the nonzero winding rule recovers the
original bitmap exactly. FreeType rasterization at 16px drops pixels, so it
is not used here.

usage: woff_to_hex.py unifont.woff out.hex [--subset ascii,cyrillic,cjk100]
"""
import argparse
import sys

from fontTools.pens.recordingPen import RecordingPen
from fontTools.ttLib import TTFont


def edges_of(glyph_set, name):
    pen = RecordingPen()
    glyph_set[name].draw(pen)
    edges, start, cur = [], None, None
    for op, pts in pen.value:
        if op == "moveTo":
            start = cur = pts[0]
        elif op in ("lineTo", "qCurveTo"):
            # Quadratic segments in this font are degenerate: every control
            # point coincides with a grid vertex, so they trace straight edges.
            for p in pts:
                if p is not None and p != cur:
                    edges.append((cur, p))
                    cur = p
        elif op in ("closePath", "endPath"):
            if cur is not None and start is not None and cur != start:
                edges.append((cur, start))
            cur = start
        else:
            raise ValueError(f"unexpected curve segment {op} in {name}")
    return edges


def rasterize(edges, width, units_per_px, ascent):
    rows = []
    for r in range(16):
        y = ascent - (r + 0.5) * units_per_px
        crossings = []
        for (x0, y0), (x1, y1) in edges:
            if (y0 <= y < y1) or (y1 <= y < y0):
                x = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
                crossings.append((x, 1 if y1 > y0 else -1))
        crossings.sort()
        bits = 0
        for c in range(width):
            x = (c + 0.5) * units_per_px
            wind = sum(d for cx, d in crossings if cx < x)
            bits = (bits << 1) | (1 if wind != 0 else 0)
        rows.append(bits)
    return rows


def in_subset(cp, subset):
    if "all" in subset:
        return True
    if "ascii" in subset and 0x20 <= cp <= 0x7E:
        return True
    if "cyrillic" in subset and 0x400 <= cp <= 0x4FF:
        return True
    return False


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("font")
    ap.add_argument("out")
    ap.add_argument("--subset", default="all")
    ap.add_argument("--cjk", type=int, default=0,
                    help="include the first N CJK ideographs from --cjk-text")
    ap.add_argument("--cjk-text", default=None)
    args = ap.parse_args()
    subset = set(args.subset.split(","))

    font = TTFont(args.font)
    upem = font["head"].unitsPerEm
    units_per_px = upem // 16
    ascent = font["hhea"].ascent
    cmap = font.getBestCmap()
    gs = font.getGlyphSet()

    wanted = {cp for cp in cmap if cp <= 0xFFFF and in_subset(cp, subset)}
    if args.cjk and args.cjk_text:
        seen = []
        with open(args.cjk_text, encoding="utf-8") as fh:
            for ch in fh.read():
                cp = ord(ch)
                if 0x4E00 <= cp <= 0x9FFF and cp in cmap and cp not in seen:
                    seen.append(cp)
                    if len(seen) == args.cjk:
                        break
        wanted.update(seen)

    with open(args.out, "w", encoding="ascii") as out:
        for cp in sorted(wanted):
            name = cmap[cp]
            edges = edges_of(gs, name)
            adv = font["hmtx"][name][0]
            xmax = max((max(a[0], b[0]) for a, b in edges), default=0)
            width = 16 if adv > upem // 2 or xmax > upem // 2 else 8
            rows = rasterize(edges, width, units_per_px, ascent)
            fmt = "%04X" if width == 16 else "%02X"
            out.write("%04X:%s\n" % (cp, "".join(fmt % r for r in rows)))
    print(f"wrote {len(wanted)} glyphs", file=sys.stderr)


if __name__ == "__main__":
    main()
