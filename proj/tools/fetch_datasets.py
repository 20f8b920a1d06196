#!/usr/bin/env python3
"""Download the benchmark graphs and write them as plain undirected edge lists.

Output goes to $DMPOPT_DATA_DIR, or data/datasets/ next to this repo. Node and
edge counts are checked against data/datasets.json after dropping self-loops
and duplicate edges.
"""

import argparse
import gzip
import io
import json
import os
import sys
import urllib.request
import zipfile
from pathlib import Path

import networkx as nx

ROOT = Path(__file__).resolve().parents[1]


def out_dir():
    d = os.environ.get("DMPOPT_DATA_DIR")
    return Path(d) if d else ROOT / "data" / "datasets"


def fetch(url):
    with urllib.request.urlopen(url, timeout=60) as r:
        return r.read()


def to_graph(entry, raw):
    fmt = entry["format"]
    if fmt == "gml":
        with zipfile.ZipFile(io.BytesIO(raw)) as z:
            text = z.read(entry["archive_member"]).decode()
        # label=None keeps the numeric ids; labels can repeat
        return nx.Graph(nx.parse_gml(text, label=None))
    if fmt == "edgelist-gz":
        text = gzip.decompress(raw).decode()
        g = nx.Graph()
        for line in text.splitlines():
            if not line or line[0] in "#%":
                continue
            a, b = line.split()[:2]
            g.add_edge(a, b)
        return g
    raise ValueError(f"cannot convert format {fmt}")


def write_edges(g, path):
    g.remove_edges_from(list(nx.selfloop_edges(g)))
    with open(path, "w") as f:
        f.write(f"# {g.number_of_nodes()} nodes, {g.number_of_edges()} undirected edges\n")
        for a, b in g.edges():
            f.write(f"{a} {b}\n")
    return g.number_of_nodes(), g.number_of_edges()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", help="subset of datasets.json keys (default: all)")
    ap.add_argument("--manifest", default=ROOT / "data" / "datasets.json", type=Path)
    ap.add_argument("--force", action="store_true", help="refetch files that already exist")
    ap.add_argument("--from-file", type=Path, help="use a local copy of the download instead of the url (one name only)")
    args = ap.parse_args(argv)

    manifest = json.loads(args.manifest.read_text())
    names = args.names or list(manifest)
    if args.from_file and len(names) != 1:
        ap.error("--from-file needs exactly one dataset name")
    dest = out_dir()
    dest.mkdir(parents=True, exist_ok=True)

    status = 0
    for name in names:
        if name not in manifest:
            print(f"{name}: not in manifest", file=sys.stderr)
            status = 2
            continue
        e = manifest[name]
        target = dest / e["output"]
        if e["format"] == "manual":
            print(f"{name}: manual download, {e['note']} ({target})")
            continue
        if target.exists() and not args.force:
            print(f"{name}: {target} exists")
            continue
        try:
            raw = args.from_file.read_bytes() if args.from_file else fetch(e["url"])
        except OSError as err:
            print(f"{name}: download failed: {err}", file=sys.stderr)
            status = 1
            continue
        n, m = write_edges(to_graph(e, raw), target)
        ok = n == e["nodes"] and m == e["edges"]
        print(f"{name}: {n} nodes {m} edges -> {target}" + ("" if ok else f" (expected {e['nodes']}/{e['edges']})"))
        if not ok:
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
