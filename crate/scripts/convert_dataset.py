#!/usr/bin/env python3
"""Convert public citation datasets into the on-disk layout read by `gsr`.

Usage:
    convert_dataset.py linqs <dir-with-NAME.content-and-NAME.cites> <name> <out-dir> [--split-seed N]
    convert_dataset.py planetoid <dir-with-ind.NAME.*> <name> <out-dir>

Output layout (all plain text):
    manifest.toml   dataset shape and file names
    edges.tsv       "u<TAB>v" per line, undirected, deduplicated, u < v
    labels.tsv      "node<TAB>class" per line
    split.txt       three lines of space-separated node ids: train, val, test
    features.txt    sparse text matrix: header "GSRTXT 1 <rows> <cols>" then "row col value" lines

LINQS-format inputs carry no canonical split, so a seeded split with 20 training
nodes per class, 500 validation and 1000 test nodes is drawn.
"""
import argparse
import os
import pickle
import sys

import numpy as np


def write_dataset(out, name, labels, num_classes, edges, feats_rows, num_features, split, row_normalize):
    os.makedirs(out, exist_ok=True)
    n = len(labels)
    und = set()
    for u, v in edges:
        if u == v:
            continue
        und.add((min(u, v), max(u, v)))
    und = sorted(und)
    with open(os.path.join(out, "edges.tsv"), "w") as f:
        for u, v in und:
            f.write(f"{u}\t{v}\n")
    with open(os.path.join(out, "labels.tsv"), "w") as f:
        for i, c in enumerate(labels):
            f.write(f"{i}\t{c}\n")
    with open(os.path.join(out, "split.txt"), "w") as f:
        for part in split:
            f.write(" ".join(str(i) for i in part) + "\n")
    with open(os.path.join(out, "features.txt"), "w") as f:
        f.write(f"GSRTXT 1 {n} {num_features}\n")
        for i, row in enumerate(feats_rows):
            for j, val in row:
                f.write(f"{i} {j} {val:g}\n")
    with open(os.path.join(out, "manifest.toml"), "w") as f:
        f.write(
            f'name = "{name}"\n'
            "format_version = 1\n"
            f"num_nodes = {n}\n"
            f"num_classes = {num_classes}\n"
            f"num_features = {num_features}\n"
            'edges = "edges.tsv"\n'
            'features = "features.txt"\n'
            'labels = "labels.tsv"\n'
            'split = "split.txt"\n'
            f"row_normalize_features = {'true' if row_normalize else 'false'}\n"
        )
    print(f"{name}: {n} nodes, {len(und)} edges, {num_classes} classes, {num_features} features, "
          f"split {len(split[0])}/{len(split[1])}/{len(split[2])}", file=sys.stderr)


def convert_linqs(src, name, out, split_seed):
    ids, rows, classes = [], [], []
    with open(os.path.join(src, f"{name}.content")) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            vals = parts[1:-1]
            rows.append([(j, float(x)) for j, x in enumerate(vals) if float(x) != 0.0])
            classes.append(parts[-1])
    num_features = len(line.split()) - 2
    index = {pid: i for i, pid in enumerate(ids)}
    names = sorted(set(classes))
    labels = [names.index(c) for c in classes]
    edges = []
    with open(os.path.join(src, f"{name}.cites")) as f:
        for line in f:
            parts = line.split()
            if len(parts) != 2 or parts[0] not in index or parts[1] not in index:
                continue
            edges.append((index[parts[0]], index[parts[1]]))
    rng = np.random.RandomState(split_seed)
    labels_arr = np.array(labels)
    train = []
    for c in range(len(names)):
        members = np.flatnonzero(labels_arr == c)
        train.extend(rng.choice(members, 20, replace=False).tolist())
    rest = np.setdiff1d(np.arange(len(labels)), np.array(train))
    rest = rng.permutation(rest)
    val, test = rest[:500].tolist(), rest[500:1500].tolist()
    split = (sorted(train), sorted(val), sorted(test))
    write_dataset(out, name, labels, len(names), edges, rows, num_features, split, True)


def load_pickle(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def convert_planetoid(src, name, out):
    import scipy.sparse as sp

    objs = {k: load_pickle(os.path.join(src, f"ind.{name}.{k}")) for k in ["x", "y", "tx", "ty", "allx", "ally", "graph"]}
    test_idx = [int(l) for l in open(os.path.join(src, f"ind.{name}.test.index"))]
    test_range = np.sort(test_idx)
    tx, ty = objs["tx"], objs["ty"]
    if name == "citeseer":
        full = range(min(test_idx), max(test_idx) + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_range - min(test_range), :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_range - min(test_range), :] = ty
        ty = ty_ext
    feats = sp.vstack((objs["allx"], tx)).tolil()
    feats[test_idx, :] = feats[test_range, :]
    onehot = np.vstack((objs["ally"], ty))
    onehot[test_idx, :] = onehot[test_range, :]
    labels = onehot.argmax(1).tolist()
    feats = feats.tocsr()
    rows = []
    for i in range(feats.shape[0]):
        s, e = feats.indptr[i], feats.indptr[i + 1]
        rows.append(sorted(zip(feats.indices[s:e].tolist(), feats.data[s:e].tolist())))
    edges = [(u, v) for u, nbrs in objs["graph"].items() for v in nbrs]
    ny = objs["y"].shape[0]
    split = (list(range(ny)), list(range(ny, ny + 500)), sorted(test_range.tolist()))
    write_dataset(out, name, labels, onehot.shape[1], edges, rows, feats.shape[1], split, True)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("format", choices=["linqs", "planetoid"])
    ap.add_argument("src")
    ap.add_argument("name")
    ap.add_argument("out")
    ap.add_argument("--split-seed", type=int, default=0)
    a = ap.parse_args()
    if a.format == "linqs":
        convert_linqs(a.src, a.name, a.out, a.split_seed)
    else:
        convert_planetoid(a.src, a.name, a.out)


if __name__ == "__main__":
    main()
