#!/usr/bin/env python3
# Copyright 2026 The driftgate Authors
# SPDX-License-Identifier: Apache-2.0
"""Recomputes summary.json from results.csv and compares within 1e-9."""

import csv
import json
import math
import subprocess
import sys
from collections import OrderedDict
from pathlib import Path


def recompute(rows):
    groups = OrderedDict()
    for r in rows:
        cap = r["gate_capacity"]
        key = (r["method"], int(r["memory_size"]), cap)
        g = groups.setdefault(key, {"rows": 0, "failed": 0, "j": OrderedDict(), "f": OrderedDict()})
        g["rows"] += 1
        if r["status"] != "ok":
            g["failed"] += 1
            continue
        d = int(r["delta_c"])
        g["j"].setdefault(d, []).append(float(r["mean_j"]))
        g["f"].setdefault(d, []).append(float(r["forgetting"]))
    out = []
    for (method, n, cap), g in groups.items():
        per = [sum(v) / len(v) for v in g["j"].values()]
        forg = [sum(v) / len(v) for v in g["f"].values()]
        mean = sum(per) / len(per) if per else 0.0
        std = math.sqrt(sum((x - mean) ** 2 for x in per) / len(per)) if per else 0.0
        out.append({
            "method": method,
            "memory_size": n,
            "gate_capacity": cap if cap == "dynamic" else int(cap),
            "rows": g["rows"],
            "failed": g["failed"],
            "mean_j": mean,
            "std_j": std,
            "forgetting": sum(forg) / len(forg) if forg else 0.0,
            "per_delta": [{"delta": d, "mean_j": p, "seeds": len(g["j"][d])} for d, p in zip(g["j"], per)],
        })
    return out


def close(a, b):
    if isinstance(a, float) or isinstance(b, float):
        return abs(float(a) - float(b)) <= 1e-9
    return a == b


def compare(expect, got, path="groups"):
    if isinstance(expect, dict):
        if set(expect) != set(got):
            return [f"{path}: keys {sorted(expect)} != {sorted(got)}"]
        return [e for k in expect for e in compare(expect[k], got[k], f"{path}.{k}")]
    if isinstance(expect, list):
        if len(expect) != len(got):
            return [f"{path}: length {len(expect)} != {len(got)}"]
        return [e for i, (x, y) in enumerate(zip(expect, got)) for e in compare(x, y, f"{path}[{i}]")]
    return [] if close(expect, got) else [f"{path}: {expect} != {got}"]


def main():
    if len(sys.argv) == 4:
        # cli config outdir: run the experiment first
        cli, config, out = sys.argv[1:]
        subprocess.run([cli, "run", "--config", config, "--out", out], check=True, stdout=subprocess.DEVNULL)
        results = Path(out)
    elif len(sys.argv) == 2:
        results = Path(sys.argv[1])
    else:
        sys.exit("usage: recompute_summary.py RESULTS_DIR | CLI CONFIG OUTDIR")
    with open(results / "results.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    expect = recompute(rows)
    got = json.loads((results / "summary.json").read_text())["groups"]
    errors = compare(expect, got)
    for e in errors:
        print(e)
    print(f"{len(expect)} groups, {len(rows)} rows: {'OK' if not errors else 'MISMATCH'}")
    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main())
