#!/usr/bin/env python3
"""Generates the bundled demo case: a 4x3 street grid with a gas boiler and a
waste-heat source at opposite corners, ten consumers and an hourly year of
demand and outdoor temperature."""

import argparse
import json
import pathlib

import numpy as np
import pandas as pd

SPACING = 150.0
COLS, ROWS = 4, 3
BOILER_AT = (0, 0)
WASTE_AT = (3, 2)
# street segments between grid positions; two rings leave route choices open
STREETS = [
    ((0, 0), (1, 0)), ((1, 0), (2, 0)), ((2, 0), (3, 0)),
    ((0, 1), (1, 1)), ((1, 1), (2, 1)), ((2, 1), (3, 1)),
    ((0, 2), (1, 2)), ((2, 2), (3, 2)),
    ((0, 0), (0, 1)), ((1, 1), (1, 2)), ((2, 0), (2, 1)),
    ((3, 1), (3, 2)), ((1, 0), (1, 1)),
]
SHUTDOWN_START = 4800  # hour index of the summer maintenance stop
SHUTDOWN_HOURS = 552


def position_name(c, r):
    return f"{c}{r}"


def build_network(rng):
    nodes, edges, consumers = [], [], {}
    peaks = {}
    for r in range(ROWS):
        for c in range(COLS):
            name = position_name(c, r)
            x, y = c * SPACING, r * SPACING
            if (c, r) == BOILER_AT or (c, r) == WASTE_AT:
                nodes.append({"id": f"{name}f", "kind": "producer-feed", "x": x, "y": y + 1})
                nodes.append({"id": f"{name}r", "kind": "producer-return", "x": x, "y": y})
            else:
                nodes.append({"id": f"{name}f", "kind": "consumer-feed", "x": x, "y": y + 1})
                nodes.append({"id": f"{name}r", "kind": "consumer-return", "x": x, "y": y})
                cid = f"C{name}"
                edges.append({"id": cid, "kind": "consumer", "tail": f"{name}f", "head": f"{name}r"})
                peaks[cid] = float(rng.uniform(0.3e6, 1.2e6))
    bc = position_name(*BOILER_AT)
    wc = position_name(*WASTE_AT)
    edges.append({"id": "boiler", "kind": "producer", "tail": f"{bc}r", "head": f"{bc}f"})
    edges.append({"id": "waste", "kind": "producer", "tail": f"{wc}r", "head": f"{wc}f"})
    for a, b in STREETS:
        na, nb = position_name(*a), position_name(*b)
        length = SPACING * (abs(a[0] - b[0]) + abs(a[1] - b[1]))
        edges.append({"id": f"s{na}-{nb}", "kind": "pipe", "tail": f"{na}f", "head": f"{nb}f", "length": length})
        edges.append({"id": f"r{nb}-{na}", "kind": "pipe", "tail": f"{nb}r", "head": f"{na}r", "length": length})
    producers = {
        "boiler": {
            "supply_temperature": 80.0, "max_capacity": 15e6, "efficiency": 0.9,
            "capex_per_kw": 225.0, "capex_fixed": 2200.0, "fixed_opex": 235.0, "heat_price": 0.0319,
            "pump_efficiency": 0.81, "reference_return_temperature": 20.0, "waste_heat": False,
        },
        "waste": {
            "supply_temperature": 65.0, "max_capacity": 2e6, "efficiency": 1.0,
            "capex_per_kw": 0.0, "capex_fixed": 0.0, "fixed_opex": 0.0, "heat_price": 0.01,
            "pump_efficiency": 0.81, "reference_return_temperature": 20.0, "waste_heat": True,
        },
    }
    return nodes, edges, peaks, producers


def build_series(rng, peaks):
    hours = np.arange(8760)
    day = hours / 24.0
    annual = 9.0 - 10.0 * np.cos(2 * np.pi * (day - 20.0) / 365.0)
    daily = -2.5 * np.cos(2 * np.pi * (hours % 24 - 3) / 24.0)
    noise = np.zeros(8760)
    eps = rng.normal(0.0, 0.6, 8760)
    for i in range(1, 8760):
        noise[i] = 0.97 * noise[i - 1] + eps[i]
    temperature = np.round(annual + daily + noise, 2)

    base = 0.06
    hdd = np.clip(18.0 - temperature, 0.0, None)
    shape = base + (1.0 - base) * hdd / hdd.max()
    data = {"timestamp": pd.date_range("2023-01-01", periods=8760, freq="h").strftime("%Y-%m-%d %H:%M")}
    for cid, peak in peaks.items():
        wobble = 1.0 + 0.05 * rng.standard_normal(8760)
        d = np.clip(peak * shape * wobble, 0.0, None)
        d[SHUTDOWN_START:SHUTDOWN_START + SHUTDOWN_HOURS] = 0.0
        data[cid] = np.round(d, 1)
    data["temperature"] = temperature
    return pd.DataFrame(data)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/demo")
    ap.add_argument("--seed", type=int, default=20231)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    nodes, edges, peaks, producers = build_network(rng)
    series = build_series(rng, peaks)
    consumers = {cid: {"peak_demand": float(series[cid].max())} for cid in peaks}
    network = {
        "schema_version": 1,
        "reference_node": f"{position_name(*BOILER_AT)}r",
        "nodes": nodes,
        "edges": edges,
        "consumers": consumers,
        "producers": producers,
    }
    (out / "network.json").write_text(json.dumps(network, indent=2) + "\n")
    series.to_csv(out / "series.csv", index=False)
    (out / "config.txt").write_text(
        "# demo optimizer settings\n"
        "xi_schedule = 50, 150, 400, 1000\n"
        "max_outer = 20\n"
        "max_inner = 1500\n"
        "removal_threshold = 0.01\n"
    )
    total = sum(c["peak_demand"] for c in consumers.values())
    print(f"{len(consumers)} consumers, {total / 1e6:.2f} MW total peak, "
          f"{sum(e['kind'] == 'pipe' for e in edges)} candidate pipes")


if __name__ == "__main__":
    main()
