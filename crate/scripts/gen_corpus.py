#!/usr/bin/env python3
"""Regenerates scenarios/corpus/*.json.

Expected rows and debts are computed here with exact rational arithmetic,
independently of the Rust implementation, and written into each file's
"expectations" section. Every event time is checked to land on the 0.01 s
grid so that a fixed-step integrator with dt = 0.01 is exact up to rounding.

Usage: python3 scripts/gen_corpus.py
"""

import json
from collections import deque
from fractions import Fraction as F
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "scenarios" / "corpus"
GRID = F(1, 100)
COST_MEM = F(5, 100)
COST_STORAGE = F(1, 1000)


def host(hid, pe_mips, ram=4096, policy="time_shared", bw=10000, storage=1000000):
    return {
        "id": hid,
        "pes": [{"id": i, "mips": m} for i, m in enumerate(pe_mips)],
        "ram": ram,
        "bw": bw,
        "storage": storage,
        "vm_scheduler": policy,
    }


def vm(vid, mips, pes=1, ram=512, policy="time_shared", bw=1000, image=10000):
    return {
        "id": vid,
        "mips": mips,
        "pes": pes,
        "ram": ram,
        "bw": bw,
        "image_size": image,
        "vmm": "Xen",
        "cloudlet_scheduler": policy,
    }


def cloudlet(cid, length, pes=1, vm_id=None):
    c = {"id": cid, "length": length, "pes": pes, "file_size": 300, "output_size": 300, "utilization": "full"}
    if vm_id is not None:
        c["vm"] = vm_id
    return c


def scenario(name, datacenters, brokers, num_users=1):
    return {
        "schema": 1,
        "name": name,
        "simulation": {"num_users": num_users, "trace": False},
        "datacenters": datacenters,
        "brokers": brokers,
    }


def dc(name, hosts):
    return {"name": name, "hosts": hosts}


def broker(vms, cloudlets, name="Broker"):
    return {"name": name, "vms": vms, "cloudlets": cloudlets}


# ---------------------------------------------------------------- exact model


def place(s):
    """First-fit placement, datacenters tried in order. Returns vmid -> dc index."""
    state = []
    for d in s["datacenters"]:
        hosts = []
        for h in d["hosts"]:
            hosts.append({
                "ram": h["ram"], "bw": h["bw"], "storage": h["storage"],
                "policy": h["vm_scheduler"],
                "pe": [F(p["mips"]) for p in h["pes"]],
                "owner": [None] * len(h["pes"]),
                "alloc": F(0),
            })
        state.append(hosts)

    def admit(hst, v):
        if hst["ram"] < v["ram"] or hst["bw"] < v["bw"] or hst["storage"] < v["image_size"]:
            return False
        need = F(v["mips"]) * v["pes"]
        if hst["policy"] == "time_shared":
            if hst["alloc"] + need > sum(hst["pe"]):
                return False
        else:
            free = [i for i, o in enumerate(hst["owner"]) if o is None and F(v["mips"]) <= hst["pe"][i]]
            if len(free) < v["pes"]:
                return False
            for i in free[: v["pes"]]:
                hst["owner"][i] = v["id"]
        hst["alloc"] += need
        hst["ram"] -= v["ram"]
        hst["bw"] -= v["bw"]
        hst["storage"] -= v["image_size"]
        return True

    pending = [v for b in s["brokers"] for v in b["vms"]]
    placed = {}
    for di, hosts in enumerate(state):
        left = []
        for v in pending:
            if any(admit(h, v) for h in hosts):
                placed[v["id"]] = di
            else:
                left.append(v)
        pending = left
    return placed


def run_vm(v, jobs):
    """jobs: list of (id, length, pes) submitted at t=0. Returns id -> (start, finish)."""
    m, p, policy = F(v["mips"]), v["pes"], v["cloudlet_scheduler"]
    waiting = deque({"id": i, "rem": F(l), "pes": d} for i, l, d in jobs)
    running, free, t, out = [], p, F(0), {}

    def promote():
        nonlocal free
        while waiting:
            if policy == "space_shared" and waiting[0]["pes"] > free:
                break
            j = waiting.popleft()
            if policy == "space_shared":
                free -= j["pes"]
            j["start"] = t
            running.append(j)

    promote()
    while running:
        if policy == "time_shared":
            demand = sum(j["pes"] for j in running)
            scale = min(F(1), F(p, demand))
            rates = [m * j["pes"] * scale for j in running]
        else:
            rates = [m * j["pes"] for j in running]
        dt = min(j["rem"] / r for j, r in zip(running, rates))
        t += dt
        assert t % GRID == 0, f"event at {t} is off the 0.01 s grid"
        keep = []
        for j, r in zip(running, rates):
            j["rem"] -= r * dt
            if j["rem"] == 0:
                out[j["id"]] = (j["start"], t)
                if policy == "space_shared":
                    free += j["pes"]
            else:
                keep.append(j)
        running = keep
        promote()
    return out


def expectations(s):
    placed = place(s)
    ndc = len(s["datacenters"])
    rows, failed, debts = [], [], {}
    for bi, b in enumerate(s["brokers"]):
        user = 2 + ndc + bi
        own = sorted(v["id"] for v in b["vms"] if v["id"] in placed)
        vms = {v["id"]: v for v in b["vms"]}
        for v in b["vms"]:
            if v["id"] in placed:
                key = (s["datacenters"][placed[v["id"]]]["name"], user)
                debts[key] = debts.get(key, F(0)) + COST_MEM * v["ram"] + COST_STORAGE * v["image_size"]
        per_vm, rr = {}, 0
        for c in b["cloudlets"]:
            target = c.get("vm")
            if target is None and own:
                target = own[rr % len(own)]
                rr += 1
            if target in own and c["pes"] <= vms[target]["pes"]:
                per_vm.setdefault(target, []).append((c["id"], c["length"], c["pes"]))
            else:
                failed.append({"cloudlet_id": c["id"], "status": "FAILED", "vm_id": target} if target is not None
                              else {"cloudlet_id": c["id"], "status": "FAILED"})
        for vid, jobs in per_vm.items():
            for cid, (start, finish) in run_vm(vms[vid], jobs).items():
                rows.append({
                    "cloudlet_id": cid,
                    "status": "SUCCESS",
                    "datacenter_id": 2 + placed[vid],
                    "vm_id": vid,
                    "time": finish - start,
                    "start_time": start,
                    "finish_time": finish,
                })
    rows.sort(key=lambda r: (r["finish_time"], r["cloudlet_id"]))
    failed.sort(key=lambda r: r["cloudlet_id"])

    def num(x):
        return int(x) if x.denominator == 1 else float(x)

    for r in rows:
        for k in ("time", "start_time", "finish_time"):
            r[k] = num(r[k])
    return {
        "rows": rows + failed,
        "debts": [{"datacenter": d, "user_id": u, "debt": float(v)} for (d, u), v in sorted(debts.items())],
    }


# ---------------------------------------------------------------- corpus


def staircase(k, unit, mips, policy="time_shared", first_id=0, vm_id=0):
    return [cloudlet(first_id + i, unit * (i + 1), vm_id=vm_id) for i in range(k)]


def corpus():
    one_host = lambda **kw: [dc("Datacenter_0", [host(0, [1000], **kw)])]
    out = {}

    out["ts_k2_equal"] = scenario("ts_k2_equal", one_host(),
                                  [broker([vm(0, 1000)], [cloudlet(0, 10000, vm_id=0), cloudlet(1, 10000, vm_id=0)])])
    for k in (3, 4, 5, 6, 8):
        out[f"ts_k{k}_staircase"] = scenario(f"ts_k{k}_staircase", one_host(),
                                             [broker([vm(0, 1000)], staircase(k, 1000, 1000))])
    out["ts_k10_stress"] = scenario(
        "ts_k10_stress",
        [dc("Datacenter_0", [host(0, [500, 500], ram=8192)])],
        [broker([vm(0, 500), vm(1, 500)],
                staircase(10, 500, 500) + [cloudlet(10 + i, 2500, vm_id=1) for i in range(10)])],
    )
    out["ts_multi_pe_oversubscribed"] = scenario(
        "ts_multi_pe_oversubscribed",
        [dc("Datacenter_0", [host(0, [300, 300])])],
        [broker([vm(0, 300, pes=2)],
                [cloudlet(0, 2400, pes=2, vm_id=0), cloudlet(1, 600, vm_id=0), cloudlet(2, 1200, vm_id=0)])],
    )
    out["ts_two_pe_undersubscribed"] = scenario(
        "ts_two_pe_undersubscribed",
        [dc("Datacenter_0", [host(0, [1000, 1000])])],
        [broker([vm(0, 1000, pes=2)], [cloudlet(0, 3000, vm_id=0), cloudlet(1, 5000, vm_id=0)])],
    )
    out["ss_fifo_depth2"] = scenario(
        "ss_fifo_depth2", one_host(),
        [broker([vm(0, 1000, policy="space_shared")], [cloudlet(0, 5000, vm_id=0), cloudlet(1, 5000, vm_id=0)])])
    for depth, lengths in ((3, [2000, 7000, 1500]), (4, [1000, 1000, 2500, 500]), (5, [3000, 100, 4200, 900, 50])):
        out[f"ss_fifo_depth{depth}"] = scenario(
            f"ss_fifo_depth{depth}", one_host(),
            [broker([vm(0, 1000, policy="space_shared")], [cloudlet(i, l, vm_id=0) for i, l in enumerate(lengths)])])
    out["ss_head_of_line"] = scenario(
        "ss_head_of_line",
        [dc("Datacenter_0", [host(0, [100, 100])])],
        [broker([vm(0, 100, pes=2, policy="space_shared")],
                [cloudlet(0, 100, vm_id=0), cloudlet(1, 400, pes=2, vm_id=0), cloudlet(2, 100, vm_id=0),
                 cloudlet(3, 250, vm_id=0)])],
    )
    out["host_space_shared_mixed_vms"] = scenario(
        "host_space_shared_mixed_vms",
        [dc("Datacenter_0", [host(0, [1000, 1000], policy="space_shared")])],
        [broker([vm(0, 800), vm(1, 1000, policy="space_shared")],
                [cloudlet(0, 1600, vm_id=0), cloudlet(1, 800, vm_id=0),
                 cloudlet(2, 3000, vm_id=1), cloudlet(3, 1000, vm_id=1)])],
    )
    out["multi_dc_fallback"] = scenario(
        "multi_dc_fallback",
        [dc("Datacenter_0", [host(0, [1000], ram=1024)]), dc("Datacenter_1", [host(0, [2000], ram=4096)])],
        [broker([vm(0, 250), vm(1, 250), vm(2, 500)],
                [cloudlet(0, 1000, vm_id=0), cloudlet(1, 2000, vm_id=1), cloudlet(2, 2000, vm_id=2)])],
    )
    out["round_robin_unbound"] = scenario(
        "round_robin_unbound",
        [dc("Datacenter_0", [host(0, [500]), host(1, [1000])])],
        [broker([vm(0, 500), vm(1, 1000)], [cloudlet(i, 2000) for i in range(4)])],
    )
    out["vm_rejected_failed_cloudlet"] = scenario(
        "vm_rejected_failed_cloudlet",
        [dc("Datacenter_0", [host(0, [1000], policy="space_shared")])],
        [broker([vm(0, 1000), vm(1, 1000)], [cloudlet(0, 4000, vm_id=0), cloudlet(1, 4000, vm_id=1)])],
    )
    out["two_brokers"] = scenario(
        "two_brokers",
        [dc("Datacenter_0", [host(0, [1000, 1000], ram=8192)])],
        [broker([vm(0, 1000, ram=1024)], [cloudlet(0, 30000, vm_id=0)], name="Broker_0"),
         broker([vm(1, 500, ram=2048)], [cloudlet(1, 30000, vm_id=1), cloudlet(2, 10000, vm_id=1)], name="Broker_1")],
        num_users=2,
    )
    out["four_vms_shared_host"] = scenario(
        "four_vms_shared_host",
        [dc("Datacenter_0", [host(0, [1000] * 4, ram=8192)])],
        [broker([vm(i, 1000) for i in range(4)],
                [cloudlet(2 * i + j, 1000 * (i + 1) * (j + 1), vm_id=i) for i in range(4) for j in range(2)])],
    )
    out["large_scale_numbers"] = scenario(
        "large_scale_numbers",
        [dc("Datacenter_0", [host(0, [40000, 40000], ram=65536)])],
        [broker([vm(0, 40000, pes=2, ram=16384)],
                [cloudlet(0, 8_000_000, vm_id=0), cloudlet(1, 16_000_000, vm_id=0), cloudlet(2, 4_000_000, pes=2, vm_id=0)])],
    )
    out["vms_without_cloudlets"] = scenario(
        "vms_without_cloudlets", one_host(ram=2048),
        [broker([vm(0, 500), vm(1, 500)], [])])
    out["no_brokers"] = scenario("no_brokers", one_host(), [])
    return out


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, s in corpus().items():
        s["expectations"] = expectations(s)
        (OUT / f"{name}.json").write_text(json.dumps(s, indent=2) + "\n")
        print(f"wrote {name}.json: {len(s['expectations']['rows'])} rows")


if __name__ == "__main__":
    main()
